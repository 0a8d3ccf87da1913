// Copyright 2026 The ltu-eval Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ltu/data.h"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "gmock/gmock.h"
#include "gtest/gtest.h"
#include "ltu/defender.h"
#include "ltu/evaluator.h"
#include "testing/status_matchers.h"

namespace ltu {
namespace {

using ::ltu::testing::StatusIs;
using ::testing::HasSubstr;

std::vector<Sample> Rows(const LabeledDataset& ds) {
  std::vector<Sample> rows;
  for (size_t i = 0; i < ds.size(); ++i) rows.push_back(ds.sample(i));
  return rows;
}

bool SampleLess(const Sample& a, const Sample& b) {
  return std::tie(a.features, a.label) < std::tie(b.features, b.label);
}

std::string TempPath(const std::string& name) {
  return (std::filesystem::temp_directory_path() /
          ("ltu_data_test_" + name))
      .string();
}

TEST(LabeledDatasetTest, CreateValidates) {
  EXPECT_THAT(LabeledDataset::Create(1, 1, {0.0}, {0}),
              StatusIs(absl::StatusCode::kInvalidArgument));
  EXPECT_THAT(LabeledDataset::Create(2, 1, {}, {}),
              StatusIs(absl::StatusCode::kInvalidArgument));
  EXPECT_THAT(LabeledDataset::Create(2, 2, {0.0}, {0}),
              StatusIs(absl::StatusCode::kInvalidArgument));
  EXPECT_THAT(LabeledDataset::Create(2, 1, {0.0}, {2}),
              StatusIs(absl::StatusCode::kInvalidArgument));
  EXPECT_THAT(LabeledDataset::Create(2, 1, {NAN}, {0}),
              StatusIs(absl::StatusCode::kInvalidArgument));
  ASSERT_OK_AND_ASSIGN(LabeledDataset ds,
                       LabeledDataset::Create(2, 2, {1, 2, 3, 4}, {0, 1}));
  EXPECT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.sample(1), (Sample{{3, 4}, 1}));
}

TEST(LabeledDatasetTest, DerivedCopies) {
  ASSERT_OK_AND_ASSIGN(LabeledDataset ds,
                       LabeledDataset::Create(3, 1, {0, 1, 2}, {0, 1, 2}));
  LabeledDataset without = ds.Without(1);
  EXPECT_EQ(Rows(without), (std::vector<Sample>{{{0}, 0}, {{2}, 2}}));
  EXPECT_EQ(without.WithInserted(1, ds.sample(1)), ds);
  EXPECT_EQ(ds.WithLabel(0, 2).label(0), 2);
  EXPECT_EQ(ds.Find(Sample{{2}, 2}), 2u);
  EXPECT_FALSE(ds.Find(Sample{{2}, 1}).has_value());
  EXPECT_TRUE(ds.Without(0).Without(0).Without(0).empty());
}

TEST(GenerateBlobsTest, OneSamplePerLabel) {
  ASSERT_OK_AND_ASSIGN(LabeledDataset ds, GenerateBlobs(2, 2, 1, 10, 0.01, 9));
  ASSERT_EQ(ds.size(), 2u);
  std::vector<int> labels = ds.labels();
  std::sort(labels.begin(), labels.end());
  EXPECT_EQ(labels, (std::vector<int>{0, 1}));
}

TEST(GenerateBlobsTest, SameSeedBitIdentical) {
  ASSERT_OK_AND_ASSIGN(LabeledDataset a, GenerateBlobs(3, 4, 20, 5, 1, 77));
  ASSERT_OK_AND_ASSIGN(LabeledDataset b, GenerateBlobs(3, 4, 20, 5, 1, 77));
  EXPECT_EQ(a, b);
  ASSERT_OK_AND_ASSIGN(LabeledDataset c, GenerateBlobs(3, 4, 20, 5, 1, 78));
  EXPECT_NE(a, c);
}

TEST(GenerateBlobsTest, ClassSizesAndCenters) {
  ASSERT_OK_AND_ASSIGN(LabeledDataset ds, GenerateBlobs(3, 4, 50, 6, 1e-12, 1));
  std::map<int, int> count;
  for (int l : ds.labels()) ++count[l];
  EXPECT_EQ(count, (std::map<int, int>{{0, 50}, {1, 50}, {2, 50}}));
  // Negligible noise puts every sample on its center; centers are `sep` apart.
  std::map<int, std::vector<double>> center;
  for (size_t i = 0; i < ds.size(); ++i) {
    auto f = ds.features(i);
    center[ds.label(i)] = std::vector<double>(f.begin(), f.end());
  }
  for (int a = 0; a < 3; ++a) {
    for (int b = a + 1; b < 3; ++b) {
      double d2 = 0.0;
      for (int j = 0; j < 4; ++j) {
        d2 += (center[a][j] - center[b][j]) * (center[a][j] - center[b][j]);
      }
      EXPECT_NEAR(std::sqrt(d2), 6.0, 1e-9);
    }
  }
}

TEST(GenerateBlobsTest, InvalidSizes) {
  EXPECT_THAT(GenerateBlobs(1, 2, 10, 1, 1, 0),
              StatusIs(absl::StatusCode::kInvalidArgument));
  EXPECT_THAT(GenerateBlobs(2, 0, 10, 1, 1, 0),
              StatusIs(absl::StatusCode::kInvalidArgument));
  EXPECT_THAT(GenerateBlobs(2, 2, 0, 1, 1, 0),
              StatusIs(absl::StatusCode::kInvalidArgument));
  EXPECT_THAT(GenerateBlobs(2, 2, 10, 1, -1, 0),
              StatusIs(absl::StatusCode::kInvalidArgument));
}

TEST(GenerateBlobsTest, LogisticDefenderReachesHighHeldOutAccuracy) {
  ASSERT_OK_AND_ASSIGN(LabeledDataset source,
                       GenerateBlobs(3, 4, 100, 5, 1, 2024));
  ASSERT_OK_AND_ASSIGN(auto parts, SplitSource(source, 0.5, 11));
  ASSERT_OK_AND_ASSIGN(DefenderModel model,
                       Train(TrainerConfig{}, parts.first, 0));
  ASSERT_OK_AND_ASSIGN(UtilityReport u, UtilityScore(model, parts.second));
  EXPECT_GT(u.a_d, 0.95);
}

TEST(SplitSourceTest, EvenSplitIsAPartition) {
  ASSERT_OK_AND_ASSIGN(LabeledDataset source, GenerateBlobs(2, 3, 5, 4, 1, 3));
  ASSERT_OK_AND_ASSIGN(auto parts, SplitSource(source, 0.5, 8));
  EXPECT_EQ(parts.first.size(), 5u);
  EXPECT_EQ(parts.second.size(), 5u);
  EXPECT_OK(CheckDisjoint(parts.first, parts.second));
  std::vector<Sample> joined = Rows(parts.first);
  for (const Sample& s : Rows(parts.second)) joined.push_back(s);
  std::vector<Sample> original = Rows(source);
  std::sort(joined.begin(), joined.end(), SampleLess);
  std::sort(original.begin(), original.end(), SampleLess);
  EXPECT_EQ(joined, original);
}

TEST(SplitSourceTest, ShuffledEvenSplitAtSize200) {
  ASSERT_OK_AND_ASSIGN(LabeledDataset source,
                       GenerateBlobs(2, 2, 100, 4, 1, 4));
  ASSERT_OK_AND_ASSIGN(auto parts, SplitSource(source, 0.5, 5));
  EXPECT_EQ(parts.first.size(), 100u);
  EXPECT_EQ(parts.second.size(), 100u);
  // Shuffled: the defender part is not the source prefix.
  const std::vector<Sample> rows = Rows(source);
  EXPECT_NE(Rows(parts.first),
            std::vector<Sample>(rows.begin(), rows.begin() + 100));
}

TEST(SplitSourceTest, SeedDeterminesPartition) {
  ASSERT_OK_AND_ASSIGN(LabeledDataset source, GenerateBlobs(2, 2, 50, 4, 1, 6));
  ASSERT_OK_AND_ASSIGN(auto a, SplitSource(source, 0.5, 100));
  ASSERT_OK_AND_ASSIGN(auto b, SplitSource(source, 0.5, 100));
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
  int differing = 0;
  for (uint64_t s = 0; s < 50; ++s) {
    ASSERT_OK_AND_ASSIGN(auto c, SplitSource(source, 0.5, 1000 + s));
    std::vector<Sample> x = Rows(a.first), y = Rows(c.first);
    std::sort(x.begin(), x.end(), SampleLess);
    std::sort(y.begin(), y.end(), SampleLess);
    differing += x != y ? 1 : 0;
  }
  EXPECT_EQ(differing, 50);
}

TEST(SplitSourceTest, RejectsBadFractions) {
  ASSERT_OK_AND_ASSIGN(LabeledDataset source, GenerateBlobs(2, 2, 5, 4, 1, 6));
  EXPECT_THAT(SplitSource(source, 0.0, 1),
              StatusIs(absl::StatusCode::kInvalidArgument));
  EXPECT_THAT(SplitSource(source, 1.0, 1),
              StatusIs(absl::StatusCode::kInvalidArgument));
  EXPECT_FALSE(SplitSource(source, 0.01, 1).ok());
}

int ChangedLabels(const LabeledDataset& a, const LabeledDataset& b) {
  int changed = 0;
  for (size_t i = 0; i < a.size(); ++i) changed += a.label(i) != b.label(i);
  return changed;
}

TEST(FlipLabelsTest, ZeroFractionIsIdentity) {
  ASSERT_OK_AND_ASSIGN(LabeledDataset ds, GenerateBlobs(3, 2, 30, 4, 1, 7));
  ASSERT_OK_AND_ASSIGN(LabeledDataset flipped, FlipLabels(ds, 0.0, 1));
  EXPECT_EQ(flipped, ds);
}

TEST(FlipLabelsTest, TwentyPercentOfHundred) {
  ASSERT_OK_AND_ASSIGN(LabeledDataset ds, GenerateBlobs(4, 2, 25, 4, 1, 7));
  ASSERT_OK_AND_ASSIGN(LabeledDataset flipped, FlipLabels(ds, 0.2, 1));
  EXPECT_EQ(ChangedLabels(ds, flipped), 20);
  EXPECT_EQ(flipped.flat_features(), ds.flat_features());
  ASSERT_OK_AND_ASSIGN(LabeledDataset again, FlipLabels(ds, 0.2, 1));
  EXPECT_EQ(again, flipped);
}

TEST(FlipLabelsTest, FullFractionChangesEveryLabel) {
  ASSERT_OK_AND_ASSIGN(LabeledDataset ds, GenerateBlobs(3, 2, 20, 4, 1, 7));
  ASSERT_OK_AND_ASSIGN(LabeledDataset flipped, FlipLabels(ds, 1.0, 2));
  EXPECT_EQ(ChangedLabels(ds, flipped), static_cast<int>(ds.size()));
  EXPECT_THAT(FlipLabels(ds, 1.5, 2),
              StatusIs(absl::StatusCode::kInvalidArgument));
}

TEST(CsvTest, RoundTripIsExact) {
  ASSERT_OK_AND_ASSIGN(LabeledDataset ds, GenerateBlobs(3, 4, 10, 4, 1, 12));
  const std::string path = TempPath("roundtrip.csv");
  ASSERT_OK(SaveCsv(ds, path));
  ASSERT_OK_AND_ASSIGN(LabeledDataset loaded, LoadCsv(path, 3));
  EXPECT_EQ(loaded, ds);
  std::filesystem::remove(path);
}

TEST(CsvTest, WrongArityIsSchemaErrorWithLine) {
  const std::string path = TempPath("arity.csv");
  std::ofstream(path) << "f0,f1,label\n1,2,0\n1,2,3,1\n";
  EXPECT_THAT(LoadCsv(path), StatusIs(absl::StatusCode::kFailedPrecondition,
                                      HasSubstr(":3: schema error")));
  std::filesystem::remove(path);
}

TEST(CsvTest, NonIntegerLabelIsParseError) {
  const std::string path = TempPath("label.csv");
  std::ofstream(path) << "f0,label\n1.5,0\n2.5,0.5\n";
  EXPECT_THAT(LoadCsv(path), StatusIs(absl::StatusCode::kInvalidArgument,
                                      HasSubstr(":3: parse error")));
  std::filesystem::remove(path);
}

TEST(CsvTest, BadHeaderAndMissingFile) {
  const std::string path = TempPath("header.csv");
  std::ofstream(path) << "x,y\n1,0\n";
  EXPECT_THAT(LoadCsv(path), StatusIs(absl::StatusCode::kFailedPrecondition));
  std::filesystem::remove(path);
  EXPECT_FALSE(LoadCsv(TempPath("does_not_exist.csv")).ok());
}

TEST(LtuRoundTest, SingletonSetsStillRandomizeOrder) {
  ASSERT_OK_AND_ASSIGN(LabeledDataset d, LabeledDataset::Create(2, 1, {0}, {0}));
  ASSERT_OK_AND_ASSIGN(LabeledDataset r, LabeledDataset::Create(2, 1, {1}, {1}));
  ASSERT_OK_AND_ASSIGN(LtuRoundFactory factory, LtuRoundFactory::Create(d, r));
  int first = 0;
  for (uint64_t s = 0; s < 200; ++s) {
    LtuRound round = factory.Make(s);
    EXPECT_TRUE(round.challenge.attack_defender.empty());
    EXPECT_TRUE(round.challenge.attack_reserved.empty());
    EXPECT_EQ(round.challenge.unlabeled(round.defender_slot), d.sample(0));
    EXPECT_EQ(round.challenge.unlabeled(Other(round.defender_slot)),
              r.sample(0));
    first += round.defender_slot == PairSlot::kFirst;
  }
  EXPECT_GT(first, 0);
  EXPECT_LT(first, 200);
}

TEST(LtuRoundTest, OrderIsFairOver10000Rounds) {
  ASSERT_OK_AND_ASSIGN(LabeledDataset source, GenerateBlobs(2, 2, 20, 4, 1, 3));
  ASSERT_OK_AND_ASSIGN(auto parts, SplitSource(source, 0.5, 4));
  ASSERT_OK_AND_ASSIGN(LtuRoundFactory factory,
                       LtuRoundFactory::Create(parts.first, parts.second));
  int first = 0;
  for (int64_t i = 0; i < 10000; ++i) {
    first += factory.Make(RoundSeed(99, i)).defender_slot == PairSlot::kFirst;
  }
  EXPECT_NEAR(first / 10000.0, 0.5, 0.02);
}

TEST(LtuRoundTest, RoundIntegrity) {
  ASSERT_OK_AND_ASSIGN(LabeledDataset source, GenerateBlobs(3, 2, 10, 4, 1, 5));
  ASSERT_OK_AND_ASSIGN(auto parts, SplitSource(source, 0.4, 6));
  const LabeledDataset& dd = parts.first;
  const LabeledDataset& dr = parts.second;
  ASSERT_OK_AND_ASSIGN(LtuRoundFactory factory, LtuRoundFactory::Create(dd, dr));
  for (uint64_t s = 0; s < 300; ++s) {
    const LtuRound round = factory.Make(s);
    const LtuChallenge& c = round.challenge;
    ASSERT_EQ(c.attack_defender.size(), dd.size() - 1);
    ASSERT_EQ(c.attack_reserved.size(), dr.size() - 1);
    const Sample d = dd.sample(round.defender_index);
    const Sample r = dr.sample(round.reserved_index);
    EXPECT_EQ(c.unlabeled(round.defender_slot), d);
    EXPECT_EQ(c.unlabeled(Other(round.defender_slot)), r);
    EXPECT_NE(c.u1, c.u2);
    EXPECT_FALSE(c.attack_defender.Find(d).has_value());
    EXPECT_FALSE(c.attack_reserved.Find(r).has_value());
    EXPECT_EQ(c.removed_position, round.defender_index);
    EXPECT_EQ(c.attack_defender.WithInserted(c.removed_position, d), dd);
    EXPECT_EQ(c.attack_reserved.WithInserted(round.reserved_index, r), dr);
    EXPECT_EQ(c.round_seed, s);
    // Pure function of the seed.
    const LtuRound again = factory.Make(s);
    EXPECT_EQ(again.defender_index, round.defender_index);
    EXPECT_EQ(again.reserved_index, round.reserved_index);
    EXPECT_EQ(again.defender_slot, round.defender_slot);
  }
}

TEST(LtuRoundTest, DrawsCoverBothSets) {
  ASSERT_OK_AND_ASSIGN(LabeledDataset source, GenerateBlobs(2, 2, 5, 4, 1, 5));
  ASSERT_OK_AND_ASSIGN(auto parts, SplitSource(source, 0.5, 6));
  ASSERT_OK_AND_ASSIGN(LtuRoundFactory factory,
                       LtuRoundFactory::Create(parts.first, parts.second));
  std::vector<int> d_hits(5, 0), r_hits(5, 0);
  for (uint64_t s = 0; s < 5000; ++s) {
    const LtuRound round = factory.Make(s);
    ++d_hits[round.defender_index];
    ++r_hits[round.reserved_index];
  }
  // Each index ~ Binomial(5000, 0.2): sd ~ 28.
  for (int h : d_hits) EXPECT_NEAR(h, 1000, 150);
  for (int h : r_hits) EXPECT_NEAR(h, 1000, 150);
}

TEST(LtuRoundTest, PinnedRounds) {
  ASSERT_OK_AND_ASSIGN(LabeledDataset source, GenerateBlobs(2, 2, 5, 4, 1, 5));
  ASSERT_OK_AND_ASSIGN(auto parts, SplitSource(source, 0.5, 6));
  ASSERT_OK_AND_ASSIGN(LtuRoundFactory factory,
                       LtuRoundFactory::Create(parts.first, parts.second));
  for (uint64_t s = 0; s < 50; ++s) {
    EXPECT_EQ(factory.MakeWithDefender(3, s).defender_index, 3u);
    EXPECT_EQ(factory.MakeWithReserved(2, s).reserved_index, 2u);
  }
}

TEST(LtuRoundTest, OverlapIsProtocolViolation) {
  ASSERT_OK_AND_ASSIGN(LabeledDataset d,
                       LabeledDataset::Create(2, 1, {0, 1}, {0, 1}));
  ASSERT_OK_AND_ASSIGN(LabeledDataset r,
                       LabeledDataset::Create(2, 1, {1, 2}, {1, 0}));
  EXPECT_THAT(LtuRoundFactory::Create(d, r),
              StatusIs(absl::StatusCode::kFailedPrecondition,
                       HasSubstr("protocol violation")));
  EXPECT_THAT(MakeLtuRound(d, r, 0),
              StatusIs(absl::StatusCode::kFailedPrecondition));
}

}  // namespace
}  // namespace ltu
