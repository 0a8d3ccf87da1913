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

#include "ltu/oracle.h"

#include <vector>

#include "gmock/gmock.h"
#include "gtest/gtest.h"
#include "ltu/rng.h"
#include "testing/status_matchers.h"

namespace ltu {
namespace {

using ::ltu::testing::StatusIs;

constexpr double kExact = 1e-12;

TEST(ExactPairStatsTest, PerfectlySeparated) {
  ASSERT_OK_AND_ASSIGN(PairStats s, ExactPairStats({0.1, 0.2}, {0.5, 0.9, 1}));
  EXPECT_EQ(s.p_r, 1.0);
  EXPECT_EQ(s.p_d, 0.0);
  EXPECT_EQ(s.tie_prob, 0.0);
  EXPECT_EQ(GapRuleAccuracy(s), 1.0);
}

TEST(ExactPairStatsTest, IdenticalConstants) {
  ASSERT_OK_AND_ASSIGN(PairStats s, ExactPairStats({3, 3, 3}, {3, 3}));
  EXPECT_EQ(s.tie_prob, 1.0);
  EXPECT_EQ(s.p_r, 0.0);
  EXPECT_EQ(s.p_d, 0.0);
  EXPECT_EQ(GapRuleAccuracy(s), 0.5);
}

TEST(ExactPairStatsTest, PairwiseExampleWithNinePairs) {
  // Of the 9 pairs only (0.6, 0.4) has f(r) < f(d).
  ASSERT_OK_AND_ASSIGN(PairStats s,
                       ExactPairStats({0.1, 0.3, 0.6}, {0.4, 0.7, 0.9}));
  EXPECT_NEAR(s.p_r, 8.0 / 9.0, kExact);
  EXPECT_NEAR(s.p_d, 1.0 / 9.0, kExact);
  EXPECT_EQ(s.tie_prob, 0.0);
}

TEST(ExactPairStatsTest, EmptyListsRejected) {
  EXPECT_FALSE(ExactPairStats({}, {1.0}).ok());
  EXPECT_FALSE(ExactPairStats({1.0}, {}).ok());
}

TEST(ExactPairStatsTest, ProbabilitiesSumToOne) {
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> d(1 + rng.UniformInt(30)), r(1 + rng.UniformInt(30));
    for (double& v : d) v = static_cast<double>(rng.UniformInt(5));
    for (double& v : r) v = static_cast<double>(rng.UniformInt(5));
    ASSERT_OK_AND_ASSIGN(PairStats s, ExactPairStats(d, r));
    for (double p : {s.p_r, s.p_d, s.tie_prob}) {
      EXPECT_GE(p, 0.0);
      EXPECT_LE(p, 1.0);
    }
    EXPECT_NEAR(s.p_r + s.p_d + s.tie_prob, 1.0, kExact);
  }
}

TEST(GapRuleAccuracyTest, Values) {
  EXPECT_EQ(GapRuleAccuracy({1.0, 0.0, 0.0}), 1.0);
  EXPECT_EQ(GapRuleAccuracy({0.3, 0.3, 0.4}), 0.5);
  EXPECT_NEAR(GapRuleAccuracy({0.42, 0.20, 0.38}), 0.61, kExact);
}

TEST(ExactExpectedLossesTest, TwoPointExample) {
  ASSERT_OK_AND_ASSIGN(ExpectedLosses e,
                       ExactExpectedLosses({0.0, 0.5}, {0.3, 0.4}));
  EXPECT_NEAR(e.e_d, 0.25, kExact);
  EXPECT_NEAR(e.e_r, 0.35, kExact);
  EXPECT_NEAR(LossRuleAccuracy(e.e_d, e.e_r), 0.55, kExact);
  // The pairwise rule gains nothing on the same losses.
  ASSERT_OK_AND_ASSIGN(PairStats s, ExactPairStats({0.0, 0.5}, {0.3, 0.4}));
  EXPECT_NEAR(s.p_r - s.p_d, 0.0, kExact);
}

TEST(ExactExpectedLossesTest, IdenticalAndExtremeLists) {
  ASSERT_OK_AND_ASSIGN(ExpectedLosses same,
                       ExactExpectedLosses({0.2, 0.7}, {0.2, 0.7}));
  EXPECT_EQ(same.e_d, same.e_r);
  EXPECT_EQ(LossRuleAccuracy(same.e_d, same.e_r), 0.5);
  ASSERT_OK_AND_ASSIGN(ExpectedLosses extreme,
                       ExactExpectedLosses({0, 0, 0}, {1, 1}));
  EXPECT_EQ(extreme.e_d, 0.0);
  EXPECT_EQ(extreme.e_r, 1.0);
  EXPECT_EQ(LossRuleAccuracy(extreme.e_d, extreme.e_r), 1.0);
}

TEST(ExactExpectedLossesTest, BoundViolation) {
  EXPECT_THAT(ExactExpectedLosses({0.2, 1.5}, {0.1}),
              StatusIs(absl::StatusCode::kOutOfRange));
  EXPECT_THAT(ExactExpectedLosses({0.2}, {-0.1}),
              StatusIs(absl::StatusCode::kOutOfRange));
}

JointPmf CounterexampleTable() {
  auto pmf = JointPmf::Create({0.0, 0.5, 1.0}, {0.0, 0.5, 1.0},
                              {{0.24, 0.24, 0.12},
                               {0.12, 0.12, 0.06},
                               {0.04, 0.04, 0.02}});
  return *pmf;
}

TEST(JointPmfTest, CounterexampleTableStats) {
  const JointPmf pmf = CounterexampleTable();
  const JointPmfSummary s = JointPmfStats(pmf);
  EXPECT_NEAR(s.gap, 0.15, kExact);
  EXPECT_NEAR(s.pairwise_margin, 0.22, kExact);
  const std::vector<double> rows = pmf.DefenderMarginal();
  const std::vector<double> cols = pmf.ReservedMarginal();
  EXPECT_NEAR(rows[0], 0.6, kExact);
  EXPECT_NEAR(rows[1], 0.3, kExact);
  EXPECT_NEAR(rows[2], 0.1, kExact);
  EXPECT_NEAR(cols[0], 0.4, kExact);
  EXPECT_NEAR(cols[1], 0.4, kExact);
  EXPECT_NEAR(cols[2], 0.2, kExact);
}

TEST(JointPmfTest, TwoPointExampleAsProductPmf) {
  ASSERT_OK_AND_ASSIGN(JointPmf pmf, JointPmf::Product({0.0, 0.5}, {0.5, 0.5},
                                                       {0.3, 0.4}, {0.5, 0.5}));
  const JointPmfSummary s = JointPmfStats(pmf);
  EXPECT_NEAR(s.gap, 0.10, kExact);
  EXPECT_NEAR(s.pairwise_margin, 0.0, kExact);
}

TEST(JointPmfTest, SymmetricTableHasNoSignal) {
  ASSERT_OK_AND_ASSIGN(JointPmf pmf,
                       JointPmf::Create({0, 1, 2}, {0, 1, 2},
                                        {{0.1, 0.05, 0.15},
                                         {0.05, 0.2, 0.1},
                                         {0.15, 0.1, 0.1}}));
  const JointPmfSummary s = JointPmfStats(pmf);
  EXPECT_NEAR(s.gap, 0.0, kExact);
  EXPECT_NEAR(s.pairwise_margin, 0.0, kExact);
}

TEST(JointPmfTest, InvalidTablesRejected) {
  EXPECT_FALSE(JointPmf::Create({0, 1}, {0, 1}, {{0.5, 0.5}, {0.5, 0.5}}).ok());
  EXPECT_FALSE(JointPmf::Create({0, 1}, {0, 1}, {{1.5, -0.5}, {0, 0}}).ok());
  EXPECT_FALSE(JointPmf::Create({0, 1}, {0, 1}, {{1.0}}).ok());
  EXPECT_FALSE(JointPmf::Create({}, {0}, {}).ok());
}

TEST(JointPmfTest, MarginalsMatchRandomTables) {
  Rng rng(11);
  for (int t = 0; t < 100; ++t) {
    const size_t rows = 1 + rng.UniformInt(6), cols = 1 + rng.UniformInt(6);
    std::vector<std::vector<double>> prob(rows, std::vector<double>(cols));
    double total = 0.0;
    for (auto& row : prob) {
      for (double& p : row) total += (p = rng.Uniform());
    }
    std::vector<double> row_sums(rows, 0.0), col_sums(cols, 0.0);
    for (size_t i = 0; i < rows; ++i) {
      for (size_t j = 0; j < cols; ++j) {
        prob[i][j] /= total;
        row_sums[i] += prob[i][j];
        col_sums[j] += prob[i][j];
      }
    }
    std::vector<double> ds(rows), rs(cols);
    for (double& v : ds) v = rng.Uniform();
    for (double& v : rs) v = rng.Uniform();
    ASSERT_OK_AND_ASSIGN(JointPmf pmf, JointPmf::Create(ds, rs, prob));
    const std::vector<double> md = pmf.DefenderMarginal();
    const std::vector<double> mr = pmf.ReservedMarginal();
    for (size_t i = 0; i < rows; ++i) EXPECT_NEAR(md[i], row_sums[i], kExact);
    for (size_t j = 0; j < cols; ++j) EXPECT_NEAR(mr[j], col_sums[j], kExact);
  }
}

TEST(ZeroOneEqualityCheckTest, Examples) {
  ASSERT_OK_AND_ASSIGN(ZeroOneGaps all, ZeroOneEqualityCheck({0, 0, 0}, {1, 1}));
  EXPECT_EQ(all.p_gap, 1.0);
  EXPECT_EQ(all.e_gap, 1.0);

  // Error rate 0.1 on D (1 of 10) and 0.3 on R (3 of 10).
  std::vector<double> d(10, 0.0), r(10, 0.0);
  d[4] = 1.0;
  r[0] = r[5] = r[9] = 1.0;
  ASSERT_OK_AND_ASSIGN(ZeroOneGaps g, ZeroOneEqualityCheck(d, r));
  EXPECT_NEAR(g.p_gap, 0.2, kExact);
  EXPECT_NEAR(g.e_gap, 0.2, kExact);

  ASSERT_OK_AND_ASSIGN(ZeroOneGaps same,
                       ZeroOneEqualityCheck({0, 1, 0, 1}, {1, 0}));
  EXPECT_NEAR(same.p_gap, 0.0, kExact);
  EXPECT_NEAR(same.e_gap, 0.0, kExact);
}

TEST(ZeroOneEqualityCheckTest, NonBinaryRejected) {
  EXPECT_THAT(ZeroOneEqualityCheck({0, 0.5}, {1}),
              StatusIs(absl::StatusCode::kInvalidArgument));
  EXPECT_THAT(ZeroOneEqualityCheck({0}, {2}),
              StatusIs(absl::StatusCode::kInvalidArgument));
}

TEST(ZeroOneEqualityCheckTest, EqualOnRandomBinaryLists) {
  Rng rng(12);
  for (int t = 0; t < 500; ++t) {
    std::vector<double> d(1 + rng.UniformInt(40)), r(1 + rng.UniformInt(40));
    const double pd = rng.Uniform(), pr = rng.Uniform();
    for (double& v : d) v = rng.Uniform() < pd ? 1.0 : 0.0;
    for (double& v : r) v = rng.Uniform() < pr ? 1.0 : 0.0;
    ASSERT_OK_AND_ASSIGN(ZeroOneGaps g, ZeroOneEqualityCheck(d, r));
    EXPECT_NEAR(g.p_gap, g.e_gap, kExact);
  }
}

}  // namespace
}  // namespace ltu
