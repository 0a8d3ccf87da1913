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

#include "ltu/attacker.h"

#include <cmath>
#include <vector>

#include "gmock/gmock.h"
#include "gtest/gtest.h"
#include "ltu/data.h"
#include "ltu/defender.h"
#include "ltu/evaluator.h"
#include "ltu/rng.h"
#include "testing/status_matchers.h"

namespace ltu {
namespace {

using ::ltu::testing::StatusIs;

// Half-width of the 95% normal band for a proportion near p over n trials.
double Band95(double p, int64_t n) {
  return 1.96 * std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

// One-feature datasets whose feature value doubles as the discriminant.
LabeledDataset ValuesDataset(const std::vector<double>& values, int label) {
  std::vector<int> labels(values.size(), label);
  return *LabeledDataset::Create(2, 1, values, labels);
}

const DiscriminantFn kFirstFeature{
    "first_feature",
    [](const DefenderModel&, const Sample& s) { return s.features[0]; }};

DefenderModel AnyModel() {
  return *DefenderModel::FromParameters(TrainerConfig{}, 2, 1, {0, 0, 0, 0});
}

LtuChallenge Challenge(double f1, double f2) {
  LtuChallenge c;
  c.attack_defender = ValuesDataset({0.5}, 0).Without(0);
  c.attack_reserved = ValuesDataset({0.5}, 0).Without(0);
  c.u1 = Sample{{f1}, 0};
  c.u2 = Sample{{f2}, 1};
  return c;
}

TEST(GapAttackTest, SmallerValueClaimedDefender) {
  Rng rng(1);
  ASSERT_OK_AND_ASSIGN(MembershipPrediction p,
                       GapAttack(Challenge(0.4, 0.1), AnyModel(),
                                 kFirstFeature, rng));
  EXPECT_EQ(p.claimed_defender, PairSlot::kSecond);
  EXPECT_FALSE(p.tie);
  EXPECT_GE(p.confidence, 0.5);
  EXPECT_LE(p.confidence, 1.0);
  ASSERT_TRUE(p.scores.has_value());
  EXPECT_EQ(p.scores->first, 0.4);
}

TEST(GapAttackTest, TiesAreFairCoinFlips) {
  Rng rng(2);
  const LtuChallenge c = Challenge(0.3, 0.3);
  const DefenderModel m = AnyModel();
  int first = 0;
  for (int i = 0; i < 10000; ++i) {
    ASSERT_OK_AND_ASSIGN(MembershipPrediction p,
                         GapAttack(c, m, kFirstFeature, rng));
    EXPECT_TRUE(p.tie);
    EXPECT_EQ(p.confidence, 0.5);
    first += p.claimed_defender == PairSlot::kFirst;
  }
  EXPECT_NEAR(first / 10000.0, 0.5, 0.02);
}

TEST(GapAttackTest, PerfectlySeparatingDiscriminantWinsEveryRound) {
  const LabeledDataset d = ValuesDataset({0.0, 0.1, 0.2, 0.3}, 0);
  const LabeledDataset r = ValuesDataset({0.6, 0.7, 0.8}, 1);
  ASSERT_OK_AND_ASSIGN(LtuRoundFactory factory, LtuRoundFactory::Create(d, r));
  const DefenderModel m = AnyModel();
  for (uint64_t s = 0; s < 500; ++s) {
    const LtuRound round = factory.Make(s);
    Rng rng(s);
    ASSERT_OK_AND_ASSIGN(MembershipPrediction p,
                         GapAttack(round.challenge, m, kFirstFeature, rng));
    EXPECT_EQ(p.claimed_defender, round.defender_slot);
  }
}

TEST(GapAttackTest, NonFiniteDiscriminantIsAnError) {
  Rng rng(3);
  EXPECT_THAT(GapAttack(Challenge(NAN, 0.1), AnyModel(), kFirstFeature, rng),
              StatusIs(absl::StatusCode::kInvalidArgument));
}

TEST(BlfAttackTest, ZeroLossAlwaysClaimsDefender) {
  Rng rng(4);
  for (int i = 0; i < 1000; ++i) {
    ASSERT_OK_AND_ASSIGN(MembershipPrediction p,
                         BlfAttack(Challenge(0.0, 0.7), AnyModel(),
                                   kFirstFeature, rng));
    EXPECT_EQ(p.claimed_defender, PairSlot::kFirst);
  }
}

TEST(BlfAttackTest, UnitLossAlwaysClaimsReserved) {
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    ASSERT_OK_AND_ASSIGN(MembershipPrediction p,
                         BlfAttack(Challenge(1.0, 0.2), AnyModel(),
                                   kFirstFeature, rng));
    EXPECT_EQ(p.claimed_defender, PairSlot::kSecond);
  }
}

TEST(BlfAttackTest, LossOutsideUnitIntervalIsAnError) {
  Rng rng(6);
  EXPECT_FALSE(
      BlfAttack(Challenge(1.5, 0.2), AnyModel(), kFirstFeature, rng).ok());
}

TEST(BlfAttackTest, TwoPointExampleAccuracy) {
  // Defender losses {0, 0.5}, Reserved losses {0.3, 0.4}: expected
  // accuracy 1/2 + (0.35 - 0.25)/2 = 0.55.
  const LabeledDataset d = ValuesDataset({0.0, 0.5}, 0);
  const LabeledDataset r = ValuesDataset({0.3, 0.4}, 1);
  ASSERT_OK_AND_ASSIGN(LtuRoundFactory factory, LtuRoundFactory::Create(d, r));
  const DefenderModel m = AnyModel();
  const int n = 40000;
  int correct = 0;
  for (int i = 0; i < n; ++i) {
    const LtuRound round = factory.Make(RoundSeed(7, i));
    Rng rng(DeriveSeed(round.challenge.round_seed, "attacker"));
    ASSERT_OK_AND_ASSIGN(MembershipPrediction p,
                         BlfAttack(round.challenge, m, kFirstFeature, rng));
    correct += p.claimed_defender == round.defender_slot;
  }
  EXPECT_NEAR(static_cast<double>(correct) / n, 0.55, 0.01);
}

class TrainedDefenderTest : public ::testing::Test {
 protected:
  static void MakeSets(int classes, int dim, int per_class, double sep,
                       double flip, uint64_t seed, LabeledDataset& d,
                       LabeledDataset& r) {
    LabeledDataset source = *GenerateBlobs(classes, dim, per_class, sep, 1.0,
                                           seed);
    if (flip > 0) source = *FlipLabels(source, flip, seed + 1);
    auto parts = *SplitSource(source, 0.5, seed + 2);
    d = parts.first;
    r = parts.second;
  }
};

TEST_F(TrainedDefenderTest, RetrainDeterministicOrderInvariantIsPerfect) {
  LabeledDataset d, r;
  MakeSets(3, 3, 20, 3, 0, 50, d, r);
  for (Algorithm a : {Algorithm::kLogisticGD, Algorithm::kGaussianNB}) {
    TrainerConfig c;
    c.algorithm = a;
    c.epochs = 50;
    AttackerSpec spec;
    spec.kind = AttackKind::kRetrain;
    for (TrainingRegime regime :
         {TrainingRegime::kOriginalOrderSeeded,
          TrainingRegime::kRandomOrderSeeded}) {
      ASSERT_OK_AND_ASSIGN(LtuResult result,
                           RunLtu(d, r, c, spec, 40, 51, regime));
      EXPECT_EQ(result.correct, 40) << AlgorithmName(a);
      EXPECT_EQ(result.injectivity_violations, 0);
    }
  }
}

TEST_F(TrainedDefenderTest, RetrainExhaustiveTwoByTwo) {
  const LabeledDataset d =
      *LabeledDataset::Create(2, 2, {0.0, 0.1, 1.0, 0.8}, {0, 1});
  const LabeledDataset r =
      *LabeledDataset::Create(2, 2, {0.2, 0.0, 0.9, 1.1}, {0, 1});
  TrainerConfig c;
  ASSERT_OK_AND_ASSIGN(TrainedDefender trained,
                       TrainDefender(d, c, TrainingRegime::kOriginalOrderSeeded,
                                     1));
  int rounds = 0;
  for (size_t i = 0; i < 2; ++i) {
    for (size_t j = 0; j < 2; ++j) {
      for (PairSlot slot : {PairSlot::kFirst, PairSlot::kSecond}) {
        LtuChallenge ch;
        ch.attack_defender = d.Without(i);
        ch.attack_reserved = r.Without(j);
        ch.removed_position = i;
        (slot == PairSlot::kFirst ? ch.u1 : ch.u2) = d.sample(i);
        (slot == PairSlot::kFirst ? ch.u2 : ch.u1) = r.sample(j);
        Rng rng(i * 4 + j);
        ASSERT_OK_AND_ASSIGN(
            MembershipPrediction p,
            RetrainAttack(ch, trained.access, trained.model, {}, rng));
        EXPECT_EQ(p.claimed_defender, slot);
        EXPECT_FALSE(p.tie);
        EXPECT_EQ(p.confidence, 1.0);
        ++rounds;
      }
    }
  }
  EXPECT_EQ(rounds, 8);
}

TEST_F(TrainedDefenderTest, RetrainWithoutSeedIsNearChance) {
  LabeledDataset d, r;
  MakeSets(3, 4, 60, 4, 0, 60, d, r);
  TrainerConfig c;
  c.algorithm = Algorithm::kMlpSgd;
  c.epochs = 30;
  c.hidden_width = 8;
  c.shuffle_each_epoch = true;
  AttackerSpec spec;
  spec.kind = AttackKind::kRetrain;
  ASSERT_OK_AND_ASSIGN(LtuResult result,
                       RunLtu(d, r, c, spec, 100, 61,
                              TrainingRegime::kNotSeeded));
  EXPECT_NEAR(result.a_ltu, 0.5, Band95(0.5, 100));
}

TEST_F(TrainedDefenderTest, RetrainSharedSeedModeNeedsSeed) {
  LabeledDataset d, r;
  MakeSets(2, 2, 5, 4, 0, 70, d, r);
  ASSERT_OK_AND_ASSIGN(TrainedDefender trained,
                       TrainDefender(d, TrainerConfig{},
                                     TrainingRegime::kNotSeeded, 1));
  ASSERT_OK_AND_ASSIGN(LtuRound round, MakeLtuRound(d, r, 3));
  RetrainOptions options;
  options.seed_mode = RetrainSeedMode::kShared;
  Rng rng(1);
  EXPECT_THAT(RetrainAttack(round.challenge, trained.access, trained.model,
                            options, rng),
              StatusIs(absl::StatusCode::kFailedPrecondition));
}

TEST_F(TrainedDefenderTest, RetrainWrongFixedSeedLosesStochasticTrainer) {
  LabeledDataset d, r;
  MakeSets(3, 4, 30, 4, 0, 80, d, r);
  TrainerConfig c;
  c.algorithm = Algorithm::kMlpSgd;
  c.epochs = 20;
  c.hidden_width = 8;
  AttackerSpec shared, wrong;
  shared.kind = wrong.kind = AttackKind::kRetrain;
  shared.retrain.seed_mode = RetrainSeedMode::kShared;
  wrong.retrain.seed_mode = RetrainSeedMode::kFixedWrong;
  ASSERT_OK_AND_ASSIGN(
      LtuResult with_seed,
      RunLtu(d, r, c, shared, 50, 81, TrainingRegime::kOriginalOrderSeeded));
  ASSERT_OK_AND_ASSIGN(
      LtuResult without,
      RunLtu(d, r, c, wrong, 50, 81, TrainingRegime::kOriginalOrderSeeded));
  EXPECT_EQ(with_seed.correct, 50);
  EXPECT_LT(without.correct, 50);
}

TrainerConfig OverfitMlp() {
  TrainerConfig c;
  c.algorithm = Algorithm::kMlpSgd;
  c.hidden_width = 64;
  c.epochs = 1500;
  c.learning_rate = 0.2;
  c.l2 = 0.0;
  c.batch_size = 8;
  return c;
}

TEST_F(TrainedDefenderTest, GradientAttackDetectsOverfitMlp) {
  LabeledDataset d, r;
  MakeSets(3, 6, 40, 1.5, 0.2, 90, d, r);
  AttackerSpec spec;
  spec.kind = AttackKind::kGradient;
  ASSERT_OK_AND_ASSIGN(LtuResult result,
                       RunLtu(d, r, OverfitMlp(), spec, 100, 91));
  EXPECT_GT(result.a_ltu, 0.7);
}

TEST_F(TrainedDefenderTest, GradientAttackNearChanceOnRegularizedModel) {
  LabeledDataset d, r;
  MakeSets(2, 2, 200, 6, 0, 100, d, r);
  TrainerConfig c;
  c.l2 = 1.0;
  c.epochs = 100;
  AttackerSpec spec;
  spec.kind = AttackKind::kGradient;
  ASSERT_OK_AND_ASSIGN(LtuResult result, RunLtu(d, r, c, spec, 100, 101));
  EXPECT_NEAR(result.a_ltu, 0.5, Band95(0.5, 100));
}

TEST(GradientAttackTest, InterpolatedPointIsAlwaysClaimed) {
  // p(class 1 | x = 1) = sigmoid(100): the first sample is fit to loss ~0.
  ASSERT_OK_AND_ASSIGN(DefenderModel m, DefenderModel::FromParameters(
                                            TrainerConfig{}, 2, 1,
                                            {-50.0, 50.0, 0.0, 0.0}));
  LtuChallenge c = Challenge(1.0, 1.0);
  c.u1 = Sample{{1.0}, 1};
  c.u2 = Sample{{0.3}, 0};
  ASSERT_OK_AND_ASSIGN(std::vector<double> g,
                       Gradient(m, c.u1, GradientLoss::kTrainingLoss));
  double norm = 0.0;
  for (double v : g) norm += v * v;
  EXPECT_LT(std::sqrt(norm), 1e-30);
  for (uint64_t s = 0; s < 100; ++s) {
    Rng rng(s);
    ASSERT_OK_AND_ASSIGN(MembershipPrediction p,
                         GradientAttack(c, m, GradientLoss::kTrainingLoss, rng));
    EXPECT_EQ(p.claimed_defender, PairSlot::kFirst);
  }
}

TrainerConfig KnnConfig() {
  TrainerConfig c;
  c.algorithm = Algorithm::kKnn;
  return c;
}

TEST(GradientAttackTest, NonDifferentiableModelIsAnError) {
  LabeledDataset d = *GenerateBlobs(2, 1, 5, 4, 1, 3);
  DefenderModel knn = *Train(KnnConfig(), d, 0);
  Rng rng(1);
  EXPECT_THAT(GradientAttack(Challenge(0.1, 0.2), knn,
                             GradientLoss::kTrainingLoss, rng),
              StatusIs(absl::StatusCode::kFailedPrecondition));
}

TEST_F(TrainedDefenderTest, TrainedModelAttackMatchesGapAttack) {
  LabeledDataset d, r;
  MakeSets(3, 6, 40, 1.5, 0.2, 110, d, r);
  AttackerSpec gap;
  gap.kind = AttackKind::kGap;
  AttackerSpec learned;
  learned.kind = AttackKind::kTrainedModel;
  learned.features = {"bounded_loss"};
  ASSERT_OK_AND_ASSIGN(LtuResult g, RunLtu(d, r, OverfitMlp(), gap, 100, 111));
  ASSERT_OK_AND_ASSIGN(LtuResult t,
                       RunLtu(d, r, OverfitMlp(), learned, 100, 111));
  EXPECT_GE(t.a_ltu, g.a_ltu - 0.05);
}

TEST_F(TrainedDefenderTest, TrainedModelAttackWithConstantFeatureIsChance) {
  LabeledDataset d, r;
  MakeSets(3, 6, 40, 1.5, 0.2, 120, d, r);
  AttackerSpec spec;
  spec.kind = AttackKind::kTrainedModel;
  spec.features = {"constant"};
  ASSERT_OK_AND_ASSIGN(LtuResult result,
                       RunLtu(d, r, OverfitMlp(), spec, 1000, 121));
  // Every round is a coin flip; a 3 sigma band keeps the check seed-robust.
  EXPECT_EQ(result.ties, 1000);
  EXPECT_NEAR(result.a_ltu, 0.5, 3.0 * std::sqrt(0.25 / 1000.0));
}

TEST_F(TrainedDefenderTest, TrainedModelAttackDefaultFeaturesOnOverfitMlp) {
  LabeledDataset d, r;
  MakeSets(3, 6, 40, 1.5, 0.2, 130, d, r);
  AttackerSpec spec;
  spec.kind = AttackKind::kTrainedModel;
  ASSERT_OK_AND_ASSIGN(LtuResult result,
                       RunLtu(d, r, OverfitMlp(), spec, 100, 131));
  EXPECT_GT(result.a_ltu, 0.6);
}

TEST(CoinFlipAttackTest, IsFair) {
  Rng rng(9);
  int first = 0;
  for (int i = 0; i < 10000; ++i) {
    first += CoinFlipAttack(rng).claimed_defender == PairSlot::kFirst;
  }
  EXPECT_NEAR(first / 10000.0, 0.5, 0.02);
}

TEST(AttackerSpecTest, NamesAndKeyValues) {
  for (AttackKind k : {AttackKind::kCoinFlip, AttackKind::kGap,
                       AttackKind::kBlf, AttackKind::kRetrain,
                       AttackKind::kGradient, AttackKind::kTrainedModel}) {
    ASSERT_OK_AND_ASSIGN(AttackKind parsed, ParseAttackKind(AttackKindName(k)));
    EXPECT_EQ(parsed, k);
  }
  AttackerSpec spec;
  spec.kind = AttackKind::kTrainedModel;
  spec.features = {"entropy", "gradient_norm"};
  spec.retrain.seed_mode = RetrainSeedMode::kFresh;
  spec.attack_trainer.epochs = 33;
  AttackerSpec parsed;
  for (const auto& [k, v] : AttackerSpecToKeyValues(spec)) {
    ASSERT_OK(SetAttackerSpecValue(parsed, k, v));
  }
  EXPECT_EQ(AttackerSpecToKeyValues(parsed), AttackerSpecToKeyValues(spec));
  EXPECT_FALSE(SetAttackerSpecValue(parsed, "kind", "telepathy").ok());
  EXPECT_FALSE(SetAttackerSpecValue(parsed, "nonsense", "1").ok());
  spec.discriminant = "no_such_function";
  spec.kind = AttackKind::kGap;
  EXPECT_FALSE(ValidateAttackerSpec(spec).ok());
}

TEST(DiscriminantTest, AllNamesResolveAndAreFinite) {
  LabeledDataset d = *GenerateBlobs(3, 2, 10, 3, 1, 4);
  DefenderModel m = *Train(TrainerConfig{}, d, 0);
  for (const char* name :
       {"bounded_loss", "zero_one_loss", "cross_entropy", "gradient_norm",
        "bounded_gradient_norm", "uncertainty", "top_probability", "entropy",
        "constant"}) {
    ASSERT_OK_AND_ASSIGN(DiscriminantFn f, DiscriminantByName(name));
    for (size_t i = 0; i < d.size(); ++i) {
      EXPECT_TRUE(std::isfinite(f(m, d.sample(i)))) << name;
    }
  }
  EXPECT_FALSE(DiscriminantByName("psychic").ok());
}

}  // namespace
}  // namespace ltu
