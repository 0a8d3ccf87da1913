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

// The evaluator: drives leave-two-unlabeled rounds against a trained
// Defender and turns the outcome into Privacy and Utility scores.
//
//   Privacy = min{2 (1 - A_ltu), 1}       +- 2 sqrt(A_ltu (1 - A_ltu) / N)
//   Utility = max{(c A_D - 1) / (c - 1), 0} +- c sqrt(A_D (1 - A_D) / |D_R|)
//
// A_ltu is the fraction of rounds in which the attacker assigns both hidden
// membership labels correctly; A_D is the Defender's accuracy on the
// Reserved data.

#ifndef LTU_EVALUATOR_H_
#define LTU_EVALUATOR_H_

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "absl/status/statusor.h"
#include "absl/strings/string_view.h"
#include "json.hpp"
#include "ltu/attacker.h"
#include "ltu/data.h"
#include "ltu/defender.h"

namespace ltu {

struct ScoreWithError {
  double value = 0.0;
  double std_error = 0.0;
  int64_t n = 0;
};

absl::StatusOr<ScoreWithError> PrivacyScore(double a_ltu, int64_t n);

absl::StatusOr<ScoreWithError> UtilityScoreFromAccuracy(double a_d,
                                                        int num_classes,
                                                        int64_t n);

struct UtilityReport {
  ScoreWithError score;
  double a_d = 0.0;
  int64_t correct = 0;
};

// Accuracy of argmax predictions on `reserved`, chance-corrected.
absl::StatusOr<UtilityReport> UtilityScore(const DefenderModel& model,
                                           const LabeledDataset& reserved);

// The three randomness regimes of a black-box evaluation:
//   orig-order-seeded  Defender trains on D_D in its given order with a
//                      seed that is released with the trainer.
//   rand-order-seeded  Defender trains on a secretly shuffled D_D; the
//                      seed is released.
//   not-seeded         secretly shuffled D_D and an unreleased seed.
enum class TrainingRegime {
  kOriginalOrderSeeded,
  kRandomOrderSeeded,
  kNotSeeded,
};

const char* TrainingRegimeName(TrainingRegime regime);
absl::StatusOr<TrainingRegime> ParseTrainingRegime(absl::string_view name);

struct TrainedDefender {
  DefenderModel model;
  // What the released trainer reveals to attackers under the regime.
  TrainerAccess access;
};

// Trains M_D once. Seeds and the secret shuffle derive from master_seed.
absl::StatusOr<TrainedDefender> TrainDefender(const LabeledDataset& defender,
                                              const TrainerConfig& trainer,
                                              TrainingRegime regime,
                                              uint64_t master_seed);

struct RoundRecord {
  int64_t index = 0;
  uint64_t round_seed = 0;
  size_t defender_index = 0;
  size_t reserved_index = 0;
  PairSlot truth = PairSlot::kFirst;
  PairSlot claimed = PairSlot::kFirst;
  bool correct = false;
  bool tie = false;
  double confidence = 0.5;
  std::optional<std::pair<double, double>> scores;
};

struct LtuResult {
  std::string attacker;
  int64_t n = 0;
  int64_t correct = 0;
  double a_ltu = 0.0;
  ScoreWithError privacy;
  int64_t ties = 0;
  // Retrain attacker only: rounds where both mock models reproduced M_D
  // exactly, i.e. the trainer was not injective on that pair.
  int64_t injectivity_violations = 0;
  std::vector<RoundRecord> rounds;
};

struct RoundOptions {
  int64_t rounds = 100;
  uint64_t master_seed = 0;
  // Rounds are independent; results do not depend on the thread count.
  int num_threads = 1;
};

// Seed of round i: DeriveSeed(master_seed, i). Two calls with the same
// master seed present identical rounds, so attackers can be compared on
// paired rounds.
uint64_t RoundSeed(uint64_t master_seed, int64_t index);

absl::StatusOr<LtuResult> RunRounds(const LtuRoundFactory& factory,
                                    const AttackerSpec& attacker,
                                    const AttackContext& context,
                                    const RoundOptions& options);

// Trains M_D once on `defender` under `regime` and runs `rounds` LTU rounds.
absl::StatusOr<LtuResult> RunLtu(
    const LabeledDataset& defender, const LabeledDataset& reserved,
    const TrainerConfig& trainer, const AttackerSpec& attacker, int64_t rounds,
    uint64_t master_seed,
    TrainingRegime regime = TrainingRegime::kOriginalOrderSeeded);

struct IndividualScore {
  MembershipLabel membership = MembershipLabel::kDefender;
  size_t index = 0;  // position in D_D or D_R
  double a_ltu = 0.0;
  ScoreWithError privacy;
};

// Pins one sample for all rounds and draws its counterpart at random.
absl::StatusOr<IndividualScore> IndividualPrivacy(
    const LtuRoundFactory& factory, MembershipLabel membership, size_t index,
    const AttackerSpec& attacker, const AttackContext& context,
    const RoundOptions& options);

// Individual membership score of `d` against `reserved`, with
// `defender_rest` + d as the Defender set.
absl::StatusOr<ScoreWithError> IndividualPrivacy(
    const Sample& d, const LabeledDataset& reserved,
    const LabeledDataset& defender_rest, const AttackerSpec& attacker,
    const AttackContext& context, const RoundOptions& options);

struct HistogramBin {
  double low = 0.0;
  double high = 0.0;
  int64_t count = 0;
};

// Equal-width bins over [0, 1]; 1.0 lands in the last bin.
std::vector<HistogramBin> Histogram(const std::vector<double>& values,
                                    int num_bins);

struct IndividualPrivacyReport {
  std::vector<IndividualScore> scores;
  std::vector<HistogramBin> histogram;
};

struct IndividualOptions {
  int64_t rounds_per_sample = 100;
  // Score at most this many samples per side (the first ones); 0 = all.
  size_t max_samples = 0;
  bool include_reserved = false;
  int num_bins = 10;
  uint64_t seed = 0;
  int num_threads = 1;
};

absl::StatusOr<IndividualPrivacyReport> ComputeIndividualPrivacy(
    const LtuRoundFactory& factory, const AttackerSpec& attacker,
    const AttackContext& context, const IndividualOptions& options);

// Exact LTU accuracy of an attacker that claims the lower-scoring sample of
// each (d, r) pair as the member, over all |D| x |R| pairs: a pair counts 1
// when f(r) > f(d) and 1/2 when equal. Computed by sorting.
double PairwiseAccuracyFromScores(const std::vector<double>& defender_scores,
                                  const std::vector<double>& reserved_scores);

nlohmann::json ScoreToJson(const ScoreWithError& score);
nlohmann::json LtuResultToJson(const LtuResult& result,
                               bool include_rounds = true);
nlohmann::json IndividualReportToJson(const IndividualPrivacyReport& report);

}  // namespace ltu

#endif  // LTU_EVALUATOR_H_
