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

// Membership attackers for leave-two-unlabeled rounds.
//
// Each attacker sees an LtuChallenge (never the ground truth), the released
// Defender model and, for white-box trainer attacks, the Defender trainer.
// Attackers hold no state across rounds; all randomness comes from the
// per-round Rng handed in by the caller.

#ifndef LTU_ATTACKER_H_
#define LTU_ATTACKER_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/string_view.h"
#include "ltu/data.h"
#include "ltu/defender.h"
#include "ltu/rng.h"

namespace ltu {

struct MembershipPrediction {
  // Which unlabeled sample is claimed to be the Defender member; the other
  // one is claimed Reserved.
  PairSlot claimed_defender = PairSlot::kFirst;
  // Descriptive only, in [0.5, 1]; 0.5 means a coin flip decided.
  double confidence = 0.5;
  std::string strategy;
  // The decision was a fair coin toss (equal scores, or no signal).
  bool tie = false;
  // The two values the attacker compared, for (u1, u2), when it has them.
  std::optional<std::pair<double, double>> scores;
};

// A real-valued function of (model, sample). By convention larger values
// look more like Reserved data (e.g. a loss).
struct DiscriminantFn {
  std::string name;
  std::function<double(const DefenderModel&, const Sample&)> fn;

  double operator()(const DefenderModel& m, const Sample& s) const {
    return fn(m, s);
  }
};

DiscriminantFn LossDiscriminant(LossKind kind);
DiscriminantFn CrossEntropyDiscriminant();
DiscriminantFn GradientNormDiscriminant(GradientLoss kind);
// 1 - max_j p_j.
DiscriminantFn UncertaintyDiscriminant();
DiscriminantFn TopProbabilityDiscriminant();
// Shannon entropy of the predicted distribution, in nats.
DiscriminantFn EntropyDiscriminant();
DiscriminantFn ConstantDiscriminant(double value);

// Names: bounded_loss, zero_one_loss, cross_entropy, gradient_norm,
// bounded_gradient_norm, uncertainty, top_probability, entropy, constant.
absl::StatusOr<DiscriminantFn> DiscriminantByName(absl::string_view name);

// Claims the sample with the smaller f as the Defender member; equal values
// are decided by a fair coin.
absl::StatusOr<MembershipPrediction> GapAttack(const LtuChallenge& challenge,
                                               const DefenderModel& model,
                                               const DiscriminantFn& f,
                                               Rng& rng);

// Draws z ~ U(0, 1) and claims u1 Reserved iff z < loss(u1). `loss` must
// take values in [0, 1].
absl::StatusOr<MembershipPrediction> BlfAttack(const LtuChallenge& challenge,
                                               const DefenderModel& model,
                                               const DiscriminantFn& loss,
                                               Rng& rng);
absl::StatusOr<MembershipPrediction> BlfAttack(const LtuChallenge& challenge,
                                               const DefenderModel& model,
                                               LossKind kind, Rng& rng);

// What an attacker knows about the Defender trainer.
struct TrainerAccess {
  TrainerConfig config;
  // The seed the Defender model was trained with, when it is released.
  std::optional<uint64_t> seed;
  // The Defender trained on its data in the original order, which the
  // attacker can reproduce by re-inserting a candidate where d was.
  bool original_order = false;
};

enum class RetrainSeedMode {
  // The released seed when there is one, otherwise a fresh random seed.
  kAuto,
  kShared,
  kFixedWrong,
  kFresh,
};

const char* RetrainSeedModeName(RetrainSeedMode mode);
absl::StatusOr<RetrainSeedMode> ParseRetrainSeedMode(absl::string_view name);

struct RetrainOptions {
  RetrainSeedMode seed_mode = RetrainSeedMode::kAuto;
  uint64_t wrong_seed = 1;
};

// Trains mock models on (D_D - d) + u1 and (D_D - d) + u2 with the Defender
// trainer and claims the candidate whose model is closest to `target` in
// parameter space. scores holds the two distances.
absl::StatusOr<MembershipPrediction> RetrainAttack(
    const LtuChallenge& challenge, const TrainerAccess& trainer,
    const DefenderModel& target, const RetrainOptions& options, Rng& rng);

// Claims the sample with the smaller per-sample gradient norm at the
// Defender model: training points sit closer to stationarity.
absl::StatusOr<MembershipPrediction> GradientAttack(
    const LtuChallenge& challenge, const DefenderModel& model,
    GradientLoss kind, Rng& rng);

// Learns a membership classifier on D_A from features computed with the
// Defender model, then claims the unlabeled sample with the higher predicted
// membership probability.
struct TrainedModelOptions {
  TrainerConfig attack_trainer;
  std::vector<DiscriminantFn> features;
  // Also feed the raw sample features to the membership classifier.
  bool include_raw_features = false;
};

TrainedModelOptions DefaultTrainedModelOptions();

absl::StatusOr<MembershipPrediction> TrainedModelAttack(
    const LtuChallenge& challenge, const DefenderModel& model,
    const TrainedModelOptions& options, Rng& rng);

MembershipPrediction CoinFlipAttack(Rng& rng);

enum class AttackKind {
  kCoinFlip,
  kGap,
  kBlf,
  kRetrain,
  kGradient,
  kTrainedModel,
};

const char* AttackKindName(AttackKind kind);
absl::StatusOr<AttackKind> ParseAttackKind(absl::string_view name);

// Serializable description of an attacker, as set from config files.
struct AttackerSpec {
  AttackKind kind = AttackKind::kGap;
  std::string discriminant = "bounded_loss";                // gap
  LossKind blf_loss = LossKind::kBoundedTrueClass;          // blf
  GradientLoss gradient_loss = GradientLoss::kTrainingLoss;  // gradient
  RetrainOptions retrain;                                   // retrain
  // trained_model
  TrainerConfig attack_trainer = DefaultTrainedModelOptions().attack_trainer;
  std::vector<std::string> features = {"bounded_loss", "top_probability",
                                       "entropy"};
  bool include_raw_features = false;

  // Short tag, e.g. "gap(bounded_loss)".
  std::string Name() const;
};

// Keys: kind, discriminant, loss, gradient_loss, seed_mode, wrong_seed,
// features (comma separated), include_raw_features and
// attack_trainer.<trainer key>.
std::vector<std::pair<std::string, std::string>> AttackerSpecToKeyValues(
    const AttackerSpec& spec);
absl::Status SetAttackerSpecValue(AttackerSpec& spec, absl::string_view key,
                                  absl::string_view value);

// Checks names and nested configs without running anything.
absl::Status ValidateAttackerSpec(const AttackerSpec& spec);

struct AttackContext {
  const DefenderModel* model = nullptr;
  TrainerAccess trainer;
};

// Runs the attacker described by `spec` on one round.
absl::StatusOr<MembershipPrediction> RunAttack(const AttackerSpec& spec,
                                               const LtuChallenge& challenge,
                                               const AttackContext& context,
                                               Rng& rng);

}  // namespace ltu

#endif  // LTU_ATTACKER_H_
