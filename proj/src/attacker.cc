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

#include <algorithm>
#include <cmath>

#include "absl/strings/numbers.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_join.h"
#include "absl/strings/str_split.h"
#include "absl/strings/strip.h"

namespace ltu {
namespace {

constexpr absl::string_view kAttackTrainerPrefix = "attack_trainer.";

// 0.5 when a == b, approaching 1 as the two values separate.
double RelativeConfidence(double a, double b) {
  const double scale = std::abs(a) + std::abs(b);
  if (!(scale > 0.0)) return 0.5;
  return std::clamp(0.5 + 0.5 * std::abs(a - b) / scale, 0.5, 1.0);
}

// Smaller score wins the Defender claim; ties go to the coin.
MembershipPrediction ClaimSmaller(double first, double second,
                                  std::string strategy, Rng& rng) {
  MembershipPrediction p;
  p.strategy = std::move(strategy);
  p.scores = std::make_pair(first, second);
  if (first == second) {
    p.tie = true;
    p.confidence = 0.5;
    p.claimed_defender = rng.Coin() ? PairSlot::kFirst : PairSlot::kSecond;
    return p;
  }
  p.claimed_defender = first < second ? PairSlot::kFirst : PairSlot::kSecond;
  p.confidence = RelativeConfidence(first, second);
  return p;
}

absl::Status CheckFinite(const DiscriminantFn& f, double value,
                         const char* which) {
  if (!std::isfinite(value)) {
    return absl::InvalidArgumentError(absl::StrCat(
        "discriminant '", f.name, "' is not finite on ", which));
  }
  return absl::OkStatus();
}

std::vector<double> Proba(const DefenderModel& m, const Sample& s) {
  std::vector<double> p(static_cast<size_t>(m.num_classes()));
  m.PredictProbaInto(s.features, p);
  return p;
}

double Norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Membership feature rows for the trained-model attacker.
void AppendFeatures(const TrainedModelOptions& options,
                    const DefenderModel& model, const Sample& sample,
                    std::vector<double>& out) {
  for (const DiscriminantFn& f : options.features) {
    out.push_back(f(model, sample));
  }
  if (options.include_raw_features) {
    out.insert(out.end(), sample.features.begin(), sample.features.end());
  }
}

}  // namespace

DiscriminantFn LossDiscriminant(LossKind kind) {
  return {kind == LossKind::kZeroOne ? "zero_one_loss" : "bounded_loss",
          [kind](const DefenderModel& m, const Sample& s) {
            return LossUnchecked(m, s.features, s.label, kind);
          }};
}

DiscriminantFn CrossEntropyDiscriminant() {
  return {"cross_entropy", [](const DefenderModel& m, const Sample& s) {
            const std::vector<double> p = Proba(m, s);
            return -std::log(std::max(p[static_cast<size_t>(s.label)],
                                      std::numeric_limits<double>::min()));
          }};
}

DiscriminantFn GradientNormDiscriminant(GradientLoss kind) {
  return {kind == GradientLoss::kTrainingLoss ? "gradient_norm"
                                              : "bounded_gradient_norm",
          [kind](const DefenderModel& m, const Sample& s) {
            absl::StatusOr<std::vector<double>> g = Gradient(m, s, kind);
            return g.ok() ? Norm(*g)
                          : std::numeric_limits<double>::quiet_NaN();
          }};
}

DiscriminantFn UncertaintyDiscriminant() {
  return {"uncertainty", [](const DefenderModel& m, const Sample& s) {
            const std::vector<double> p = Proba(m, s);
            return 1.0 - *std::max_element(p.begin(), p.end());
          }};
}

DiscriminantFn TopProbabilityDiscriminant() {
  return {"top_probability", [](const DefenderModel& m, const Sample& s) {
            const std::vector<double> p = Proba(m, s);
            return *std::max_element(p.begin(), p.end());
          }};
}

DiscriminantFn EntropyDiscriminant() {
  return {"entropy", [](const DefenderModel& m, const Sample& s) {
            double h = 0.0;
            for (double v : Proba(m, s)) {
              if (v > 0.0) h -= v * std::log(v);
            }
            return h;
          }};
}

DiscriminantFn ConstantDiscriminant(double value) {
  return {"constant",
          [value](const DefenderModel&, const Sample&) { return value; }};
}

absl::StatusOr<DiscriminantFn> DiscriminantByName(absl::string_view name) {
  if (name == "bounded_loss") return LossDiscriminant(LossKind::kBoundedTrueClass);
  if (name == "zero_one_loss") return LossDiscriminant(LossKind::kZeroOne);
  if (name == "cross_entropy") return CrossEntropyDiscriminant();
  if (name == "gradient_norm") {
    return GradientNormDiscriminant(GradientLoss::kTrainingLoss);
  }
  if (name == "bounded_gradient_norm") {
    return GradientNormDiscriminant(GradientLoss::kBoundedTrueClass);
  }
  if (name == "uncertainty") return UncertaintyDiscriminant();
  if (name == "top_probability") return TopProbabilityDiscriminant();
  if (name == "entropy") return EntropyDiscriminant();
  if (name == "constant") return ConstantDiscriminant(0.0);
  return absl::InvalidArgumentError(
      absl::StrCat("unknown discriminant '", name, "'"));
}

absl::StatusOr<MembershipPrediction> GapAttack(const LtuChallenge& challenge,
                                               const DefenderModel& model,
                                               const DiscriminantFn& f,
                                               Rng& rng) {
  const double f1 = f(model, challenge.u1);
  if (absl::Status s = CheckFinite(f, f1, "u1"); !s.ok()) return s;
  const double f2 = f(model, challenge.u2);
  if (absl::Status s = CheckFinite(f, f2, "u2"); !s.ok()) return s;
  return ClaimSmaller(f1, f2, absl::StrCat("gap(", f.name, ")"), rng);
}

absl::StatusOr<MembershipPrediction> BlfAttack(const LtuChallenge& challenge,
                                               const DefenderModel& model,
                                               const DiscriminantFn& loss,
                                               Rng& rng) {
  const double l1 = loss(model, challenge.u1);
  if (!(l1 >= 0.0 && l1 <= 1.0)) {
    return absl::InvalidArgumentError(absl::StrCat(
        "blf attack needs a loss in [0, 1]; '", loss.name, "' gave ", l1));
  }
  const double z = rng.Uniform();
  MembershipPrediction p;
  p.strategy = absl::StrCat("blf(", loss.name, ")");
  const bool first_reserved = z < l1;
  p.claimed_defender = first_reserved ? PairSlot::kSecond : PairSlot::kFirst;
  p.confidence = std::max(l1, 1.0 - l1);
  return p;
}

absl::StatusOr<MembershipPrediction> BlfAttack(const LtuChallenge& challenge,
                                               const DefenderModel& model,
                                               LossKind kind, Rng& rng) {
  return BlfAttack(challenge, model, LossDiscriminant(kind), rng);
}

const char* RetrainSeedModeName(RetrainSeedMode mode) {
  switch (mode) {
    case RetrainSeedMode::kAuto:
      return "auto";
    case RetrainSeedMode::kShared:
      return "shared";
    case RetrainSeedMode::kFixedWrong:
      return "fixed_wrong";
    case RetrainSeedMode::kFresh:
      return "fresh";
  }
  return "auto";
}

absl::StatusOr<RetrainSeedMode> ParseRetrainSeedMode(absl::string_view name) {
  for (RetrainSeedMode m :
       {RetrainSeedMode::kAuto, RetrainSeedMode::kShared,
        RetrainSeedMode::kFixedWrong, RetrainSeedMode::kFresh}) {
    if (name == RetrainSeedModeName(m)) return m;
  }
  return absl::InvalidArgumentError(absl::StrCat(
      "unknown seed_mode '", name, "' (auto, shared, fixed_wrong, fresh)"));
}

absl::StatusOr<MembershipPrediction> RetrainAttack(
    const LtuChallenge& challenge, const TrainerAccess& trainer,
    const DefenderModel& target, const RetrainOptions& options, Rng& rng) {
  uint64_t seed = 0;
  switch (options.seed_mode) {
    case RetrainSeedMode::kAuto:
      seed = trainer.seed.has_value() ? *trainer.seed : rng.NextU64();
      break;
    case RetrainSeedMode::kShared:
      if (!trainer.seed.has_value()) {
        return absl::FailedPreconditionError(
            "retrain attack asked for the shared seed, but the Defender seed "
            "is not released in this regime");
      }
      seed = *trainer.seed;
      break;
    case RetrainSeedMode::kFixedWrong:
      seed = options.wrong_seed;
      break;
    case RetrainSeedMode::kFresh:
      seed = rng.NextU64();
      break;
  }

  const size_t position = trainer.original_order
                              ? challenge.removed_position
                              : challenge.attack_defender.size();
  double distance[2];
  for (PairSlot slot : {PairSlot::kFirst, PairSlot::kSecond}) {
    const Sample& candidate = challenge.unlabeled(slot);
    LabeledDataset data =
        challenge.attack_defender.WithInserted(position, candidate);
    absl::StatusOr<DefenderModel> mock = Train(trainer.config, data, seed);
    if (!mock.ok()) return mock.status();
    absl::StatusOr<double> d = ParamDistance(*mock, target);
    if (!d.ok()) return d.status();
    distance[slot == PairSlot::kFirst ? 0 : 1] = *d;
  }
  MembershipPrediction p =
      ClaimSmaller(distance[0], distance[1], "retrain", rng);
  if (!p.tie && (distance[0] == 0.0 || distance[1] == 0.0)) {
    p.confidence = 1.0;  // exact reproduction of the Defender model
  }
  return p;
}

absl::StatusOr<MembershipPrediction> GradientAttack(
    const LtuChallenge& challenge, const DefenderModel& model,
    GradientLoss kind, Rng& rng) {
  absl::StatusOr<std::vector<double>> g1 = Gradient(model, challenge.u1, kind);
  if (!g1.ok()) return g1.status();
  absl::StatusOr<std::vector<double>> g2 = Gradient(model, challenge.u2, kind);
  if (!g2.ok()) return g2.status();
  return ClaimSmaller(Norm(*g1), Norm(*g2),
                      absl::StrCat("gradient(", GradientLossName(kind), ")"),
                      rng);
}

TrainedModelOptions DefaultTrainedModelOptions() {
  TrainedModelOptions options;
  options.attack_trainer.algorithm = Algorithm::kLogisticGD;
  options.attack_trainer.learning_rate = 0.5;
  options.attack_trainer.epochs = 300;
  options.attack_trainer.l2 = 1e-4;
  options.features = {LossDiscriminant(LossKind::kBoundedTrueClass),
                      TopProbabilityDiscriminant(), EntropyDiscriminant()};
  return options;
}

absl::StatusOr<MembershipPrediction> TrainedModelAttack(
    const LtuChallenge& challenge, const DefenderModel& model,
    const TrainedModelOptions& options, Rng& rng) {
  constexpr int kReserved = 0;
  constexpr int kDefender = 1;
  const LabeledDataset& defender = challenge.attack_defender;
  const LabeledDataset& reserved = challenge.attack_reserved;
  if (defender.size() + reserved.size() == 0) {
    MembershipPrediction p = CoinFlipAttack(rng);
    p.strategy = "trained_model";
    return p;
  }

  std::vector<double> rows;
  std::vector<int> labels;
  for (const auto& [set, membership] :
       {std::pair{&defender, kDefender}, std::pair{&reserved, kReserved}}) {
    for (size_t i = 0; i < set->size(); ++i) {
      AppendFeatures(options, model, set->sample(i), rows);
      labels.push_back(membership);
    }
  }
  const size_t n = labels.size();
  const size_t width = rows.size() / n;
  if (width == 0) {
    return absl::InvalidArgumentError("trained-model attack has no features");
  }
  for (double v : rows) {
    if (!std::isfinite(v)) {
      return absl::InvalidArgumentError(
          "trained-model attack feature is not finite");
    }
  }

  // Standardize with D_A statistics; constant columns are only centered.
  std::vector<double> mean(width, 0.0), scale(width, 0.0);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < width; ++j) mean[j] += rows[i * width + j];
  }
  for (double& m : mean) m /= static_cast<double>(n);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < width; ++j) {
      const double d = rows[i * width + j] - mean[j];
      scale[j] += d * d;
    }
  }
  for (double& s : scale) {
    s = std::sqrt(s / static_cast<double>(n));
    if (!(s > 1e-12)) s = 1.0;
  }
  auto standardize = [&](std::span<double> row) {
    for (size_t j = 0; j < width; ++j) row[j] = (row[j] - mean[j]) / scale[j];
  };
  for (size_t i = 0; i < n; ++i) {
    standardize(std::span<double>(rows).subspan(i * width, width));
  }

  absl::StatusOr<LabeledDataset> membership = LabeledDataset::Create(
      2, static_cast<int>(width), std::move(rows), std::move(labels));
  if (!membership.ok()) return membership.status();
  absl::StatusOr<DefenderModel> attack_model =
      Train(options.attack_trainer, *membership, rng.NextU64());
  if (!attack_model.ok()) {
    return absl::Status(attack_model.status().code(),
                        absl::StrCat("membership model: ",
                                     attack_model.status().message()));
  }

  double score[2];
  for (PairSlot slot : {PairSlot::kFirst, PairSlot::kSecond}) {
    std::vector<double> row;
    AppendFeatures(options, model, challenge.unlabeled(slot), row);
    standardize(row);
    std::vector<double> p(2);
    attack_model->PredictProbaInto(row, p);
    // Lower Reserved probability = more likely a member.
    score[slot == PairSlot::kFirst ? 0 : 1] = p[kReserved];
  }
  MembershipPrediction p =
      ClaimSmaller(score[0], score[1], "trained_model", rng);
  if (!p.tie) p.confidence = 0.5 + 0.5 * std::abs(score[0] - score[1]);
  return p;
}

MembershipPrediction CoinFlipAttack(Rng& rng) {
  MembershipPrediction p;
  p.strategy = "coin_flip";
  p.tie = true;
  p.claimed_defender = rng.Coin() ? PairSlot::kFirst : PairSlot::kSecond;
  return p;
}

const char* AttackKindName(AttackKind kind) {
  switch (kind) {
    case AttackKind::kCoinFlip:
      return "coin_flip";
    case AttackKind::kGap:
      return "gap";
    case AttackKind::kBlf:
      return "blf";
    case AttackKind::kRetrain:
      return "retrain";
    case AttackKind::kGradient:
      return "gradient";
    case AttackKind::kTrainedModel:
      return "trained_model";
  }
  return "gap";
}

absl::StatusOr<AttackKind> ParseAttackKind(absl::string_view name) {
  for (AttackKind k : {AttackKind::kCoinFlip, AttackKind::kGap,
                       AttackKind::kBlf, AttackKind::kRetrain,
                       AttackKind::kGradient, AttackKind::kTrainedModel}) {
    if (name == AttackKindName(k)) return k;
  }
  return absl::InvalidArgumentError(absl::StrCat(
      "unknown attacker kind '", name,
      "' (coin_flip, gap, blf, retrain, gradient, trained_model)"));
}

std::string AttackerSpec::Name() const {
  switch (kind) {
    case AttackKind::kCoinFlip:
      return "coin_flip";
    case AttackKind::kGap:
      return absl::StrCat("gap(", discriminant, ")");
    case AttackKind::kBlf:
      return absl::StrCat("blf(", LossKindName(blf_loss), ")");
    case AttackKind::kRetrain:
      return absl::StrCat("retrain(", RetrainSeedModeName(retrain.seed_mode),
                          ")");
    case AttackKind::kGradient:
      return absl::StrCat("gradient(", GradientLossName(gradient_loss), ")");
    case AttackKind::kTrainedModel:
      return absl::StrCat("trained_model(", absl::StrJoin(features, "+"),
                          include_raw_features ? "+raw" : "", ")");
  }
  return "unknown";
}

std::vector<std::pair<std::string, std::string>> AttackerSpecToKeyValues(
    const AttackerSpec& spec) {
  std::vector<std::pair<std::string, std::string>> kv = {
      {"kind", AttackKindName(spec.kind)},
      {"discriminant", spec.discriminant},
      {"loss", LossKindName(spec.blf_loss)},
      {"gradient_loss", GradientLossName(spec.gradient_loss)},
      {"seed_mode", RetrainSeedModeName(spec.retrain.seed_mode)},
      {"wrong_seed", absl::StrCat(spec.retrain.wrong_seed)},
      {"features", absl::StrJoin(spec.features, ",")},
      {"include_raw_features", spec.include_raw_features ? "true" : "false"},
  };
  for (auto& [key, value] : TrainerConfigToKeyValues(spec.attack_trainer)) {
    kv.emplace_back(absl::StrCat(kAttackTrainerPrefix, key), value);
  }
  return kv;
}

absl::Status SetAttackerSpecValue(AttackerSpec& spec, absl::string_view key,
                                  absl::string_view value) {
  if (key == "kind") {
    absl::StatusOr<AttackKind> k = ParseAttackKind(value);
    if (!k.ok()) return k.status();
    spec.kind = *k;
  } else if (key == "discriminant") {
    spec.discriminant = std::string(value);
  } else if (key == "loss") {
    if (value == "zero_one") {
      spec.blf_loss = LossKind::kZeroOne;
    } else if (value == "bounded_true_class") {
      spec.blf_loss = LossKind::kBoundedTrueClass;
    } else {
      return absl::InvalidArgumentError(absl::StrCat(
          "loss: expected zero_one or bounded_true_class, got '", value,
          "'"));
    }
  } else if (key == "gradient_loss") {
    if (value == "training_loss") {
      spec.gradient_loss = GradientLoss::kTrainingLoss;
    } else if (value == "bounded_true_class") {
      spec.gradient_loss = GradientLoss::kBoundedTrueClass;
    } else {
      return absl::InvalidArgumentError(absl::StrCat(
          "gradient_loss: expected training_loss or bounded_true_class, got '",
          value, "'"));
    }
  } else if (key == "seed_mode") {
    absl::StatusOr<RetrainSeedMode> m = ParseRetrainSeedMode(value);
    if (!m.ok()) return m.status();
    spec.retrain.seed_mode = *m;
  } else if (key == "wrong_seed") {
    if (!absl::SimpleAtoi(value, &spec.retrain.wrong_seed)) {
      return absl::InvalidArgumentError(
          absl::StrCat("wrong_seed: expected an integer, got '", value, "'"));
    }
  } else if (key == "features") {
    spec.features.clear();
    for (absl::string_view name :
         absl::StrSplit(value, ',', absl::SkipWhitespace())) {
      spec.features.emplace_back(absl::StripAsciiWhitespace(name));
    }
  } else if (key == "include_raw_features") {
    if (!absl::SimpleAtob(value, &spec.include_raw_features)) {
      return absl::InvalidArgumentError(absl::StrCat(
          "include_raw_features: expected true or false, got '", value, "'"));
    }
  } else if (absl::StartsWith(key, kAttackTrainerPrefix)) {
    return SetTrainerConfigValue(spec.attack_trainer,
                                 key.substr(kAttackTrainerPrefix.size()),
                                 value);
  } else {
    return absl::InvalidArgumentError(
        absl::StrCat("unknown attacker key '", key, "'"));
  }
  return absl::OkStatus();
}

absl::Status ValidateAttackerSpec(const AttackerSpec& spec) {
  switch (spec.kind) {
    case AttackKind::kGap:
      return DiscriminantByName(spec.discriminant).status();
    case AttackKind::kTrainedModel: {
      if (spec.features.empty() && !spec.include_raw_features) {
        return absl::InvalidArgumentError(
            "trained_model attacker needs at least one feature");
      }
      for (const std::string& name : spec.features) {
        if (absl::Status s = DiscriminantByName(name).status(); !s.ok()) {
          return s;
        }
      }
      return spec.attack_trainer.Validate();
    }
    default:
      return absl::OkStatus();
  }
}

absl::StatusOr<MembershipPrediction> RunAttack(const AttackerSpec& spec,
                                               const LtuChallenge& challenge,
                                               const AttackContext& context,
                                               Rng& rng) {
  if (context.model == nullptr && spec.kind != AttackKind::kCoinFlip) {
    return absl::InvalidArgumentError("attack context has no Defender model");
  }
  switch (spec.kind) {
    case AttackKind::kCoinFlip:
      return CoinFlipAttack(rng);
    case AttackKind::kGap: {
      absl::StatusOr<DiscriminantFn> f = DiscriminantByName(spec.discriminant);
      if (!f.ok()) return f.status();
      return GapAttack(challenge, *context.model, *f, rng);
    }
    case AttackKind::kBlf:
      return BlfAttack(challenge, *context.model, spec.blf_loss, rng);
    case AttackKind::kRetrain:
      return RetrainAttack(challenge, context.trainer, *context.model,
                           spec.retrain, rng);
    case AttackKind::kGradient:
      return GradientAttack(challenge, *context.model, spec.gradient_loss,
                            rng);
    case AttackKind::kTrainedModel: {
      TrainedModelOptions options;
      options.attack_trainer = spec.attack_trainer;
      options.include_raw_features = spec.include_raw_features;
      for (const std::string& name : spec.features) {
        absl::StatusOr<DiscriminantFn> f = DiscriminantByName(name);
        if (!f.ok()) return f.status();
        options.features.push_back(*std::move(f));
      }
      return TrainedModelAttack(challenge, *context.model, options, rng);
    }
  }
  return absl::InternalError("unhandled attack kind");
}

}  // namespace ltu
