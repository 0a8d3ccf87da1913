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

#include "ltu/evaluator.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <thread>

#include "absl/status/status.h"
#include "absl/strings/str_cat.h"
#include "ltu/rng.h"

namespace ltu {
namespace {

// Runs body(i) for i in [0, n) on up to num_threads threads. Each index is
// handled independently, so the outcome does not depend on the split.
// Returns the error of the lowest failing index.
absl::Status ParallelFor(int64_t n, int num_threads,
                         const std::function<absl::Status(int64_t)>& body) {
  std::vector<absl::Status> status(static_cast<size_t>(n));
  const int threads =
      static_cast<int>(std::clamp<int64_t>(num_threads, 1, std::max<int64_t>(n, 1)));
  auto worker = [&](int t) {
    for (int64_t i = t; i < n; i += threads) status[i] = body(i);
  };
  if (threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker, t);
    for (std::thread& th : pool) th.join();
  }
  for (const absl::Status& s : status) {
    if (!s.ok()) return s;
  }
  return absl::OkStatus();
}

absl::Status CheckRoundOptions(const RoundOptions& options) {
  if (options.rounds < 1) {
    return absl::InvalidArgumentError(
        absl::StrCat("number of rounds must be >= 1, got ", options.rounds));
  }
  if (options.num_threads < 1) {
    return absl::InvalidArgumentError(absl::StrCat(
        "number of threads must be >= 1, got ", options.num_threads));
  }
  return absl::OkStatus();
}

absl::StatusOr<RoundRecord> PlayRound(const LtuRound& round, int64_t index,
                                      const AttackerSpec& attacker,
                                      const AttackContext& context) {
  Rng rng(DeriveSeed(round.challenge.round_seed, "attacker"));
  absl::StatusOr<MembershipPrediction> prediction =
      RunAttack(attacker, round.challenge, context, rng);
  if (!prediction.ok()) return prediction.status();
  RoundRecord record;
  record.index = index;
  record.round_seed = round.challenge.round_seed;
  record.defender_index = round.defender_index;
  record.reserved_index = round.reserved_index;
  record.truth = round.defender_slot;
  record.claimed = prediction->claimed_defender;
  record.correct = record.claimed == record.truth;
  record.tie = prediction->tie;
  record.confidence = prediction->confidence;
  record.scores = prediction->scores;
  return record;
}

absl::StatusOr<LtuResult> Summarize(const AttackerSpec& attacker,
                                    std::vector<RoundRecord> rounds) {
  LtuResult result;
  result.attacker = attacker.Name();
  result.n = static_cast<int64_t>(rounds.size());
  for (const RoundRecord& r : rounds) {
    result.correct += r.correct ? 1 : 0;
    result.ties += r.tie ? 1 : 0;
    if (attacker.kind == AttackKind::kRetrain && r.tie && r.scores &&
        r.scores->first == 0.0 && r.scores->second == 0.0) {
      ++result.injectivity_violations;
    }
  }
  result.a_ltu =
      static_cast<double>(result.correct) / static_cast<double>(result.n);
  absl::StatusOr<ScoreWithError> privacy = PrivacyScore(result.a_ltu, result.n);
  if (!privacy.ok()) return privacy.status();
  result.privacy = *privacy;
  result.rounds = std::move(rounds);
  return result;
}

using RoundMaker = std::function<LtuRound(uint64_t round_seed)>;

absl::StatusOr<LtuResult> PlayRounds(const RoundMaker& make,
                                     const AttackerSpec& attacker,
                                     const AttackContext& context,
                                     const RoundOptions& options) {
  if (absl::Status s = CheckRoundOptions(options); !s.ok()) return s;
  if (context.model == nullptr) {
    return absl::InvalidArgumentError("attack context has no model");
  }
  if (absl::Status s = ValidateAttackerSpec(attacker); !s.ok()) return s;
  std::vector<RoundRecord> records(static_cast<size_t>(options.rounds));
  absl::Status status =
      ParallelFor(options.rounds, options.num_threads, [&](int64_t i) {
        const LtuRound round = make(RoundSeed(options.master_seed, i));
        absl::StatusOr<RoundRecord> record =
            PlayRound(round, i, attacker, context);
        if (!record.ok()) {
          return absl::Status(
              record.status().code(),
              absl::StrCat("round ", i, ": ", record.status().message()));
        }
        records[i] = *std::move(record);
        return absl::OkStatus();
      });
  if (!status.ok()) return status;
  return Summarize(attacker, std::move(records));
}

const char* MembershipTag(MembershipLabel m) {
  return m == MembershipLabel::kDefender ? "defender" : "reserved";
}

}  // namespace

absl::StatusOr<ScoreWithError> PrivacyScore(double a_ltu, int64_t n) {
  if (!(a_ltu >= 0.0 && a_ltu <= 1.0)) {
    return absl::InvalidArgumentError(
        absl::StrCat("LTU accuracy must lie in [0, 1], got ", a_ltu));
  }
  if (n < 1) {
    return absl::InvalidArgumentError(
        absl::StrCat("number of rounds must be >= 1, got ", n));
  }
  ScoreWithError s;
  s.value = std::min(2.0 * (1.0 - a_ltu), 1.0);
  s.std_error = 2.0 * std::sqrt(a_ltu * (1.0 - a_ltu) / static_cast<double>(n));
  s.n = n;
  return s;
}

absl::StatusOr<ScoreWithError> UtilityScoreFromAccuracy(double a_d,
                                                        int num_classes,
                                                        int64_t n) {
  if (!(a_d >= 0.0 && a_d <= 1.0)) {
    return absl::InvalidArgumentError(
        absl::StrCat("accuracy must lie in [0, 1], got ", a_d));
  }
  if (num_classes < 2) {
    return absl::InvalidArgumentError(
        absl::StrCat("number of classes must be >= 2, got ", num_classes));
  }
  if (n < 1) {
    return absl::InvalidArgumentError(
        absl::StrCat("reserved set size must be >= 1, got ", n));
  }
  const double c = num_classes;
  ScoreWithError s;
  s.value = std::max((c * a_d - 1.0) / (c - 1.0), 0.0);
  s.std_error = c * std::sqrt(a_d * (1.0 - a_d) / static_cast<double>(n));
  s.n = n;
  return s;
}

absl::StatusOr<UtilityReport> UtilityScore(const DefenderModel& model,
                                           const LabeledDataset& reserved) {
  if (reserved.empty()) {
    return absl::InvalidArgumentError("reserved set is empty");
  }
  if (reserved.dim() != model.dim() ||
      reserved.num_classes() != model.num_classes()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "reserved set shape (dim ", reserved.dim(), ", classes ",
        reserved.num_classes(), ") does not match the model (dim ",
        model.dim(), ", classes ", model.num_classes(), ")"));
  }
  UtilityReport report;
  for (size_t i = 0; i < reserved.size(); ++i) {
    if (model.Predict(reserved.features(i)) == reserved.label(i)) {
      ++report.correct;
    }
  }
  const int64_t n = static_cast<int64_t>(reserved.size());
  report.a_d = static_cast<double>(report.correct) / static_cast<double>(n);
  absl::StatusOr<ScoreWithError> score =
      UtilityScoreFromAccuracy(report.a_d, model.num_classes(), n);
  if (!score.ok()) return score.status();
  report.score = *score;
  // Computed from counts so that chance-level accuracy maps to exactly 0.
  const int64_t c = model.num_classes();
  report.score.value =
      static_cast<double>(std::max<int64_t>(c * report.correct - n, 0)) /
      static_cast<double>(n * (c - 1));
  return report;
}

const char* TrainingRegimeName(TrainingRegime regime) {
  switch (regime) {
    case TrainingRegime::kOriginalOrderSeeded:
      return "orig-order-seeded";
    case TrainingRegime::kRandomOrderSeeded:
      return "rand-order-seeded";
    case TrainingRegime::kNotSeeded:
      return "not-seeded";
  }
  return "unknown";
}

absl::StatusOr<TrainingRegime> ParseTrainingRegime(absl::string_view name) {
  for (TrainingRegime r :
       {TrainingRegime::kOriginalOrderSeeded,
        TrainingRegime::kRandomOrderSeeded, TrainingRegime::kNotSeeded}) {
    if (name == TrainingRegimeName(r)) return r;
  }
  return absl::InvalidArgumentError(absl::StrCat(
      "unknown regime '", name,
      "' (expected orig-order-seeded, rand-order-seeded or not-seeded)"));
}

absl::StatusOr<TrainedDefender> TrainDefender(const LabeledDataset& defender,
                                              const TrainerConfig& trainer,
                                              TrainingRegime regime,
                                              uint64_t master_seed) {
  if (absl::Status s = trainer.Validate(); !s.ok()) return s;
  if (defender.empty()) {
    return absl::InvalidArgumentError("defender set is empty");
  }
  const uint64_t train_seed = DeriveSeed(master_seed, "defender-train");
  absl::StatusOr<DefenderModel> model;
  if (regime == TrainingRegime::kOriginalOrderSeeded) {
    model = Train(trainer, defender, train_seed);
  } else {
    Rng order_rng(DeriveSeed(master_seed, "defender-order"));
    const std::vector<size_t> perm = order_rng.Permutation(defender.size());
    model = Train(trainer, defender.Subset(perm), train_seed);
  }
  if (!model.ok()) return model.status();
  TrainerAccess access;
  access.config = trainer;
  if (regime != TrainingRegime::kNotSeeded) access.seed = train_seed;
  access.original_order = regime == TrainingRegime::kOriginalOrderSeeded;
  return TrainedDefender{*std::move(model), std::move(access)};
}

uint64_t RoundSeed(uint64_t master_seed, int64_t index) {
  return DeriveSeed(master_seed, static_cast<uint64_t>(index));
}

absl::StatusOr<LtuResult> RunRounds(const LtuRoundFactory& factory,
                                    const AttackerSpec& attacker,
                                    const AttackContext& context,
                                    const RoundOptions& options) {
  return PlayRounds(
      [&factory](uint64_t seed) { return factory.Make(seed); }, attacker,
      context, options);
}

absl::StatusOr<LtuResult> RunLtu(const LabeledDataset& defender,
                                 const LabeledDataset& reserved,
                                 const TrainerConfig& trainer,
                                 const AttackerSpec& attacker, int64_t rounds,
                                 uint64_t master_seed, TrainingRegime regime) {
  absl::StatusOr<LtuRoundFactory> factory =
      LtuRoundFactory::Create(defender, reserved);
  if (!factory.ok()) return factory.status();
  absl::StatusOr<TrainedDefender> trained =
      TrainDefender(defender, trainer, regime, master_seed);
  if (!trained.ok()) return trained.status();
  AttackContext context{&trained->model, trained->access};
  RoundOptions options;
  options.rounds = rounds;
  options.master_seed = DeriveSeed(master_seed, "rounds");
  return RunRounds(*factory, attacker, context, options);
}

absl::StatusOr<IndividualScore> IndividualPrivacy(
    const LtuRoundFactory& factory, MembershipLabel membership, size_t index,
    const AttackerSpec& attacker, const AttackContext& context,
    const RoundOptions& options) {
  const bool pin_defender = membership == MembershipLabel::kDefender;
  const size_t limit =
      pin_defender ? factory.defender().size() : factory.reserved().size();
  if (index >= limit) {
    return absl::OutOfRangeError(absl::StrCat(
        MembershipTag(membership), " index ", index, " out of range (size ",
        limit, ")"));
  }
  RoundMaker make = [&factory, pin_defender, index](uint64_t seed) {
    return pin_defender ? factory.MakeWithDefender(index, seed)
                        : factory.MakeWithReserved(index, seed);
  };
  absl::StatusOr<LtuResult> result =
      PlayRounds(make, attacker, context, options);
  if (!result.ok()) return result.status();
  IndividualScore score;
  score.membership = membership;
  score.index = index;
  score.a_ltu = result->a_ltu;
  score.privacy = result->privacy;
  return score;
}

absl::StatusOr<ScoreWithError> IndividualPrivacy(
    const Sample& d, const LabeledDataset& reserved,
    const LabeledDataset& defender_rest, const AttackerSpec& attacker,
    const AttackContext& context, const RoundOptions& options) {
  LabeledDataset defender = defender_rest.WithInserted(defender_rest.size(), d);
  absl::StatusOr<LtuRoundFactory> factory =
      LtuRoundFactory::Create(std::move(defender), reserved);
  if (!factory.ok()) return factory.status();
  absl::StatusOr<IndividualScore> score = IndividualPrivacy(
      *factory, MembershipLabel::kDefender, defender_rest.size(), attacker,
      context, options);
  if (!score.ok()) return score.status();
  return score->privacy;
}

std::vector<HistogramBin> Histogram(const std::vector<double>& values,
                                    int num_bins) {
  num_bins = std::max(num_bins, 1);
  std::vector<HistogramBin> bins(static_cast<size_t>(num_bins));
  for (int b = 0; b < num_bins; ++b) {
    bins[b].low = static_cast<double>(b) / num_bins;
    bins[b].high = static_cast<double>(b + 1) / num_bins;
  }
  for (double v : values) {
    const double clamped = std::clamp(v, 0.0, 1.0);
    int b = static_cast<int>(std::floor(clamped * num_bins));
    b = std::min(b, num_bins - 1);
    ++bins[b].count;
  }
  return bins;
}

absl::StatusOr<IndividualPrivacyReport> ComputeIndividualPrivacy(
    const LtuRoundFactory& factory, const AttackerSpec& attacker,
    const AttackContext& context, const IndividualOptions& options) {
  if (options.num_bins < 1) {
    return absl::InvalidArgumentError(
        absl::StrCat("number of bins must be >= 1, got ", options.num_bins));
  }
  struct Target {
    MembershipLabel membership;
    size_t index;
  };
  std::vector<Target> targets;
  auto add_side = [&](MembershipLabel m, size_t size) {
    const size_t count =
        options.max_samples == 0 ? size : std::min(size, options.max_samples);
    for (size_t i = 0; i < count; ++i) targets.push_back({m, i});
  };
  add_side(MembershipLabel::kDefender, factory.defender().size());
  if (options.include_reserved) {
    add_side(MembershipLabel::kReserved, factory.reserved().size());
  }

  IndividualPrivacyReport report;
  report.scores.resize(targets.size());
  absl::Status status = ParallelFor(
      static_cast<int64_t>(targets.size()), options.num_threads,
      [&](int64_t t) {
        const Target& target = targets[t];
        RoundOptions round_options;
        round_options.rounds = options.rounds_per_sample;
        round_options.master_seed = DeriveSeed(
            DeriveSeed(options.seed, MembershipTag(target.membership)),
            target.index);
        absl::StatusOr<IndividualScore> score =
            IndividualPrivacy(factory, target.membership, target.index,
                              attacker, context, round_options);
        if (!score.ok()) return score.status();
        report.scores[t] = *score;
        return absl::OkStatus();
      });
  if (!status.ok()) return status;

  std::vector<double> values;
  values.reserve(report.scores.size());
  for (const IndividualScore& s : report.scores) values.push_back(s.privacy.value);
  report.histogram = Histogram(values, options.num_bins);
  return report;
}

double PairwiseAccuracyFromScores(const std::vector<double>& defender_scores,
                                  const std::vector<double>& reserved_scores) {
  if (defender_scores.empty() || reserved_scores.empty()) return 0.5;
  std::vector<double> sorted_r = reserved_scores;
  std::sort(sorted_r.begin(), sorted_r.end());
  // Each pair scores 2 (win), 1 (tie) or 0; halved at the end.
  uint64_t twice_wins = 0;
  for (double d : defender_scores) {
    const auto lo = std::lower_bound(sorted_r.begin(), sorted_r.end(), d);
    const auto hi = std::upper_bound(sorted_r.begin(), sorted_r.end(), d);
    twice_wins += 2 * static_cast<uint64_t>(sorted_r.end() - hi) +
                  static_cast<uint64_t>(hi - lo);
  }
  const double pairs = static_cast<double>(defender_scores.size()) *
                       static_cast<double>(reserved_scores.size());
  return static_cast<double>(twice_wins) / (2.0 * pairs);
}

nlohmann::json ScoreToJson(const ScoreWithError& score) {
  return nlohmann::json{
      {"value", score.value}, {"stderr", score.std_error}, {"n", score.n}};
}

nlohmann::json LtuResultToJson(const LtuResult& result, bool include_rounds) {
  nlohmann::json j;
  j["attacker"] = result.attacker;
  j["n"] = result.n;
  j["correct"] = result.correct;
  j["a_ltu"] = result.a_ltu;
  j["privacy"] = ScoreToJson(result.privacy);
  j["privacy"]["a_ltu"] = result.a_ltu;
  // The binomial error estimate collapses to zero at the extremes.
  j["degenerate_stderr"] = result.correct == 0 || result.correct == result.n;
  j["ties"] = result.ties;
  j["injectivity_violations"] = result.injectivity_violations;
  if (include_rounds) {
    nlohmann::json rounds = nlohmann::json::array();
    for (const RoundRecord& r : result.rounds) {
      nlohmann::json jr{{"index", r.index},
                        {"round_seed", r.round_seed},
                        {"defender_index", r.defender_index},
                        {"reserved_index", r.reserved_index},
                        {"defender_slot", r.truth == PairSlot::kFirst ? 1 : 2},
                        {"claimed_slot", r.claimed == PairSlot::kFirst ? 1 : 2},
                        {"correct", r.correct},
                        {"tie", r.tie},
                        {"confidence", r.confidence}};
      if (r.scores) {
        jr["scores"] = nlohmann::json::array({r.scores->first, r.scores->second});
      }
      rounds.push_back(std::move(jr));
    }
    j["per_round"] = std::move(rounds);
  }
  return j;
}

nlohmann::json IndividualReportToJson(const IndividualPrivacyReport& report) {
  nlohmann::json scores = nlohmann::json::array();
  for (const IndividualScore& s : report.scores) {
    scores.push_back({{"membership", MembershipTag(s.membership)},
                      {"index", s.index},
                      {"a_ltu", s.a_ltu},
                      {"privacy", ScoreToJson(s.privacy)}});
  }
  nlohmann::json bins = nlohmann::json::array();
  for (const HistogramBin& b : report.histogram) {
    bins.push_back({{"low", b.low}, {"high", b.high}, {"count", b.count}});
  }
  return nlohmann::json{{"individual_scores", std::move(scores)},
                        {"histogram", std::move(bins)}};
}

}  // namespace ltu
