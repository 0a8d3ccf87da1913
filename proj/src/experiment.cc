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

#include "ltu/experiment.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "absl/strings/ascii.h"
#include "absl/strings/numbers.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "absl/strings/str_join.h"
#include "absl/strings/str_split.h"
#include "absl/strings/strip.h"
#include "absl/time/clock.h"
#include "absl/time/time.h"
#include "ltu/oracle.h"
#include "ltu/rng.h"

namespace ltu {
namespace {

using nlohmann::json;

std::string FormatDouble(double v) { return absl::StrFormat("%.17g", v); }

absl::Status KeyError(absl::string_view key, absl::string_view message) {
  return absl::InvalidArgumentError(
      absl::StrCat("config key '", key, "': ", message));
}

absl::Status WithKey(absl::string_view key, const absl::Status& status) {
  if (status.ok()) return status;
  return absl::Status(status.code(), absl::StrCat("config key '", key,
                                                  "': ", status.message()));
}

template <typename T>
absl::Status ParseInteger(absl::string_view key, absl::string_view value,
                          T& out) {
  T parsed;
  if (!absl::SimpleAtoi(value, &parsed)) {
    return KeyError(key, absl::StrCat("expected an integer, got '", value, "'"));
  }
  out = parsed;
  return absl::OkStatus();
}

absl::Status ParseReal(absl::string_view key, absl::string_view value,
                       double& out) {
  double parsed;
  if (!absl::SimpleAtod(value, &parsed) || !std::isfinite(parsed)) {
    return KeyError(key,
                    absl::StrCat("expected a finite number, got '", value, "'"));
  }
  out = parsed;
  return absl::OkStatus();
}

absl::Status ParseFlag(absl::string_view key, absl::string_view value,
                       bool& out) {
  if (!absl::SimpleAtob(value, &out)) {
    return KeyError(key, absl::StrCat("expected true or false, got '", value,
                                      "'"));
  }
  return absl::OkStatus();
}

const char* SourceName(DatasetSource s) {
  return s == DatasetSource::kSynthetic ? "synthetic" : "csv";
}

std::vector<std::pair<std::string, std::string>> ConfigKeyValues(
    const ExperimentConfig& c) {
  std::vector<std::pair<std::string, std::string>> kv;
  kv.emplace_back("seed", c.seed ? absl::StrCat(*c.seed) : "");
  kv.emplace_back("dataset.source", SourceName(c.source));
  kv.emplace_back("dataset.path", c.dataset_path);
  kv.emplace_back("dataset.num_classes", c.dataset_num_classes
                                             ? absl::StrCat(*c.dataset_num_classes)
                                             : "");
  kv.emplace_back("synthetic.classes", absl::StrCat(c.synthetic.classes));
  kv.emplace_back("synthetic.dim", absl::StrCat(c.synthetic.dim));
  kv.emplace_back("synthetic.per_class", absl::StrCat(c.synthetic.per_class));
  kv.emplace_back("synthetic.separation", FormatDouble(c.synthetic.separation));
  kv.emplace_back("synthetic.noise", FormatDouble(c.synthetic.noise));
  kv.emplace_back("split.fraction", FormatDouble(c.split_fraction));
  kv.emplace_back("flip_fraction", FormatDouble(c.flip_fraction));
  kv.emplace_back("regime", TrainingRegimeName(c.regime));
  for (auto& [k, v] : TrainerConfigToKeyValues(c.trainer)) {
    kv.emplace_back(absl::StrCat("trainer.", k), v);
  }
  for (auto& [k, v] : AttackerSpecToKeyValues(c.attacker)) {
    kv.emplace_back(absl::StrCat("attacker.", k), v);
  }
  for (size_t i = 0; i < c.compare.size(); ++i) {
    for (auto& [k, v] : AttackerSpecToKeyValues(c.compare[i])) {
      kv.emplace_back(absl::StrCat("compare.", i, ".", k), v);
    }
  }
  kv.emplace_back("rounds", absl::StrCat(c.rounds));
  kv.emplace_back("trials", absl::StrCat(c.trials));
  kv.emplace_back("threads", absl::StrCat(c.threads));
  kv.emplace_back("individual.rounds", absl::StrCat(c.individual_rounds));
  kv.emplace_back("individual.max_samples",
                  absl::StrCat(c.individual_max_samples));
  kv.emplace_back("individual.include_reserved",
                  c.individual_include_reserved ? "true" : "false");
  kv.emplace_back("individual.bins", absl::StrCat(c.individual_bins));
  std::vector<std::string> algorithms;
  for (Algorithm a : c.grid_algorithms) algorithms.push_back(AlgorithmName(a));
  kv.emplace_back("grid.algorithms", absl::StrJoin(algorithms, ","));
  std::vector<std::string> regimes;
  for (TrainingRegime r : c.grid_regimes) regimes.push_back(TrainingRegimeName(r));
  kv.emplace_back("grid.regimes", absl::StrJoin(regimes, ","));
  kv.emplace_back("output_dir", c.output_dir);
  return kv;
}

json CapabilitiesToJson(const TrainerCapabilities& caps) {
  return json{{"deterministic", caps.deterministic},
              {"order_invariant", caps.order_invariant},
              {"example_based", caps.example_based},
              {"differentiable", caps.differentiable}};
}


json SeedsToJson(const TrialSeeds& s) {
  return json{{"trial", s.trial},       {"data", s.data},
              {"split", s.split},       {"flip", s.flip},
              {"defender", s.defender}, {"rounds", s.rounds},
              {"individual", s.individual}};
}

// Mean over trials; the error is that of the mean of independent trials.
json AggregateScores(const std::vector<ScoreWithError>& scores) {
  double value = 0.0;
  double variance = 0.0;
  int64_t n = 0;
  json per_trial = json::array();
  for (const ScoreWithError& s : scores) {
    n += s.n;
    value += s.value;
    variance += s.std_error * s.std_error;
    per_trial.push_back(s.value);
  }
  const double t = static_cast<double>(scores.size());
  return json{{"value", value / t},
              {"stderr", std::sqrt(variance) / t},
              {"n", n},
              {"trials", scores.size()},
              {"per_trial", std::move(per_trial)}};
}

absl::Status Annotate(const absl::Status& status, absl::string_view context) {
  if (status.ok()) return status;
  return absl::Status(status.code(),
                      absl::StrCat(context, ": ", status.message()));
}

absl::Status WriteFile(const std::filesystem::path& path,
                       absl::string_view contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    return absl::PermissionDeniedError(
        absl::StrCat("cannot open ", path.string(), " for writing"));
  }
  out << contents;
  out.close();
  if (!out) {
    return absl::DataLossError(absl::StrCat("failed writing ", path.string()));
  }
  return absl::OkStatus();
}

struct PreparedTrial {
  TrialData data;
  TrainedDefender trained;
  LtuRoundFactory factory;
  UtilityReport utility;
};

absl::StatusOr<PreparedTrial> PrepareTrial(const ExperimentConfig& config,
                                           const TrainerConfig& trainer,
                                           TrainingRegime regime,
                                           const TrialSeeds& seeds) {
  absl::StatusOr<TrialData> data = LoadTrialData(config, seeds);
  if (!data.ok()) return Annotate(data.status(), "dataset");
  absl::StatusOr<TrainedDefender> trained =
      TrainDefender(data->defender, trainer, regime, seeds.defender);
  if (!trained.ok()) return Annotate(trained.status(), "defender training");
  absl::StatusOr<UtilityReport> utility =
      UtilityScore(trained->model, data->reserved);
  if (!utility.ok()) return Annotate(utility.status(), "utility");
  absl::StatusOr<LtuRoundFactory> factory =
      LtuRoundFactory::Create(data->defender, data->reserved);
  if (!factory.ok()) return Annotate(factory.status(), "rounds");
  return PreparedTrial{*std::move(data), *std::move(trained),
                       *std::move(factory), *utility};
}

json UtilityToJson(const UtilityReport& u) {
  json j = ScoreToJson(u.score);
  j["a_d"] = u.a_d;
  j["correct"] = u.correct;
  return j;
}

std::vector<std::string> SplitList(absl::string_view value) {
  std::vector<std::string> items;
  for (absl::string_view item : absl::StrSplit(value, ',')) {
    item = absl::StripAsciiWhitespace(item);
    if (!item.empty()) items.emplace_back(item);
  }
  return items;
}

absl::Status RequireSeed(const ExperimentConfig& config) {
  if (!config.seed) {
    return absl::FailedPreconditionError("config seed is not resolved");
  }
  return ValidateExperimentConfig(config);
}

}  // namespace

absl::Status SetExperimentValue(ExperimentConfig& config, absl::string_view key,
                                absl::string_view value) {
  if (key == "seed") {
    if (value.empty()) {
      config.seed.reset();
      return absl::OkStatus();
    }
    uint64_t seed;
    if (absl::Status s = ParseInteger(key, value, seed); !s.ok()) return s;
    config.seed = seed;
  } else if (key == "dataset.source") {
    if (value == "synthetic") {
      config.source = DatasetSource::kSynthetic;
    } else if (value == "csv") {
      config.source = DatasetSource::kCsv;
    } else {
      return KeyError(key, absl::StrCat("expected synthetic or csv, got '",
                                        value, "'"));
    }
  } else if (key == "dataset.path") {
    config.dataset_path = std::string(value);
  } else if (key == "dataset.num_classes") {
    if (value.empty()) {
      config.dataset_num_classes.reset();
      return absl::OkStatus();
    }
    int c;
    if (absl::Status s = ParseInteger(key, value, c); !s.ok()) return s;
    config.dataset_num_classes = c;
  } else if (key == "synthetic.classes") {
    return ParseInteger(key, value, config.synthetic.classes);
  } else if (key == "synthetic.dim") {
    return ParseInteger(key, value, config.synthetic.dim);
  } else if (key == "synthetic.per_class") {
    return ParseInteger(key, value, config.synthetic.per_class);
  } else if (key == "synthetic.separation") {
    return ParseReal(key, value, config.synthetic.separation);
  } else if (key == "synthetic.noise") {
    return ParseReal(key, value, config.synthetic.noise);
  } else if (key == "split.fraction") {
    return ParseReal(key, value, config.split_fraction);
  } else if (key == "flip_fraction") {
    return ParseReal(key, value, config.flip_fraction);
  } else if (key == "regime") {
    absl::StatusOr<TrainingRegime> regime = ParseTrainingRegime(value);
    if (!regime.ok()) return WithKey(key, regime.status());
    config.regime = *regime;
  } else if (absl::StartsWith(key, "trainer.")) {
    return WithKey(key, SetTrainerConfigValue(
                            config.trainer,
                            key.substr(std::string_view("trainer.").size()),
                            value));
  } else if (absl::StartsWith(key, "attacker.")) {
    return WithKey(key, SetAttackerSpecValue(
                            config.attacker,
                            key.substr(std::string_view("attacker.").size()),
                            value));
  } else if (absl::StartsWith(key, "compare.")) {
    absl::string_view rest = key.substr(std::string_view("compare.").size());
    const size_t dot = rest.find('.');
    size_t index;
    if (dot == absl::string_view::npos ||
        !absl::SimpleAtoi(rest.substr(0, dot), &index) || index >= 64) {
      return KeyError(key, "expected compare.<index>.<attacker key> with "
                           "index below 64");
    }
    if (config.compare.size() <= index) config.compare.resize(index + 1);
    return WithKey(key, SetAttackerSpecValue(config.compare[index],
                                             rest.substr(dot + 1), value));
  } else if (key == "rounds") {
    return ParseInteger(key, value, config.rounds);
  } else if (key == "trials") {
    return ParseInteger(key, value, config.trials);
  } else if (key == "threads") {
    return ParseInteger(key, value, config.threads);
  } else if (key == "individual.rounds") {
    return ParseInteger(key, value, config.individual_rounds);
  } else if (key == "individual.max_samples") {
    return ParseInteger(key, value, config.individual_max_samples);
  } else if (key == "individual.include_reserved") {
    return ParseFlag(key, value, config.individual_include_reserved);
  } else if (key == "individual.bins") {
    return ParseInteger(key, value, config.individual_bins);
  } else if (key == "grid.algorithms") {
    std::vector<Algorithm> algorithms;
    for (const std::string& item : SplitList(value)) {
      absl::StatusOr<Algorithm> a = ParseAlgorithm(item);
      if (!a.ok()) return WithKey(key, a.status());
      algorithms.push_back(*a);
    }
    config.grid_algorithms = std::move(algorithms);
  } else if (key == "grid.regimes") {
    std::vector<TrainingRegime> regimes;
    for (const std::string& item : SplitList(value)) {
      absl::StatusOr<TrainingRegime> r = ParseTrainingRegime(item);
      if (!r.ok()) return WithKey(key, r.status());
      regimes.push_back(*r);
    }
    config.grid_regimes = std::move(regimes);
  } else if (key == "output_dir") {
    config.output_dir = std::string(value);
  } else {
    return KeyError(key, "unknown key");
  }
  return absl::OkStatus();
}

absl::StatusOr<ExperimentConfig> ParseExperimentConfig(absl::string_view text) {
  ExperimentConfig config;
  std::map<std::string, int> seen;
  int line_number = 0;
  for (absl::string_view line : absl::StrSplit(text, '\n')) {
    ++line_number;
    line = absl::StripAsciiWhitespace(line);
    if (line.empty() || line.front() == '#') continue;
    const size_t eq = line.find('=');
    if (eq == absl::string_view::npos) {
      return absl::InvalidArgumentError(absl::StrCat(
          "line ", line_number, ": expected 'key = value', got '", line, "'"));
    }
    const std::string key(absl::StripAsciiWhitespace(line.substr(0, eq)));
    const absl::string_view value =
        absl::StripAsciiWhitespace(line.substr(eq + 1));
    if (auto [it, inserted] = seen.emplace(key, line_number); !inserted) {
      return absl::InvalidArgumentError(
          absl::StrCat("line ", line_number, ": key '", key,
                       "' already set on line ", it->second));
    }
    if (absl::Status s = SetExperimentValue(config, key, value); !s.ok()) {
      return Annotate(s, absl::StrCat("line ", line_number));
    }
  }
  if (absl::Status s = ValidateExperimentConfig(config); !s.ok()) return s;
  return config;
}

absl::StatusOr<ExperimentConfig> LoadExperimentConfig(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return absl::NotFoundError(absl::StrCat("cannot open ", path));
  std::stringstream buffer;
  buffer << in.rdbuf();
  absl::StatusOr<ExperimentConfig> config = ParseExperimentConfig(buffer.str());
  if (!config.ok()) return Annotate(config.status(), path);
  return config;
}

absl::Status ValidateExperimentConfig(const ExperimentConfig& c) {
  if (c.source == DatasetSource::kCsv && c.dataset_path.empty()) {
    return KeyError("dataset.path", "required when dataset.source = csv");
  }
  if (c.dataset_num_classes && *c.dataset_num_classes < 2) {
    return KeyError("dataset.num_classes", "must be >= 2");
  }
  if (c.synthetic.classes < 2) return KeyError("synthetic.classes", "must be >= 2");
  if (c.synthetic.dim < 1) return KeyError("synthetic.dim", "must be >= 1");
  if (c.synthetic.per_class < 1) {
    return KeyError("synthetic.per_class", "must be >= 1");
  }
  if (!(c.synthetic.separation >= 0.0)) {
    return KeyError("synthetic.separation", "must be >= 0");
  }
  if (!(c.synthetic.noise >= 0.0)) return KeyError("synthetic.noise", "must be >= 0");
  if (!(c.split_fraction > 0.0 && c.split_fraction < 1.0)) {
    return KeyError("split.fraction", "must lie in (0, 1)");
  }
  if (!(c.flip_fraction >= 0.0 && c.flip_fraction <= 1.0)) {
    return KeyError("flip_fraction", "must lie in [0, 1]");
  }
  if (absl::Status s = c.trainer.Validate(); !s.ok()) return WithKey("trainer", s);
  if (c.regime == TrainingRegime::kNotSeeded &&
      c.trainer.init_seed_policy.is_fixed()) {
    return KeyError("regime",
                    "not-seeded conflicts with trainer.seed, which releases "
                    "the training seed with the trainer");
  }
  if (absl::Status s = ValidateAttackerSpec(c.attacker); !s.ok()) {
    return WithKey("attacker", s);
  }
  for (size_t i = 0; i < c.compare.size(); ++i) {
    if (absl::Status s = ValidateAttackerSpec(c.compare[i]); !s.ok()) {
      return WithKey(absl::StrCat("compare.", i), s);
    }
  }
  if (c.rounds < 1) return KeyError("rounds", "must be >= 1");
  if (c.trials < 1) return KeyError("trials", "must be >= 1");
  if (c.threads < 1 || c.threads > 256) {
    return KeyError("threads", "must lie in [1, 256]");
  }
  if (c.individual_rounds < 0) return KeyError("individual.rounds", "must be >= 0");
  if (c.individual_bins < 1 || c.individual_bins > 1000) {
    return KeyError("individual.bins", "must lie in [1, 1000]");
  }
  if (c.output_dir.empty()) return KeyError("output_dir", "must not be empty");
  return absl::OkStatus();
}

void ResolveSeed(ExperimentConfig& config) {
  if (config.seed) return;
  std::random_device device;
  config.seed = (static_cast<uint64_t>(device()) << 32) ^ device();
}

std::string ExperimentConfigToText(const ExperimentConfig& config) {
  std::string out;
  for (const auto& [key, value] : ConfigKeyValues(config)) {
    absl::StrAppend(&out, key, " = ", value, "\n");
  }
  return out;
}

json ExperimentConfigToJson(const ExperimentConfig& config) {
  json j = json::object();
  for (const auto& [key, value] : ConfigKeyValues(config)) {
    // Where a run is written does not affect its results.
    if (key != "output_dir") j[key] = value;
  }
  return j;
}

TrialSeeds SeedsForTrial(uint64_t master_seed, int trial) {
  TrialSeeds s;
  s.trial = DeriveSeed(master_seed, static_cast<uint64_t>(trial));
  s.data = DeriveSeed(s.trial, "data");
  s.split = DeriveSeed(s.trial, "split");
  s.flip = DeriveSeed(s.trial, "flip");
  s.defender = DeriveSeed(s.trial, "defender");
  s.rounds = DeriveSeed(s.trial, "rounds");
  s.individual = DeriveSeed(s.trial, "individual");
  return s;
}

absl::StatusOr<TrialData> LoadTrialData(const ExperimentConfig& config,
                                        const TrialSeeds& seeds) {
  absl::StatusOr<LabeledDataset> source =
      config.source == DatasetSource::kSynthetic
          ? GenerateBlobs(config.synthetic.classes, config.synthetic.dim,
                          config.synthetic.per_class,
                          config.synthetic.separation, config.synthetic.noise,
                          seeds.data)
          : LoadCsv(config.dataset_path, config.dataset_num_classes);
  if (!source.ok()) return source.status();
  if (config.flip_fraction > 0.0) {
    source = FlipLabels(*source, config.flip_fraction, seeds.flip);
    if (!source.ok()) return source.status();
  }
  absl::StatusOr<std::pair<LabeledDataset, LabeledDataset>> split =
      SplitSource(*source, config.split_fraction, seeds.split);
  if (!split.ok()) return split.status();
  return TrialData{std::move(split->first), std::move(split->second)};
}

absl::StatusOr<json> ComputeReport(const ExperimentConfig& config) {
  if (absl::Status s = RequireSeed(config); !s.ok()) return s;
  const TrainerCapabilities caps = config.trainer.Capabilities();
  std::vector<ScoreWithError> utilities;
  std::vector<ScoreWithError> privacies;
  json trials = json::array();
  json individual_scores = json::array();
  std::vector<double> individual_values;
  double a_ltu_sum = 0.0;
  double a_d_sum = 0.0;

  for (int t = 0; t < config.trials; ++t) {
    const std::string where = absl::StrCat("trial ", t);
    const TrialSeeds seeds = SeedsForTrial(*config.seed, t);
    absl::StatusOr<PreparedTrial> trial =
        PrepareTrial(config, config.trainer, config.regime, seeds);
    if (!trial.ok()) return Annotate(trial.status(), where);
    const AttackContext context{&trial->trained.model, trial->trained.access};
    RoundOptions options;
    options.rounds = config.rounds;
    options.master_seed = seeds.rounds;
    options.num_threads = config.threads;
    absl::StatusOr<LtuResult> result =
        RunRounds(trial->factory, config.attacker, context, options);
    if (!result.ok()) {
      return Annotate(result.status(), absl::StrCat(where, ": attack"));
    }
    utilities.push_back(trial->utility.score);
    privacies.push_back(result->privacy);
    a_ltu_sum += result->a_ltu;
    a_d_sum += trial->utility.a_d;

    json jt;
    jt["trial"] = t;
    jt["seeds"] = SeedsToJson(seeds);
    jt["defender_size"] = trial->data.defender.size();
    jt["reserved_size"] = trial->data.reserved.size();
    jt["utility"] = UtilityToJson(trial->utility);
    jt["ltu"] = LtuResultToJson(*result);

    if (config.individual_rounds > 0) {
      IndividualOptions io;
      io.rounds_per_sample = config.individual_rounds;
      io.max_samples = config.individual_max_samples;
      io.include_reserved = config.individual_include_reserved;
      io.num_bins = config.individual_bins;
      io.seed = seeds.individual;
      io.num_threads = config.threads;
      absl::StatusOr<IndividualPrivacyReport> individual =
          ComputeIndividualPrivacy(trial->factory, config.attacker, context,
                                   io);
      if (!individual.ok()) {
        return Annotate(individual.status(),
                        absl::StrCat(where, ": individual scores"));
      }
      for (const IndividualScore& s : individual->scores) {
        individual_scores.push_back(
            {{"trial", t},
             {"membership", MembershipLabelName(s.membership)},
             {"index", s.index},
             {"a_ltu", s.a_ltu},
             {"privacy", ScoreToJson(s.privacy)}});
        individual_values.push_back(s.privacy.value);
      }
    }
    trials.push_back(std::move(jt));
  }

  json histogram = json::array();
  if (config.individual_rounds > 0) {
    for (const HistogramBin& b :
         Histogram(individual_values, config.individual_bins)) {
      histogram.push_back(
          {{"bin_low", b.low}, {"bin_high", b.high}, {"count", b.count}});
    }
  }

  json report;
  report["config"] = ExperimentConfigToJson(config);
  report["seed"] = *config.seed;
  report["regime"] = TrainingRegimeName(config.regime);
  report["trainer"] = {{"algorithm", AlgorithmName(config.trainer.algorithm)},
                       {"capabilities", CapabilitiesToJson(caps)}};
  report["example_based"] = caps.example_based;
  if (caps.example_based) {
    report["example_based_note"] =
        "the model stores training samples verbatim; black-box privacy "
        "scores do not measure this leak";
  }
  report["attacker"] = config.attacker.Name();
  if (config.attacker.kind == AttackKind::kGradient) {
    report["gradient_direction"] = "smaller norm claimed as defender member";
  }
  report["utility"] = AggregateScores(utilities);
  report["utility"]["a_d"] = a_d_sum / config.trials;
  report["privacy"] = AggregateScores(privacies);
  report["privacy"]["a_ltu"] = a_ltu_sum / config.trials;
  report["a_ltu"] = a_ltu_sum / config.trials;
  report["trials"] = std::move(trials);
  report["individual_scores"] = std::move(individual_scores);
  report["histogram"] = std::move(histogram);
  return report;
}

absl::StatusOr<std::string> CreateRunDirectory(const std::string& parent,
                                               absl::string_view prefix,
                                               uint64_t seed) {
  std::error_code ec;
  std::filesystem::create_directories(parent, ec);
  if (ec) {
    return absl::PermissionDeniedError(
        absl::StrCat("cannot create ", parent, ": ", ec.message()));
  }
  const std::string stamp = absl::FormatTime("%Y%m%dT%H%M%SZ", absl::Now(),
                                             absl::UTCTimeZone());
  const std::string base =
      absl::StrCat(prefix, "-", stamp, "-", absl::Hex(seed, absl::kZeroPad16));
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::filesystem::path dir = std::filesystem::path(parent) /
                                (attempt == 0 ? base
                                              : absl::StrCat(base, "-", attempt));
    if (std::filesystem::create_directory(dir, ec)) return dir.string();
    if (ec) {
      return absl::PermissionDeniedError(
          absl::StrCat("cannot create ", dir.string(), ": ", ec.message()));
    }
  }
  return absl::ResourceExhaustedError(
      absl::StrCat("too many run directories named ", base));
}

namespace {

absl::StatusOr<std::string> StartRun(ExperimentConfig& config,
                                     absl::string_view prefix) {
  ResolveSeed(config);
  if (absl::Status s = ValidateExperimentConfig(config); !s.ok()) return s;
  return CreateRunDirectory(config.output_dir, prefix, *config.seed);
}

absl::Status WriteJson(const std::string& dir, const char* name,
                       const json& j) {
  return WriteFile(std::filesystem::path(dir) / name, j.dump(2) + "\n");
}

}  // namespace

absl::StatusOr<RunOutput> RunExperiment(ExperimentConfig config) {
  ResolveSeed(config);
  absl::StatusOr<json> report = ComputeReport(config);
  if (!report.ok()) return report.status();
  absl::StatusOr<std::string> dir = StartRun(config, "run");
  if (!dir.ok()) return dir.status();
  const std::filesystem::path root(*dir);
  if (absl::Status s = WriteFile(root / "config.txt",
                                 ExperimentConfigToText(config));
      !s.ok()) {
    return s;
  }
  if (absl::Status s = WriteJson(*dir, "report.json", *report); !s.ok()) {
    return s;
  }
  std::string scores = "trial,membership,index,a_ltu,privacy,stderr,rounds\n";
  for (const json& s : (*report)["individual_scores"]) {
    absl::StrAppend(&scores, s["trial"].get<int>(), ",",
                    s["membership"].get<std::string>(), ",",
                    s["index"].get<size_t>(), ",",
                    FormatDouble(s["a_ltu"].get<double>()), ",",
                    FormatDouble(s["privacy"]["value"].get<double>()), ",",
                    FormatDouble(s["privacy"]["stderr"].get<double>()), ",",
                    s["privacy"]["n"].get<int64_t>(), "\n");
  }
  if (absl::Status s = WriteFile(root / "individual_scores.csv", scores);
      !s.ok()) {
    return s;
  }
  std::string histogram = "bin_low,bin_high,count\n";
  for (const json& b : (*report)["histogram"]) {
    absl::StrAppend(&histogram, FormatDouble(b["bin_low"].get<double>()), ",",
                    FormatDouble(b["bin_high"].get<double>()), ",",
                    b["count"].get<int64_t>(), "\n");
  }
  if (absl::Status s = WriteFile(root / "histogram.csv", histogram); !s.ok()) {
    return s;
  }
  return RunOutput{*dir, *std::move(report)};
}

absl::StatusOr<json> ComputeGrid(const ExperimentConfig& config) {
  if (absl::Status s = RequireSeed(config); !s.ok()) return s;
  json cells = json::array();
  for (Algorithm algorithm : config.grid_algorithms) {
    TrainerConfig trainer = config.trainer;
    trainer.algorithm = algorithm;
    if (absl::Status s = trainer.Validate(); !s.ok()) {
      return Annotate(s, AlgorithmName(algorithm));
    }
    const TrainerCapabilities caps = trainer.Capabilities();
    for (TrainingRegime regime : config.grid_regimes) {
      const std::string where = absl::StrCat(
          AlgorithmName(algorithm), " / ", TrainingRegimeName(regime));
      if (regime == TrainingRegime::kNotSeeded &&
          trainer.init_seed_policy.is_fixed()) {
        return absl::InvalidArgumentError(absl::StrCat(
            where, ": not-seeded conflicts with a fixed trainer seed"));
      }
      std::vector<ScoreWithError> utilities;
      std::vector<ScoreWithError> privacies;
      json per_trial = json::array();
      double a_ltu_sum = 0.0;
      for (int t = 0; t < config.trials; ++t) {
        const TrialSeeds seeds = SeedsForTrial(*config.seed, t);
        absl::StatusOr<PreparedTrial> trial =
            PrepareTrial(config, trainer, regime, seeds);
        if (!trial.ok()) {
          return Annotate(trial.status(), absl::StrCat(where, ", trial ", t));
        }
        const AttackContext context{&trial->trained.model,
                                    trial->trained.access};
        RoundOptions options;
        options.rounds = config.rounds;
        options.master_seed = seeds.rounds;
        options.num_threads = config.threads;
        absl::StatusOr<LtuResult> result =
            RunRounds(trial->factory, config.attacker, context, options);
        if (!result.ok()) {
          return Annotate(result.status(), absl::StrCat(where, ", trial ", t));
        }
        utilities.push_back(trial->utility.score);
        privacies.push_back(result->privacy);
        a_ltu_sum += result->a_ltu;
        per_trial.push_back({{"trial", t},
                             {"a_ltu", result->a_ltu},
                             {"privacy", result->privacy.value},
                             {"utility", trial->utility.score.value},
                             {"ties", result->ties},
                             {"injectivity_violations",
                              result->injectivity_violations}});
      }
      cells.push_back({{"algorithm", AlgorithmName(algorithm)},
                       {"regime", TrainingRegimeName(regime)},
                       {"capabilities", CapabilitiesToJson(caps)},
                       {"utility", AggregateScores(utilities)},
                       {"privacy", AggregateScores(privacies)},
                       {"a_ltu", a_ltu_sum / config.trials},
                       {"per_trial", std::move(per_trial)}});
    }
  }
  return json{{"config", ExperimentConfigToJson(config)},
              {"seed", *config.seed},
              {"attacker", config.attacker.Name()},
              {"cells", std::move(cells)}};
}

absl::StatusOr<RunOutput> RunGrid(ExperimentConfig config) {
  ResolveSeed(config);
  absl::StatusOr<json> grid = ComputeGrid(config);
  if (!grid.ok()) return grid.status();
  absl::StatusOr<std::string> dir = StartRun(config, "grid");
  if (!dir.ok()) return dir.status();
  const std::filesystem::path root(*dir);
  if (absl::Status s = WriteFile(root / "config.txt",
                                 ExperimentConfigToText(config));
      !s.ok()) {
    return s;
  }
  if (absl::Status s = WriteJson(*dir, "grid.json", *grid); !s.ok()) return s;
  std::string csv =
      "algorithm,regime,deterministic,order_invariant,utility,utility_stderr,"
      "privacy,privacy_stderr,a_ltu\n";
  for (const json& c : (*grid)["cells"]) {
    absl::StrAppend(
        &csv, c["algorithm"].get<std::string>(), ",",
        c["regime"].get<std::string>(), ",",
        c["capabilities"]["deterministic"].get<bool>() ? "true" : "false", ",",
        c["capabilities"]["order_invariant"].get<bool>() ? "true" : "false",
        ",", FormatDouble(c["utility"]["value"].get<double>()), ",",
        FormatDouble(c["utility"]["stderr"].get<double>()), ",",
        FormatDouble(c["privacy"]["value"].get<double>()), ",",
        FormatDouble(c["privacy"]["stderr"].get<double>()), ",",
        FormatDouble(c["a_ltu"].get<double>()), "\n");
  }
  if (absl::Status s = WriteFile(root / "grid.csv", csv); !s.ok()) return s;
  return RunOutput{*dir, *std::move(grid)};
}

absl::StatusOr<json> ComputeComparison(const ExperimentConfig& config) {
  if (absl::Status s = RequireSeed(config); !s.ok()) return s;
  const size_t m = config.compare.size();
  if (m < 2) {
    return absl::FailedPreconditionError(
        "compare needs at least two attackers (compare.0.*, compare.1.*)");
  }
  std::vector<int64_t> correct(m, 0);
  std::vector<std::vector<int64_t>> agree(m, std::vector<int64_t>(m, 0));
  std::vector<json> per_trial(m, json::array());
  int64_t total = 0;
  for (int t = 0; t < config.trials; ++t) {
    const TrialSeeds seeds = SeedsForTrial(*config.seed, t);
    absl::StatusOr<PreparedTrial> trial =
        PrepareTrial(config, config.trainer, config.regime, seeds);
    if (!trial.ok()) return Annotate(trial.status(), absl::StrCat("trial ", t));
    const AttackContext context{&trial->trained.model, trial->trained.access};
    RoundOptions options;
    options.rounds = config.rounds;
    options.master_seed = seeds.rounds;
    options.num_threads = config.threads;
    std::vector<LtuResult> results;
    for (size_t i = 0; i < m; ++i) {
      absl::StatusOr<LtuResult> r =
          RunRounds(trial->factory, config.compare[i], context, options);
      if (!r.ok()) {
        return Annotate(r.status(), absl::StrCat("trial ", t, ", attacker ",
                                                 config.compare[i].Name()));
      }
      correct[i] += r->correct;
      per_trial[i].push_back(r->a_ltu);
      results.push_back(*std::move(r));
    }
    for (int64_t k = 0; k < config.rounds; ++k) {
      for (size_t i = 0; i < m; ++i) {
        for (size_t j = 0; j < m; ++j) {
          if (results[i].rounds[k].claimed == results[j].rounds[k].claimed) {
            ++agree[i][j];
          }
        }
      }
    }
    total += config.rounds;
  }
  json attackers = json::array();
  for (size_t i = 0; i < m; ++i) {
    const double a = static_cast<double>(correct[i]) / total;
    absl::StatusOr<ScoreWithError> privacy = PrivacyScore(a, total);
    if (!privacy.ok()) return privacy.status();
    const double sigma = std::sqrt(a * (1.0 - a) / total);
    attackers.push_back({{"index", i},
                         {"attacker", config.compare[i].Name()},
                         {"a_ltu", a},
                         {"a_ltu_stderr", sigma},
                         {"privacy", ScoreToJson(*privacy)},
                         {"privacy_violation", a - 2.0 * sigma > 0.5},
                         {"per_trial", per_trial[i]}});
  }
  json agreement = json::array();
  for (size_t i = 0; i < m; ++i) {
    json row = json::array();
    for (size_t j = 0; j < m; ++j) {
      row.push_back(static_cast<double>(agree[i][j]) / total);
    }
    agreement.push_back(std::move(row));
  }
  return json{{"config", ExperimentConfigToJson(config)},
              {"seed", *config.seed},
              {"rounds_per_attacker", total},
              {"attackers", std::move(attackers)},
              {"agreement", std::move(agreement)}};
}

absl::StatusOr<RunOutput> RunComparison(ExperimentConfig config) {
  ResolveSeed(config);
  absl::StatusOr<json> comparison = ComputeComparison(config);
  if (!comparison.ok()) return comparison.status();
  absl::StatusOr<std::string> dir = StartRun(config, "compare");
  if (!dir.ok()) return dir.status();
  if (absl::Status s = WriteFile(std::filesystem::path(*dir) / "config.txt",
                                 ExperimentConfigToText(config));
      !s.ok()) {
    return s;
  }
  if (absl::Status s = WriteJson(*dir, "comparison.json", *comparison);
      !s.ok()) {
    return s;
  }
  return RunOutput{*dir, *std::move(comparison)};
}

absl::StatusOr<json> ComputeOracle(const ExperimentConfig& config) {
  if (absl::Status s = RequireSeed(config); !s.ok()) return s;
  const TrialSeeds seeds = SeedsForTrial(*config.seed, 0);
  absl::StatusOr<PreparedTrial> trial =
      PrepareTrial(config, config.trainer, config.regime, seeds);
  if (!trial.ok()) return trial.status();
  const DefenderModel& model = trial->trained.model;
  absl::StatusOr<DiscriminantFn> f =
      DiscriminantByName(config.attacker.discriminant);
  if (!f.ok()) return WithKey("attacker.discriminant", f.status());

  auto evaluate = [&model](const DiscriminantFn& fn,
                           const LabeledDataset& ds) {
    std::vector<double> values(ds.size());
    for (size_t i = 0; i < ds.size(); ++i) values[i] = fn(model, ds.sample(i));
    return values;
  };
  const std::vector<double> f_d = evaluate(*f, trial->data.defender);
  const std::vector<double> f_r = evaluate(*f, trial->data.reserved);
  absl::StatusOr<PairStats> stats = ExactPairStats(f_d, f_r);
  if (!stats.ok()) return stats.status();

  json out;
  out["config"] = ExperimentConfigToJson(config);
  out["seed"] = *config.seed;
  out["discriminant"] = f->name;
  out["defender_size"] = f_d.size();
  out["reserved_size"] = f_r.size();
  out["pair_stats"] = {{"p_r", stats->p_r},
                       {"p_d", stats->p_d},
                       {"tie_prob", stats->tie_prob}};
  out["pairwise_accuracy"] = GapRuleAccuracy(*stats);

  for (LossKind kind : {LossKind::kBoundedTrueClass, LossKind::kZeroOne}) {
    const DiscriminantFn loss = LossDiscriminant(kind);
    absl::StatusOr<ExpectedLosses> e = ExactExpectedLosses(
        evaluate(loss, trial->data.defender),
        evaluate(loss, trial->data.reserved));
    if (!e.ok()) return e.status();
    out["expected_loss"][LossKindName(kind)] = {
        {"e_d", e->e_d},
        {"e_r", e->e_r},
        {"threshold_rule_accuracy", LossRuleAccuracy(e->e_d, e->e_r)}};
  }
  const DiscriminantFn zero_one = LossDiscriminant(LossKind::kZeroOne);
  absl::StatusOr<ZeroOneGaps> gaps =
      ZeroOneEqualityCheck(evaluate(zero_one, trial->data.defender),
                           evaluate(zero_one, trial->data.reserved));
  if (!gaps.ok()) return gaps.status();
  out["zero_one_gaps"] = {{"p_gap", gaps->p_gap}, {"e_gap", gaps->e_gap}};
  return out;
}

absl::StatusOr<RunOutput> RunOracle(ExperimentConfig config) {
  ResolveSeed(config);
  absl::StatusOr<json> oracle = ComputeOracle(config);
  if (!oracle.ok()) return oracle.status();
  absl::StatusOr<std::string> dir = StartRun(config, "oracle");
  if (!dir.ok()) return dir.status();
  if (absl::Status s = WriteFile(std::filesystem::path(*dir) / "config.txt",
                                 ExperimentConfigToText(config));
      !s.ok()) {
    return s;
  }
  if (absl::Status s = WriteJson(*dir, "oracle.json", *oracle); !s.ok()) {
    return s;
  }
  return RunOutput{*dir, *std::move(oracle)};
}

}  // namespace ltu
