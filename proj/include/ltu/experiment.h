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

// Reproducible experiment runs: a flat key=value config binds a dataset, a
// Defender trainer and regime, and one or more attackers. Every run writes a
// fresh directory holding report.json, individual_scores.csv, histogram.csv
// and config.txt. config.txt is the fully resolved config (all seeds
// explicit); running it again reproduces report.json byte for byte.
//
// Config keys (defaults in parentheses):
//   seed                     master seed (drawn at random and recorded)
//   dataset.source           synthetic | csv (synthetic)
//   dataset.path             csv file with header f0,...,f{k-1},label
//   dataset.num_classes      class count for csv data (max label + 1)
//   synthetic.classes (3)  synthetic.dim (4)  synthetic.per_class (100)
//   synthetic.separation (5)  synthetic.noise (1)
//   split.fraction           share of the data given to the Defender (0.5)
//   flip_fraction            share of labels flipped before the split (0)
//   regime                   orig-order-seeded | rand-order-seeded |
//                            not-seeded (orig-order-seeded)
//   trainer.<key>            Defender trainer, see TrainerConfigToKeyValues
//   attacker.<key>           attacker, see AttackerSpecToKeyValues
//   compare.<i>.<key>        attackers for `compare`, i = 0, 1, ...
//   rounds (100)  trials (1)  threads (1)
//   individual.rounds        rounds per individual score, 0 disables (0)
//   individual.max_samples (0 = all)  individual.include_reserved (false)
//   individual.bins (10)
//   grid.algorithms          comma list (logistic_gd,gaussian_nb,
//                            perceptron_sgd,mlp_sgd)
//   grid.regimes             comma list (all three regimes)
//   output_dir               parent of run directories (runs)

#ifndef LTU_EXPERIMENT_H_
#define LTU_EXPERIMENT_H_

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/string_view.h"
#include "json.hpp"
#include "ltu/attacker.h"
#include "ltu/data.h"
#include "ltu/defender.h"
#include "ltu/evaluator.h"

namespace ltu {

enum class DatasetSource { kSynthetic, kCsv };

struct SyntheticSpec {
  int classes = 3;
  int dim = 4;
  int per_class = 100;
  double separation = 5.0;
  double noise = 1.0;
};

struct ExperimentConfig {
  std::optional<uint64_t> seed;
  DatasetSource source = DatasetSource::kSynthetic;
  std::string dataset_path;
  std::optional<int> dataset_num_classes;
  SyntheticSpec synthetic;
  double split_fraction = 0.5;
  double flip_fraction = 0.0;
  TrainingRegime regime = TrainingRegime::kOriginalOrderSeeded;
  TrainerConfig trainer;
  AttackerSpec attacker;
  std::vector<AttackerSpec> compare;
  int64_t rounds = 100;
  int trials = 1;
  int threads = 1;
  int64_t individual_rounds = 0;
  size_t individual_max_samples = 0;
  bool individual_include_reserved = false;
  int individual_bins = 10;
  std::vector<Algorithm> grid_algorithms = {
      Algorithm::kLogisticGD, Algorithm::kGaussianNB,
      Algorithm::kPerceptronSgd, Algorithm::kMlpSgd};
  std::vector<TrainingRegime> grid_regimes = {
      TrainingRegime::kOriginalOrderSeeded, TrainingRegime::kRandomOrderSeeded,
      TrainingRegime::kNotSeeded};
  std::string output_dir = "runs";
};

// Sets one key. Errors name the key.
absl::Status SetExperimentValue(ExperimentConfig& config,
                                absl::string_view key,
                                absl::string_view value);

// Parses key = value lines; '#' starts a comment. Errors carry the line
// number and key.
absl::StatusOr<ExperimentConfig> ParseExperimentConfig(absl::string_view text);
absl::StatusOr<ExperimentConfig> LoadExperimentConfig(const std::string& path);

// Checks cross-key consistency (ranges, dataset source, regime vs trainer).
absl::Status ValidateExperimentConfig(const ExperimentConfig& config);

// Fills in a random master seed when none is set.
void ResolveSeed(ExperimentConfig& config);

// Every key, one per line, in a fixed order. Parsing the output yields an
// equivalent config.
std::string ExperimentConfigToText(const ExperimentConfig& config);
// Report echo: every key except output_dir, so a run's report does not
// depend on where it was written.
nlohmann::json ExperimentConfigToJson(const ExperimentConfig& config);

// Seeds used by one trial, all derived from the master seed.
struct TrialSeeds {
  uint64_t trial = 0;
  uint64_t data = 0;
  uint64_t split = 0;
  uint64_t flip = 0;
  uint64_t defender = 0;
  uint64_t rounds = 0;
  uint64_t individual = 0;
};

TrialSeeds SeedsForTrial(uint64_t master_seed, int trial);

// The Defender and Reserved sets of one trial.
struct TrialData {
  LabeledDataset defender;
  LabeledDataset reserved;
};

absl::StatusOr<TrialData> LoadTrialData(const ExperimentConfig& config,
                                        const TrialSeeds& seeds);

// Runs every trial of `config` (seed must be resolved) and returns the
// report. Pure: touches no files except the dataset.
absl::StatusOr<nlohmann::json> ComputeReport(const ExperimentConfig& config);

struct RunOutput {
  std::string run_dir;
  nlohmann::json report;
};

// Resolves the seed, computes the report and writes a new run directory
// under config.output_dir.
absl::StatusOr<RunOutput> RunExperiment(ExperimentConfig config);

// Table of privacy and utility over grid_algorithms x grid_regimes with the
// configured attacker (typically retrain).
absl::StatusOr<nlohmann::json> ComputeGrid(const ExperimentConfig& config);
absl::StatusOr<RunOutput> RunGrid(ExperimentConfig config);

// Runs all `compare` attackers on identical rounds against the same
// Defender; reports per-attacker accuracy and the pairwise agreement matrix.
absl::StatusOr<nlohmann::json> ComputeComparison(
    const ExperimentConfig& config);
absl::StatusOr<RunOutput> RunComparison(ExperimentConfig config);

// Exact pair statistics and rule accuracies for the configured
// discriminant on the trial-0 Defender model.
absl::StatusOr<nlohmann::json> ComputeOracle(const ExperimentConfig& config);
absl::StatusOr<RunOutput> RunOracle(ExperimentConfig config);

// Creates `parent/<prefix>-<UTC timestamp>-<seed>` (with a numeric suffix on
// collision) and never reuses an existing directory.
absl::StatusOr<std::string> CreateRunDirectory(const std::string& parent,
                                               absl::string_view prefix,
                                               uint64_t seed);

}  // namespace ltu

#endif  // LTU_EXPERIMENT_H_
