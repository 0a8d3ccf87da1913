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

// ltu_eval: command-line front end for leave-two-unlabeled evaluations.
//
//   ltu_eval run     --config exp.cfg [--seed S] [--out DIR] [--rounds N]
//   ltu_eval grid    --config exp.cfg ...
//   ltu_eval compare --config exp.cfg ...
//   ltu_eval oracle  --config exp.cfg ...
//
// `--set key=value` overrides any config key and may be repeated. Flags
// override file keys.

#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "json.hpp"
#include "ltu/experiment.h"

namespace {

struct CommonFlags {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::string out;
  std::optional<int64_t> rounds;
  std::optional<int> trials;
  std::optional<int> threads;
  std::vector<std::string> overrides;
};

void AddCommonFlags(CLI::App* app, CommonFlags& flags) {
  app->add_option("--config", flags.config_path, "Experiment config file");
  app->add_option("--seed", flags.seed, "Master seed");
  app->add_option("--out", flags.out, "Parent directory for run output");
  app->add_option("--rounds", flags.rounds, "LTU rounds per trial");
  app->add_option("--trials", flags.trials, "Number of trials");
  app->add_option("--threads", flags.threads, "Worker threads");
  app->add_option("--set", flags.overrides, "Override a config key: key=value");
}

absl::StatusOr<ltu::ExperimentConfig> BuildConfig(const CommonFlags& flags) {
  ltu::ExperimentConfig config;
  if (!flags.config_path.empty()) {
    absl::StatusOr<ltu::ExperimentConfig> loaded =
        ltu::LoadExperimentConfig(flags.config_path);
    if (!loaded.ok()) return loaded.status();
    config = *std::move(loaded);
  }
  for (const std::string& o : flags.overrides) {
    const size_t eq = o.find('=');
    if (eq == std::string::npos) {
      return absl::InvalidArgumentError(
          absl::StrCat("--set expects key=value, got '", o, "'"));
    }
    if (absl::Status s = ltu::SetExperimentValue(config, o.substr(0, eq),
                                                 o.substr(eq + 1));
        !s.ok()) {
      return s;
    }
  }
  if (flags.seed) config.seed = *flags.seed;
  if (!flags.out.empty()) config.output_dir = flags.out;
  if (flags.rounds) config.rounds = *flags.rounds;
  if (flags.trials) config.trials = *flags.trials;
  if (flags.threads) config.threads = *flags.threads;
  if (absl::Status s = ltu::ValidateExperimentConfig(config); !s.ok()) {
    return s;
  }
  return config;
}

void PrintScore(const char* name, const nlohmann::json& score) {
  std::printf("%-10s %.4f +- %.4f\n", name, score["value"].get<double>(),
              score["stderr"].get<double>());
}

int Fail(const absl::Status& status) {
  std::fprintf(stderr, "error: %s\n", status.ToString().c_str());
  return 1;
}

int Run(const CommonFlags& flags) {
  absl::StatusOr<ltu::ExperimentConfig> config = BuildConfig(flags);
  if (!config.ok()) return Fail(config.status());
  absl::StatusOr<ltu::RunOutput> out = ltu::RunExperiment(*config);
  if (!out.ok()) return Fail(out.status());
  const nlohmann::json& r = out->report;
  std::printf("run dir    %s\n", out->run_dir.c_str());
  std::printf("seed       %llu\n",
              static_cast<unsigned long long>(r["seed"].get<uint64_t>()));
  std::printf("attacker   %s\n", r["attacker"].get<std::string>().c_str());
  PrintScore("utility", r["utility"]);
  PrintScore("privacy", r["privacy"]);
  std::printf("a_ltu      %.4f\n", r["a_ltu"].get<double>());
  if (r["example_based"].get<bool>()) {
    std::printf("warning    %s\n",
                r["example_based_note"].get<std::string>().c_str());
  }
  return 0;
}

int Grid(const CommonFlags& flags) {
  absl::StatusOr<ltu::ExperimentConfig> config = BuildConfig(flags);
  if (!config.ok()) return Fail(config.status());
  absl::StatusOr<ltu::RunOutput> out = ltu::RunGrid(*config);
  if (!out.ok()) return Fail(out.status());
  std::printf("run dir %s\nattacker %s\n", out->run_dir.c_str(),
              out->report["attacker"].get<std::string>().c_str());
  std::printf("%-16s %-18s %8s %8s %8s\n", "algorithm", "regime", "utility",
              "privacy", "a_ltu");
  for (const nlohmann::json& c : out->report["cells"]) {
    std::printf("%-16s %-18s %8.2f %8.2f %8.3f\n",
                c["algorithm"].get<std::string>().c_str(),
                c["regime"].get<std::string>().c_str(),
                c["utility"]["value"].get<double>(),
                c["privacy"]["value"].get<double>(),
                c["a_ltu"].get<double>());
  }
  return 0;
}

int Compare(const CommonFlags& flags) {
  absl::StatusOr<ltu::ExperimentConfig> config = BuildConfig(flags);
  if (!config.ok()) return Fail(config.status());
  absl::StatusOr<ltu::RunOutput> out = ltu::RunComparison(*config);
  if (!out.ok()) return Fail(out.status());
  const nlohmann::json& r = out->report;
  std::printf("run dir %s\n", out->run_dir.c_str());
  for (const nlohmann::json& a : r["attackers"]) {
    std::printf("[%zu] %-28s a_ltu %.4f +- %.4f  privacy %.4f%s\n",
                a["index"].get<size_t>(),
                a["attacker"].get<std::string>().c_str(),
                a["a_ltu"].get<double>(), a["a_ltu_stderr"].get<double>(),
                a["privacy"]["value"].get<double>(),
                a["privacy_violation"].get<bool>() ? "  VIOLATION" : "");
  }
  std::printf("agreement\n");
  for (const nlohmann::json& row : r["agreement"]) {
    for (const nlohmann::json& v : row) std::printf(" %.3f", v.get<double>());
    std::printf("\n");
  }
  return 0;
}

int Oracle(const CommonFlags& flags) {
  absl::StatusOr<ltu::ExperimentConfig> config = BuildConfig(flags);
  if (!config.ok()) return Fail(config.status());
  absl::StatusOr<ltu::RunOutput> out = ltu::RunOracle(*config);
  if (!out.ok()) return Fail(out.status());
  const nlohmann::json& r = out->report;
  std::printf("run dir %s\ndiscriminant %s\n", out->run_dir.c_str(),
              r["discriminant"].get<std::string>().c_str());
  std::printf("p_r %.6f  p_d %.6f  tie %.6f  pairwise accuracy %.6f\n",
              r["pair_stats"]["p_r"].get<double>(),
              r["pair_stats"]["p_d"].get<double>(),
              r["pair_stats"]["tie_prob"].get<double>(),
              r["pairwise_accuracy"].get<double>());
  for (const auto& [kind, e] : r["expected_loss"].items()) {
    std::printf("%-20s e_d %.6f  e_r %.6f  threshold rule accuracy %.6f\n",
                kind.c_str(), e["e_d"].get<double>(), e["e_r"].get<double>(),
                e["threshold_rule_accuracy"].get<double>());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Leave-two-unlabeled membership privacy evaluation"};
  app.require_subcommand(1);
  CommonFlags run_flags, grid_flags, compare_flags, oracle_flags;
  CLI::App* run = app.add_subcommand("run", "Evaluate one configuration");
  AddCommonFlags(run, run_flags);
  CLI::App* grid =
      app.add_subcommand("grid", "Sweep trainers x randomness regimes");
  AddCommonFlags(grid, grid_flags);
  CLI::App* compare =
      app.add_subcommand("compare", "Compare attackers on shared rounds");
  AddCommonFlags(compare, compare_flags);
  CLI::App* oracle =
      app.add_subcommand("oracle", "Exact pair statistics for a discriminant");
  AddCommonFlags(oracle, oracle_flags);
  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) return Run(run_flags);
  if (grid->parsed()) return Grid(grid_flags);
  if (compare->parsed()) return Compare(compare_flags);
  return Oracle(oracle_flags);
}
