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

// End-to-end checks of the ltu_eval command line tool.

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "absl/strings/str_cat.h"
#include "gmock/gmock.h"
#include "gtest/gtest.h"

namespace {

using ::testing::HasSubstr;

struct CommandResult {
  int exit_code = -1;
  std::string output;
};

CommandResult RunTool(const std::string& args) {
  const std::string command =
      absl::StrCat(LTU_EVAL_BINARY, " ", args, " 2>&1");
  CommandResult result;
  FILE* pipe = popen(command.c_str(), "r");
  if (pipe == nullptr) return result;
  std::array<char, 4096> buffer;
  size_t n;
  while ((n = fread(buffer.data(), 1, buffer.size(), pipe)) > 0) {
    result.output.append(buffer.data(), n);
  }
  const int status = pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

std::string ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path FreshDir(const std::string& name) {
  const std::filesystem::path p =
      std::filesystem::path(::testing::TempDir()) / ("ltu_cli_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// The single subdirectory created under `parent`.
std::filesystem::path OnlyRunDir(const std::filesystem::path& parent) {
  std::filesystem::path found;
  int count = 0;
  for (const auto& e : std::filesystem::directory_iterator(parent)) {
    if (e.is_directory()) {
      found = e.path();
      ++count;
    }
  }
  EXPECT_EQ(count, 1);
  return found;
}

const char kSmall[] =
    "--set synthetic.per_class=8 --set synthetic.dim=2 --set trainer.epochs=20";

TEST(CliTest, RunWritesReportAndReplaysExactly) {
  const std::filesystem::path out = FreshDir("run");
  const CommandResult first = RunTool(absl::StrCat(
      "run --seed 3 --rounds 15 --out ", (out / "a").string(), " ", kSmall,
      " --set individual.rounds=5"));
  ASSERT_EQ(first.exit_code, 0) << first.output;
  EXPECT_THAT(first.output, HasSubstr("privacy"));
  EXPECT_THAT(first.output, HasSubstr("utility"));
  const std::filesystem::path run = OnlyRunDir(out / "a");
  for (const char* f : {"config.txt", "report.json", "individual_scores.csv",
                        "histogram.csv"}) {
    EXPECT_TRUE(std::filesystem::exists(run / f)) << f;
  }
  const CommandResult replay =
      RunTool(absl::StrCat("run --config ", (run / "config.txt").string(),
                           " --out ", (out / "b").string()));
  ASSERT_EQ(replay.exit_code, 0) << replay.output;
  EXPECT_EQ(ReadFile(OnlyRunDir(out / "b") / "report.json"),
            ReadFile(run / "report.json"));
}

TEST(CliTest, GridCompareAndOracle) {
  const std::filesystem::path out = FreshDir("sub");
  const CommandResult grid = RunTool(absl::StrCat(
      "grid --seed 4 --rounds 10 --out ", (out / "grid").string(), " ",
      kSmall,
      " --set attacker.kind=retrain --set grid.algorithms=logistic_gd"
      " --set grid.regimes=orig-order-seeded"));
  ASSERT_EQ(grid.exit_code, 0) << grid.output;
  EXPECT_THAT(grid.output, HasSubstr("logistic_gd"));
  EXPECT_TRUE(
      std::filesystem::exists(OnlyRunDir(out / "grid") / "grid.csv"));

  const CommandResult compare = RunTool(absl::StrCat(
      "compare --seed 4 --rounds 10 --out ", (out / "cmp").string(), " ",
      kSmall, " --set compare.0.kind=gap --set compare.1.kind=coin_flip"));
  ASSERT_EQ(compare.exit_code, 0) << compare.output;
  EXPECT_THAT(compare.output, HasSubstr("agreement"));
  EXPECT_TRUE(std::filesystem::exists(OnlyRunDir(out / "cmp") /
                                      "comparison.json"));

  const CommandResult oracle = RunTool(absl::StrCat(
      "oracle --seed 4 --out ", (out / "oracle").string(), " ", kSmall));
  ASSERT_EQ(oracle.exit_code, 0) << oracle.output;
  EXPECT_THAT(oracle.output, HasSubstr("pairwise accuracy"));
  EXPECT_TRUE(
      std::filesystem::exists(OnlyRunDir(out / "oracle") / "oracle.json"));
}

TEST(CliTest, BadInputFailsWithMessage) {
  const std::filesystem::path out = FreshDir("bad");
  const CommandResult bad_key =
      RunTool(absl::StrCat("run --out ", out.string(), " --set colour=blue"));
  EXPECT_NE(bad_key.exit_code, 0);
  EXPECT_THAT(bad_key.output, HasSubstr("colour"));

  const CommandResult missing =
      RunTool("run --config /nonexistent/ltu.cfg");
  EXPECT_NE(missing.exit_code, 0);
  EXPECT_THAT(missing.output, HasSubstr("ltu.cfg"));

  const CommandResult no_attackers =
      RunTool(absl::StrCat("compare --seed 1 --out ", out.string()));
  EXPECT_NE(no_attackers.exit_code, 0);
  EXPECT_THAT(no_attackers.output, HasSubstr("at least two"));

  EXPECT_NE(RunTool("").exit_code, 0);
  EXPECT_NE(RunTool("frobnicate").exit_code, 0);
}

}  // namespace
