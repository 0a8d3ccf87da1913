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

#include <cmath>
#include <cstdint>

#include "absl/status/status.h"
#include "absl/strings/str_cat.h"

namespace ltu {
namespace {

constexpr double kMassTolerance = 1e-12;

absl::Status CheckNonEmpty(const std::vector<double>& d,
                           const std::vector<double>& r) {
  if (d.empty() || r.empty()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "value lists must be non-empty (defender ", d.size(), ", reserved ",
        r.size(), ")"));
  }
  return absl::OkStatus();
}

absl::Status CheckUnitInterval(const std::vector<double>& values,
                               const char* which) {
  for (size_t i = 0; i < values.size(); ++i) {
    if (!(values[i] >= 0.0 && values[i] <= 1.0)) {
      return absl::OutOfRangeError(absl::StrCat(
          "bound violation: ", which, " loss[", i, "] = ", values[i],
          " is outside [0, 1]"));
    }
  }
  return absl::OkStatus();
}

double Mean(const std::vector<double>& v) {
  double sum = 0.0;
  for (double x : v) sum += x;
  return sum / static_cast<double>(v.size());
}

}  // namespace

absl::StatusOr<PairStats> ExactPairStats(
    const std::vector<double>& f_defender,
    const std::vector<double>& f_reserved) {
  if (absl::Status s = CheckNonEmpty(f_defender, f_reserved); !s.ok()) return s;
  uint64_t reserved_higher = 0;
  uint64_t defender_higher = 0;
  uint64_t ties = 0;
  for (double d : f_defender) {
    for (double r : f_reserved) {
      if (r > d) {
        ++reserved_higher;
      } else if (r < d) {
        ++defender_higher;
      } else {
        ++ties;
      }
    }
  }
  const double pairs = static_cast<double>(f_defender.size()) *
                       static_cast<double>(f_reserved.size());
  PairStats stats;
  stats.p_r = static_cast<double>(reserved_higher) / pairs;
  stats.p_d = static_cast<double>(defender_higher) / pairs;
  stats.tie_prob = static_cast<double>(ties) / pairs;
  return stats;
}

double GapRuleAccuracy(const PairStats& stats) {
  return 0.5 + 0.5 * (stats.p_r - stats.p_d);
}

absl::StatusOr<ExpectedLosses> ExactExpectedLosses(
    const std::vector<double>& loss_defender,
    const std::vector<double>& loss_reserved) {
  if (absl::Status s = CheckNonEmpty(loss_defender, loss_reserved); !s.ok()) {
    return s;
  }
  if (absl::Status s = CheckUnitInterval(loss_defender, "defender"); !s.ok()) {
    return s;
  }
  if (absl::Status s = CheckUnitInterval(loss_reserved, "reserved"); !s.ok()) {
    return s;
  }
  return ExpectedLosses{Mean(loss_defender), Mean(loss_reserved)};
}

double LossRuleAccuracy(double e_d, double e_r) {
  return 0.5 + (e_r - e_d) / 2.0;
}

absl::StatusOr<JointPmf> JointPmf::Create(
    std::vector<double> defender_support, std::vector<double> reserved_support,
    std::vector<std::vector<double>> prob) {
  if (defender_support.empty() || reserved_support.empty()) {
    return absl::InvalidArgumentError("invalid pmf: empty support");
  }
  if (prob.size() != defender_support.size()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "invalid pmf: ", prob.size(), " rows for ", defender_support.size(),
        " defender support values"));
  }
  for (double v : defender_support) {
    if (!std::isfinite(v)) {
      return absl::InvalidArgumentError("invalid pmf: non-finite support");
    }
  }
  for (double v : reserved_support) {
    if (!std::isfinite(v)) {
      return absl::InvalidArgumentError("invalid pmf: non-finite support");
    }
  }
  double total = 0.0;
  for (size_t i = 0; i < prob.size(); ++i) {
    if (prob[i].size() != reserved_support.size()) {
      return absl::InvalidArgumentError(absl::StrCat(
          "invalid pmf: row ", i, " has ", prob[i].size(), " entries, expected ",
          reserved_support.size()));
    }
    for (size_t j = 0; j < prob[i].size(); ++j) {
      if (!(prob[i][j] >= 0.0) || !std::isfinite(prob[i][j])) {
        return absl::InvalidArgumentError(absl::StrCat(
            "invalid pmf: entry (", i, ", ", j, ") = ", prob[i][j]));
      }
      total += prob[i][j];
    }
  }
  if (std::abs(total - 1.0) > kMassTolerance) {
    return absl::InvalidArgumentError(
        absl::StrCat("invalid pmf: total mass ", total, " != 1"));
  }
  return JointPmf(std::move(defender_support), std::move(reserved_support),
                  std::move(prob));
}

absl::StatusOr<JointPmf> JointPmf::Product(std::vector<double> defender_support,
                                           std::vector<double> defender_mass,
                                           std::vector<double> reserved_support,
                                           std::vector<double> reserved_mass) {
  if (defender_mass.size() != defender_support.size() ||
      reserved_mass.size() != reserved_support.size()) {
    return absl::InvalidArgumentError(
        "invalid pmf: marginal and support sizes differ");
  }
  std::vector<std::vector<double>> prob(
      defender_mass.size(), std::vector<double>(reserved_mass.size()));
  for (size_t i = 0; i < defender_mass.size(); ++i) {
    for (size_t j = 0; j < reserved_mass.size(); ++j) {
      prob[i][j] = defender_mass[i] * reserved_mass[j];
    }
  }
  return Create(std::move(defender_support), std::move(reserved_support),
                std::move(prob));
}

std::vector<double> JointPmf::DefenderMarginal() const {
  std::vector<double> m(defender_support_.size(), 0.0);
  for (size_t i = 0; i < prob_.size(); ++i) {
    for (double p : prob_[i]) m[i] += p;
  }
  return m;
}

std::vector<double> JointPmf::ReservedMarginal() const {
  std::vector<double> m(reserved_support_.size(), 0.0);
  for (const std::vector<double>& row : prob_) {
    for (size_t j = 0; j < row.size(); ++j) m[j] += row[j];
  }
  return m;
}

JointPmfSummary JointPmfStats(const JointPmf& pmf) {
  const std::vector<double> md = pmf.DefenderMarginal();
  const std::vector<double> mr = pmf.ReservedMarginal();
  double e_d = 0.0;
  for (size_t i = 0; i < md.size(); ++i) e_d += md[i] * pmf.defender_support()[i];
  double e_r = 0.0;
  for (size_t j = 0; j < mr.size(); ++j) e_r += mr[j] * pmf.reserved_support()[j];

  double p_r = 0.0;
  double p_d = 0.0;
  for (size_t i = 0; i < pmf.prob().size(); ++i) {
    const double d = pmf.defender_support()[i];
    for (size_t j = 0; j < pmf.prob()[i].size(); ++j) {
      const double r = pmf.reserved_support()[j];
      if (r > d) {
        p_r += pmf.prob()[i][j];
      } else if (r < d) {
        p_d += pmf.prob()[i][j];
      }
    }
  }
  return JointPmfSummary{e_r - e_d, p_r - p_d};
}

absl::StatusOr<ZeroOneGaps> ZeroOneEqualityCheck(
    const std::vector<double>& loss01_defender,
    const std::vector<double>& loss01_reserved) {
  if (absl::Status s = CheckNonEmpty(loss01_defender, loss01_reserved);
      !s.ok()) {
    return s;
  }
  for (const auto* list : {&loss01_defender, &loss01_reserved}) {
    for (size_t i = 0; i < list->size(); ++i) {
      const double v = (*list)[i];
      if (v != 0.0 && v != 1.0) {
        return absl::InvalidArgumentError(absl::StrCat(
            list == &loss01_defender ? "defender" : "reserved", " loss[", i,
            "] = ", v, " is not binary"));
      }
    }
  }
  absl::StatusOr<PairStats> stats =
      ExactPairStats(loss01_defender, loss01_reserved);
  if (!stats.ok()) return stats.status();
  ZeroOneGaps gaps;
  gaps.p_gap = stats->p_r - stats->p_d;
  gaps.e_gap = Mean(loss01_reserved) - Mean(loss01_defender);
  return gaps;
}

}  // namespace ltu
