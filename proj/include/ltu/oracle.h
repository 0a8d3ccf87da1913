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

// Exact reference computations for LTU attack accuracies. Everything here
// enumerates finite supports directly; nothing is sampled.
//
// For a discriminant f evaluated on Defender values f(d) and Reserved
// values f(r), with (d, r) uniform over all pairs:
//   p_R = Pr[f(r) > f(d)],  p_D = Pr[f(r) < f(d)]
// and the pairwise rule "smaller f is the member" has accuracy
//   1/2 + (p_R - p_D) / 2.
// For a loss bounded in [0, 1] with means e_D and e_R, the randomized
// threshold rule has expected accuracy 1/2 + (e_R - e_D) / 2.

#ifndef LTU_ORACLE_H_
#define LTU_ORACLE_H_

#include <utility>
#include <vector>

#include "absl/status/statusor.h"

namespace ltu {

struct PairStats {
  double p_r = 0.0;
  double p_d = 0.0;
  double tie_prob = 0.0;
};

// Enumerates all |D| x |R| pairs. Errors on an empty list.
absl::StatusOr<PairStats> ExactPairStats(const std::vector<double>& f_defender,
                                         const std::vector<double>& f_reserved);

// Accuracy of claiming the smaller-f sample as the member, ties by coin:
// 1/2 + (p_r - p_d) / 2.
double GapRuleAccuracy(const PairStats& stats);

struct ExpectedLosses {
  double e_d = 0.0;
  double e_r = 0.0;
};

// Exact means. Errors on empty lists or losses outside [0, 1].
absl::StatusOr<ExpectedLosses> ExactExpectedLosses(
    const std::vector<double>& loss_defender,
    const std::vector<double>& loss_reserved);

// Accuracy of the randomized bounded-loss rule: 1/2 + (e_r - e_d) / 2.
double LossRuleAccuracy(double e_d, double e_r);

// Joint distribution of (loss(d), loss(r)) on a finite grid.
// prob[i][j] = Pr[loss(d) = defender_support[i], loss(r) = reserved_support[j]].
class JointPmf {
 public:
  static absl::StatusOr<JointPmf> Create(
      std::vector<double> defender_support,
      std::vector<double> reserved_support,
      std::vector<std::vector<double>> prob);

  // Independent losses with the given marginals.
  static absl::StatusOr<JointPmf> Product(
      std::vector<double> defender_support, std::vector<double> defender_mass,
      std::vector<double> reserved_support, std::vector<double> reserved_mass);

  const std::vector<double>& defender_support() const {
    return defender_support_;
  }
  const std::vector<double>& reserved_support() const {
    return reserved_support_;
  }
  const std::vector<std::vector<double>>& prob() const { return prob_; }

  // Marginal of loss(d) (row sums) and of loss(r) (column sums).
  std::vector<double> DefenderMarginal() const;
  std::vector<double> ReservedMarginal() const;

 private:
  JointPmf(std::vector<double> d, std::vector<double> r,
           std::vector<std::vector<double>> p)
      : defender_support_(std::move(d)),
        reserved_support_(std::move(r)),
        prob_(std::move(p)) {}

  std::vector<double> defender_support_;
  std::vector<double> reserved_support_;
  std::vector<std::vector<double>> prob_;
};

struct JointPmfSummary {
  // e_R - e_D from the marginals.
  double gap = 0.0;
  // Pr[loss(r) > loss(d)] - Pr[loss(r) < loss(d)] from the full table.
  double pairwise_margin = 0.0;
};

JointPmfSummary JointPmfStats(const JointPmf& pmf);

struct ZeroOneGaps {
  // p_R - p_D by pair enumeration.
  double p_gap = 0.0;
  // e_R - e_D from the error rates.
  double e_gap = 0.0;
};

// Both gaps for 0-1 losses, computed independently. Errors on empty lists or
// values other than 0 and 1.
absl::StatusOr<ZeroOneGaps> ZeroOneEqualityCheck(
    const std::vector<double>& loss01_defender,
    const std::vector<double>& loss01_reserved);

}  // namespace ltu

#endif  // LTU_ORACLE_H_
