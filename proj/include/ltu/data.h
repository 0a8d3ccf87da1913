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

// Datasets, source splitting, label corruption and construction of
// leave-two-unlabeled rounds.

#ifndef LTU_DATA_H_
#define LTU_DATA_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"

namespace ltu {

struct Sample {
  std::vector<double> features;
  int label = 0;

  friend bool operator==(const Sample&, const Sample&) = default;
};

enum class MembershipLabel { kDefender, kReserved };

const char* MembershipLabelName(MembershipLabel label);

// An ordered collection of labeled feature vectors sharing one dimension.
//
// Features are stored row-major in one contiguous buffer so that the many
// leave-one-out copies made per round stay cheap. Datasets built through
// Create() are non-empty; subsets derived from them (Without(), Subset())
// may be empty, which happens for the attack sets of a round when one
// side holds a single sample.
class LabeledDataset {
 public:
  LabeledDataset() = default;

  static absl::StatusOr<LabeledDataset> Create(int num_classes, int dim,
                                               std::vector<double> features,
                                               std::vector<int> labels);
  static absl::StatusOr<LabeledDataset> FromSamples(
      int num_classes, const std::vector<Sample>& samples);

  size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }
  int dim() const { return dim_; }
  int num_classes() const { return num_classes_; }

  std::span<const double> features(size_t i) const {
    return {features_.data() + i * static_cast<size_t>(dim_),
            static_cast<size_t>(dim_)};
  }
  int label(size_t i) const { return labels_[i]; }
  Sample sample(size_t i) const;

  const std::vector<double>& flat_features() const { return features_; }
  const std::vector<int>& labels() const { return labels_; }

  // Rows at `indices`, in that order. Indices must be in range.
  LabeledDataset Subset(std::span<const size_t> indices) const;
  // All rows except row i, order preserved.
  LabeledDataset Without(size_t i) const;
  // Copy with `sample` inserted before position `pos` (pos == size()
  // appends). The sample must match dim() and carry a valid label.
  LabeledDataset WithInserted(size_t pos, const Sample& sample) const;
  // Copy with row i's label replaced.
  LabeledDataset WithLabel(size_t i, int label) const;

  // Index of the first row equal to `sample`, if any.
  std::optional<size_t> Find(const Sample& sample) const;

  friend bool operator==(const LabeledDataset&,
                         const LabeledDataset&) = default;

 private:
  LabeledDataset(int num_classes, int dim, std::vector<double> features,
                 std::vector<int> labels)
      : num_classes_(num_classes),
        dim_(dim),
        features_(std::move(features)),
        labels_(std::move(labels)) {}

  int num_classes_ = 0;
  int dim_ = 0;
  std::vector<double> features_;
  std::vector<int> labels_;
};

// Gaussian blobs: `per_class` samples for each of `num_classes` classes,
// drawn as center + noise_scale * N(0, I). When num_classes <= dim the
// centers are class_separation / sqrt(2) times the first basis vectors, so
// every pair of centers is exactly class_separation apart; otherwise centers
// are spaced class_separation apart along the first axis. Samples are
// emitted class-interleaved.
absl::StatusOr<LabeledDataset> GenerateBlobs(int num_classes, int dim,
                                             int per_class,
                                             double class_separation,
                                             double noise_scale,
                                             uint64_t seed);

// Shuffles `source` under `seed` and splits it into (defender, reserved)
// with |defender| = round(defender_fraction * |source|).
absl::StatusOr<std::pair<LabeledDataset, LabeledDataset>> SplitSource(
    const LabeledDataset& source, double defender_fraction, uint64_t seed);

// Changes exactly round(fraction * n) labels, each to a uniformly chosen
// different class.
absl::StatusOr<LabeledDataset> FlipLabels(const LabeledDataset& ds,
                                          double fraction, uint64_t seed);

// CSV with header `f0,...,f{k-1},label`. Values are written with 17
// significant digits so that SaveCsv followed by LoadCsv is exact.
// num_classes defaults to (largest label + 1).
absl::StatusOr<LabeledDataset> LoadCsv(
    const std::string& path, std::optional<int> num_classes = std::nullopt);
absl::Status SaveCsv(const LabeledDataset& ds, const std::string& path);

// Returns an error if any sample occurs in both sets.
absl::Status CheckDisjoint(const LabeledDataset& defender,
                           const LabeledDataset& reserved);

enum class PairSlot { kFirst, kSecond };

inline PairSlot Other(PairSlot slot) {
  return slot == PairSlot::kFirst ? PairSlot::kSecond : PairSlot::kFirst;
}

// Everything an attacker is allowed to see in one round.
struct LtuChallenge {
  LabeledDataset attack_defender;  // D_D without d, original order.
  LabeledDataset attack_reserved;  // D_R without r, original order.
  Sample u1;
  Sample u2;
  // Position d occupied in D_D. Needed by retraining attacks that must
  // reproduce the Defender's original sample order.
  size_t removed_position = 0;
  uint64_t round_seed = 0;

  const Sample& unlabeled(PairSlot slot) const {
    return slot == PairSlot::kFirst ? u1 : u2;
  }
};

// A round plus the ground truth, which stays with the evaluator.
struct LtuRound {
  LtuChallenge challenge;
  PairSlot defender_slot = PairSlot::kFirst;
  size_t defender_index = 0;
  size_t reserved_index = 0;
};

// Builds rounds over a fixed (defender, reserved) pair. Disjointness is
// validated once at construction.
class LtuRoundFactory {
 public:
  static absl::StatusOr<LtuRoundFactory> Create(LabeledDataset defender,
                                                LabeledDataset reserved);

  // d and r uniform, pair order uniform, all drawn from `round_seed`.
  LtuRound Make(uint64_t round_seed) const;
  // d pinned, r uniform.
  LtuRound MakeWithDefender(size_t defender_index, uint64_t round_seed) const;
  // r pinned, d uniform.
  LtuRound MakeWithReserved(size_t reserved_index, uint64_t round_seed) const;

  const LabeledDataset& defender() const { return defender_; }
  const LabeledDataset& reserved() const { return reserved_; }

 private:
  LtuRoundFactory(LabeledDataset defender, LabeledDataset reserved)
      : defender_(std::move(defender)), reserved_(std::move(reserved)) {}

  LtuRound Build(size_t defender_index, size_t reserved_index,
                 bool defender_first, uint64_t round_seed) const;

  LabeledDataset defender_;
  LabeledDataset reserved_;
};

absl::StatusOr<LtuRound> MakeLtuRound(const LabeledDataset& defender,
                                      const LabeledDataset& reserved,
                                      uint64_t round_seed);

}  // namespace ltu

#endif  // LTU_DATA_H_
