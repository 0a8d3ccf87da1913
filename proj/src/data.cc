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

#include "ltu/data.h"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_split.h"
#include "absl/strings/string_view.h"
#include "absl/strings/strip.h"
#include "ltu/rng.h"

namespace ltu {
namespace {

uint64_t HashRow(std::span<const double> features, int label) {
  uint64_t h = 0x84222325cbf29ce4ULL ^ static_cast<uint64_t>(label);
  for (double x : features) {
    // +0.0 and -0.0 compare equal and must hash equal.
    const uint64_t bits = x == 0.0 ? 0 : std::bit_cast<uint64_t>(x);
    h = DeriveSeed(h, bits);
  }
  return h;
}

bool RowEquals(const LabeledDataset& a, size_t i, const LabeledDataset& b,
               size_t j) {
  if (a.label(i) != b.label(j)) return false;
  auto fa = a.features(i);
  auto fb = b.features(j);
  return std::equal(fa.begin(), fa.end(), fb.begin(), fb.end());
}

absl::StatusOr<double> ParseDouble(absl::string_view field) {
  field = absl::StripAsciiWhitespace(field);
  double value = 0.0;
  auto [ptr, ec] =
      std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size() ||
      field.empty()) {
    return absl::InvalidArgumentError(
        absl::StrCat("not a number: '", field, "'"));
  }
  if (!std::isfinite(value)) {
    return absl::InvalidArgumentError(
        absl::StrCat("non-finite value: '", field, "'"));
  }
  return value;
}

absl::StatusOr<int> ParseLabel(absl::string_view field) {
  field = absl::StripAsciiWhitespace(field);
  int value = 0;
  auto [ptr, ec] =
      std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size() ||
      field.empty()) {
    return absl::InvalidArgumentError(
        absl::StrCat("label is not an integer: '", field, "'"));
  }
  if (value < 0) {
    return absl::InvalidArgumentError(
        absl::StrCat("negative label: ", value));
  }
  return value;
}

}  // namespace

const char* MembershipLabelName(MembershipLabel label) {
  return label == MembershipLabel::kDefender ? "Defender" : "Reserved";
}

absl::StatusOr<LabeledDataset> LabeledDataset::Create(
    int num_classes, int dim, std::vector<double> features,
    std::vector<int> labels) {
  if (num_classes < 2) {
    return absl::InvalidArgumentError(
        absl::StrCat("num_classes must be >= 2, got ", num_classes));
  }
  if (dim < 1) {
    return absl::InvalidArgumentError(
        absl::StrCat("dim must be >= 1, got ", dim));
  }
  if (labels.empty()) {
    return absl::InvalidArgumentError("dataset must be non-empty");
  }
  if (features.size() != labels.size() * static_cast<size_t>(dim)) {
    return absl::InvalidArgumentError(absl::StrCat(
        "feature buffer holds ", features.size(), " values, expected ",
        labels.size(), " x ", dim));
  }
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      return absl::InvalidArgumentError(absl::StrCat(
          "label ", labels[i], " of sample ", i, " outside [0, ",
          num_classes, ")"));
    }
  }
  for (double x : features) {
    if (!std::isfinite(x)) {
      return absl::InvalidArgumentError("features must be finite");
    }
  }
  return LabeledDataset(num_classes, dim, std::move(features),
                        std::move(labels));
}

absl::StatusOr<LabeledDataset> LabeledDataset::FromSamples(
    int num_classes, const std::vector<Sample>& samples) {
  if (samples.empty()) {
    return absl::InvalidArgumentError("dataset must be non-empty");
  }
  const size_t dim = samples.front().features.size();
  std::vector<double> features;
  std::vector<int> labels;
  features.reserve(dim * samples.size());
  labels.reserve(samples.size());
  for (size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].features.size() != dim) {
      return absl::InvalidArgumentError(
          absl::StrCat("sample ", i, " has dimension ",
                       samples[i].features.size(), ", expected ", dim));
    }
    features.insert(features.end(), samples[i].features.begin(),
                    samples[i].features.end());
    labels.push_back(samples[i].label);
  }
  return Create(num_classes, static_cast<int>(dim), std::move(features),
                std::move(labels));
}

Sample LabeledDataset::sample(size_t i) const {
  auto f = features(i);
  return Sample{std::vector<double>(f.begin(), f.end()), labels_[i]};
}

LabeledDataset LabeledDataset::Subset(std::span<const size_t> indices) const {
  std::vector<double> features;
  std::vector<int> labels;
  features.reserve(indices.size() * static_cast<size_t>(dim_));
  labels.reserve(indices.size());
  for (size_t i : indices) {
    auto f = this->features(i);
    features.insert(features.end(), f.begin(), f.end());
    labels.push_back(labels_[i]);
  }
  return LabeledDataset(num_classes_, dim_, std::move(features),
                        std::move(labels));
}

LabeledDataset LabeledDataset::Without(size_t i) const {
  const auto d = static_cast<ptrdiff_t>(dim_);
  std::vector<double> features;
  features.reserve(features_.size() - static_cast<size_t>(dim_));
  features.insert(features.end(), features_.begin(),
                  features_.begin() + static_cast<ptrdiff_t>(i) * d);
  features.insert(features.end(),
                  features_.begin() + static_cast<ptrdiff_t>(i + 1) * d,
                  features_.end());
  std::vector<int> labels;
  labels.reserve(labels_.size() - 1);
  labels.insert(labels.end(), labels_.begin(),
                labels_.begin() + static_cast<ptrdiff_t>(i));
  labels.insert(labels.end(), labels_.begin() + static_cast<ptrdiff_t>(i + 1),
                labels_.end());
  return LabeledDataset(num_classes_, dim_, std::move(features),
                        std::move(labels));
}

LabeledDataset LabeledDataset::WithInserted(size_t pos,
                                            const Sample& sample) const {
  std::vector<double> features = features_;
  std::vector<int> labels = labels_;
  features.insert(features.begin() + static_cast<ptrdiff_t>(pos) * dim_,
                  sample.features.begin(), sample.features.end());
  labels.insert(labels.begin() + static_cast<ptrdiff_t>(pos), sample.label);
  return LabeledDataset(num_classes_, dim_, std::move(features),
                        std::move(labels));
}

LabeledDataset LabeledDataset::WithLabel(size_t i, int label) const {
  LabeledDataset copy = *this;
  copy.labels_[i] = label;
  return copy;
}

std::optional<size_t> LabeledDataset::Find(const Sample& sample) const {
  for (size_t i = 0; i < size(); ++i) {
    if (labels_[i] != sample.label) continue;
    auto f = features(i);
    if (std::equal(f.begin(), f.end(), sample.features.begin(),
                   sample.features.end())) {
      return i;
    }
  }
  return std::nullopt;
}

absl::StatusOr<LabeledDataset> GenerateBlobs(int num_classes, int dim,
                                             int per_class,
                                             double class_separation,
                                             double noise_scale,
                                             uint64_t seed) {
  if (num_classes < 2) {
    return absl::InvalidArgumentError("num_classes must be >= 2");
  }
  if (dim < 1) return absl::InvalidArgumentError("dim must be >= 1");
  if (per_class < 1) {
    return absl::InvalidArgumentError("per_class must be >= 1");
  }
  if (!(noise_scale > 0.0) || !std::isfinite(noise_scale)) {
    return absl::InvalidArgumentError("noise_scale must be > 0");
  }
  if (!(class_separation >= 0.0) || !std::isfinite(class_separation)) {
    return absl::InvalidArgumentError("class_separation must be >= 0");
  }

  const size_t k = static_cast<size_t>(dim);
  std::vector<double> centers(static_cast<size_t>(num_classes) * k, 0.0);
  for (int c = 0; c < num_classes; ++c) {
    if (num_classes <= dim) {
      centers[static_cast<size_t>(c) * k + static_cast<size_t>(c)] =
          class_separation / std::sqrt(2.0);
    } else {
      centers[static_cast<size_t>(c) * k] = class_separation * c;
    }
  }

  Rng rng(seed);
  const size_t n = static_cast<size_t>(num_classes) * per_class;
  std::vector<double> features;
  std::vector<int> labels;
  features.reserve(n * k);
  labels.reserve(n);
  for (int i = 0; i < per_class; ++i) {
    for (int c = 0; c < num_classes; ++c) {
      for (size_t j = 0; j < k; ++j) {
        features.push_back(centers[static_cast<size_t>(c) * k + j] +
                           noise_scale * rng.Normal());
      }
      labels.push_back(c);
    }
  }
  return LabeledDataset::Create(num_classes, dim, std::move(features),
                                std::move(labels));
}

absl::StatusOr<std::pair<LabeledDataset, LabeledDataset>> SplitSource(
    const LabeledDataset& source, double defender_fraction, uint64_t seed) {
  if (!(defender_fraction > 0.0 && defender_fraction < 1.0)) {
    return absl::InvalidArgumentError(absl::StrCat(
        "defender_fraction must be in (0, 1), got ", defender_fraction));
  }
  const size_t n = source.size();
  const auto n_defender = static_cast<size_t>(
      std::llround(defender_fraction * static_cast<double>(n)));
  if (n_defender == 0 || n_defender >= n) {
    return absl::InvalidArgumentError(absl::StrCat(
        "split of ", n, " samples at fraction ", defender_fraction,
        " leaves an empty part"));
  }
  Rng rng(seed);
  std::vector<size_t> perm = rng.Permutation(n);
  std::span<const size_t> all(perm);
  return std::make_pair(source.Subset(all.first(n_defender)),
                        source.Subset(all.subspan(n_defender)));
}

absl::StatusOr<LabeledDataset> FlipLabels(const LabeledDataset& ds,
                                          double fraction, uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    return absl::InvalidArgumentError(
        absl::StrCat("flip fraction must be in [0, 1], got ", fraction));
  }
  const size_t n = ds.size();
  const auto count =
      static_cast<size_t>(std::llround(fraction * static_cast<double>(n)));
  Rng rng(seed);
  std::vector<size_t> perm = rng.Permutation(n);
  std::vector<double> features = ds.flat_features();
  std::vector<int> labels = ds.labels();
  const auto c = static_cast<uint64_t>(ds.num_classes());
  for (size_t i = 0; i < count; ++i) {
    const size_t row = perm[i];
    const auto offset = 1 + rng.UniformInt(c - 1);
    labels[row] = static_cast<int>((static_cast<uint64_t>(labels[row]) +
                                    offset) % c);
  }
  return LabeledDataset::Create(ds.num_classes(), ds.dim(),
                                std::move(features), std::move(labels));
}

absl::StatusOr<LabeledDataset> LoadCsv(const std::string& path,
                                       std::optional<int> num_classes) {
  std::ifstream in(path);
  if (!in) return absl::NotFoundError(absl::StrCat("cannot open ", path));

  std::string line;
  if (!std::getline(in, line)) {
    return absl::InvalidArgumentError(
        absl::StrCat(path, ": missing header row"));
  }
  std::vector<std::string> header =
      absl::StrSplit(absl::StripTrailingAsciiWhitespace(line), ',');
  if (header.size() < 2) {
    return absl::FailedPreconditionError(absl::StrCat(
        path, ":1: schema error: header needs at least one feature column "
              "and a label column"));
  }
  const size_t dim = header.size() - 1;
  for (size_t j = 0; j < dim; ++j) {
    if (absl::StripAsciiWhitespace(header[j]) != absl::StrCat("f", j)) {
      return absl::FailedPreconditionError(
          absl::StrCat(path, ":1: schema error: expected column 'f", j,
                       "', got '", header[j], "'"));
    }
  }
  if (absl::StripAsciiWhitespace(header.back()) != "label") {
    return absl::FailedPreconditionError(absl::StrCat(
        path, ":1: schema error: last column must be 'label'"));
  }

  std::vector<double> features;
  std::vector<int> labels;
  int max_label = -1;
  size_t line_number = 1;
  while (std::getline(in, line)) {
    ++line_number;
    absl::string_view row = absl::StripTrailingAsciiWhitespace(line);
    if (row.empty()) continue;
    std::vector<absl::string_view> fields = absl::StrSplit(row, ',');
    if (fields.size() != dim + 1) {
      return absl::FailedPreconditionError(absl::StrCat(
          path, ":", line_number, ": schema error: expected ", dim + 1,
          " fields, got ", fields.size()));
    }
    for (size_t j = 0; j < dim; ++j) {
      absl::StatusOr<double> value = ParseDouble(fields[j]);
      if (!value.ok()) {
        return absl::InvalidArgumentError(
            absl::StrCat(path, ":", line_number, ": parse error: ",
                         value.status().message()));
      }
      features.push_back(*value);
    }
    absl::StatusOr<int> label = ParseLabel(fields[dim]);
    if (!label.ok()) {
      return absl::InvalidArgumentError(
          absl::StrCat(path, ":", line_number, ": parse error: ",
                       label.status().message()));
    }
    max_label = std::max(max_label, *label);
    labels.push_back(*label);
  }
  if (labels.empty()) {
    return absl::InvalidArgumentError(absl::StrCat(path, ": no data rows"));
  }
  const int classes = num_classes.value_or(std::max(2, max_label + 1));
  if (max_label >= classes) {
    return absl::FailedPreconditionError(
        absl::StrCat(path, ": label ", max_label, " exceeds num_classes ",
                     classes));
  }
  return LabeledDataset::Create(classes, static_cast<int>(dim),
                                std::move(features), std::move(labels));
}

absl::Status SaveCsv(const LabeledDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) return absl::UnavailableError(absl::StrCat("cannot write ", path));
  for (int j = 0; j < ds.dim(); ++j) out << 'f' << j << ',';
  out << "label\n";
  char buffer[32];
  for (size_t i = 0; i < ds.size(); ++i) {
    for (double x : ds.features(i)) {
      std::snprintf(buffer, sizeof(buffer), "%.17g", x);
      out << buffer << ',';
    }
    out << ds.label(i) << '\n';
  }
  out.flush();
  if (!out) return absl::DataLossError(absl::StrCat("write failed: ", path));
  return absl::OkStatus();
}

absl::Status CheckDisjoint(const LabeledDataset& defender,
                           const LabeledDataset& reserved) {
  if (defender.dim() != reserved.dim()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "dimension mismatch: defender ", defender.dim(), ", reserved ",
        reserved.dim()));
  }
  std::unordered_multimap<uint64_t, size_t> index;
  index.reserve(defender.size());
  for (size_t i = 0; i < defender.size(); ++i) {
    index.emplace(HashRow(defender.features(i), defender.label(i)), i);
  }
  for (size_t j = 0; j < reserved.size(); ++j) {
    auto [lo, hi] =
        index.equal_range(HashRow(reserved.features(j), reserved.label(j)));
    for (auto it = lo; it != hi; ++it) {
      if (RowEquals(defender, it->second, reserved, j)) {
        return absl::FailedPreconditionError(absl::StrCat(
            "protocol violation: defender sample ", it->second,
            " also appears as reserved sample ", j));
      }
    }
  }
  return absl::OkStatus();
}

absl::StatusOr<LtuRoundFactory> LtuRoundFactory::Create(
    LabeledDataset defender, LabeledDataset reserved) {
  if (defender.empty() || reserved.empty()) {
    return absl::InvalidArgumentError(
        "defender and reserved sets must be non-empty");
  }
  if (defender.num_classes() != reserved.num_classes()) {
    return absl::InvalidArgumentError("num_classes mismatch");
  }
  if (absl::Status s = CheckDisjoint(defender, reserved); !s.ok()) return s;
  return LtuRoundFactory(std::move(defender), std::move(reserved));
}

LtuRound LtuRoundFactory::Make(uint64_t round_seed) const {
  Rng rng(round_seed);
  const auto d = static_cast<size_t>(rng.UniformInt(defender_.size()));
  const auto r = static_cast<size_t>(rng.UniformInt(reserved_.size()));
  const bool defender_first = rng.Coin();
  return Build(d, r, defender_first, round_seed);
}

LtuRound LtuRoundFactory::MakeWithDefender(size_t defender_index,
                                           uint64_t round_seed) const {
  Rng rng(round_seed);
  const auto r = static_cast<size_t>(rng.UniformInt(reserved_.size()));
  const bool defender_first = rng.Coin();
  return Build(defender_index, r, defender_first, round_seed);
}

LtuRound LtuRoundFactory::MakeWithReserved(size_t reserved_index,
                                           uint64_t round_seed) const {
  Rng rng(round_seed);
  const auto d = static_cast<size_t>(rng.UniformInt(defender_.size()));
  const bool defender_first = rng.Coin();
  return Build(d, reserved_index, defender_first, round_seed);
}

LtuRound LtuRoundFactory::Build(size_t defender_index, size_t reserved_index,
                                bool defender_first,
                                uint64_t round_seed) const {
  LtuRound round;
  round.defender_index = defender_index;
  round.reserved_index = reserved_index;
  round.defender_slot = defender_first ? PairSlot::kFirst : PairSlot::kSecond;
  LtuChallenge& c = round.challenge;
  c.attack_defender = defender_.Without(defender_index);
  c.attack_reserved = reserved_.Without(reserved_index);
  Sample d = defender_.sample(defender_index);
  Sample r = reserved_.sample(reserved_index);
  if (defender_first) {
    c.u1 = std::move(d);
    c.u2 = std::move(r);
  } else {
    c.u1 = std::move(r);
    c.u2 = std::move(d);
  }
  c.removed_position = defender_index;
  c.round_seed = round_seed;
  return round;
}

absl::StatusOr<LtuRound> MakeLtuRound(const LabeledDataset& defender,
                                      const LabeledDataset& reserved,
                                      uint64_t round_seed) {
  absl::StatusOr<LtuRoundFactory> factory =
      LtuRoundFactory::Create(defender, reserved);
  if (!factory.ok()) return factory.status();
  return factory->Make(round_seed);
}

}  // namespace ltu
