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

// Defender trainers and the trained models they produce.
//
// Every trainer declares what it guarantees (TrainerCapabilities) so that
// the evaluator can tell which attacks are expected to succeed:
//
//   algorithm        deterministic          order-invariant  white-box
//   logistic_gd      yes                    yes              gradients
//   gaussian_nb      yes                    yes              -
//   knn              yes                    yes              stores data
//   perceptron_sgd   unless shuffled        no               gradients
//   linear_svc_sgd   unless shuffled        no               gradients
//   mlp_sgd          only with fixed seed   no               gradients
//
// The order-invariant trainers sort their input into a canonical order
// before fitting, so permuting the training set cannot change a single bit
// of the result.

#ifndef LTU_DEFENDER_H_
#define LTU_DEFENDER_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/string_view.h"
#include "ltu/data.h"

namespace ltu {

enum class Algorithm {
  kLogisticGD,
  kGaussianNB,
  kKnn,
  kPerceptronSgd,
  kLinearSvcSgd,
  kMlpSgd,
};

const char* AlgorithmName(Algorithm algorithm);
absl::StatusOr<Algorithm> ParseAlgorithm(absl::string_view name);

// Where the training seed comes from. A fixed seed is part of the released
// configuration; otherwise the seed is supplied per call by the evaluator.
struct InitSeedPolicy {
  std::optional<uint64_t> fixed_seed;

  static InitSeedPolicy FromEvaluator() { return {}; }
  static InitSeedPolicy Fixed(uint64_t seed) { return {seed}; }
  bool is_fixed() const { return fixed_seed.has_value(); }
};

struct TrainerCapabilities {
  // The trained model does not depend on the seed passed to Train().
  bool deterministic = false;
  // Permuting the training data cannot change the trained model.
  bool order_invariant = false;
  // The model stores training samples verbatim.
  bool example_based = false;
  // Gradient() is available.
  bool differentiable = false;

  friend bool operator==(const TrainerCapabilities&,
                         const TrainerCapabilities&) = default;
};

struct TrainerConfig {
  Algorithm algorithm = Algorithm::kLogisticGD;

  // Gradient-based trainers.
  double learning_rate = 0.5;   // (0, 100]
  int epochs = 200;             // [0, 100000]
  double l2 = 1e-3;             // [0, 10]
  bool fit_intercept = true;
  int batch_size = 16;          // mlp_sgd only, [1, 4096]

  // mlp_sgd: one tanh hidden layer.
  int hidden_width = 32;        // [1, 64]
  // mlp_sgd early stopping: when > 0, this fraction of the training set is
  // held out and the parameters with the best held-out loss are kept.
  double validation_fraction = 0.0;  // [0, 0.5]
  int patience = 10;                 // [1, 100000]

  // knn.
  int k_neighbors = 5;          // [1, 1000]

  // gaussian_nb: added variance, relative to the largest feature variance.
  double var_smoothing = 1e-9;  // [0, 1]

  bool shuffle_each_epoch = false;
  InitSeedPolicy init_seed_policy;

  absl::Status Validate() const;
  TrainerCapabilities Capabilities() const;
  // Seed the trainer actually uses when called with `evaluator_seed`.
  uint64_t EffectiveSeed(uint64_t evaluator_seed) const {
    return init_seed_policy.fixed_seed.value_or(evaluator_seed);
  }
  // Whether the trained model depends on the seed at all.
  bool UsesSeed() const;
};

// Flat key/value form of a config, in a fixed key order. Keys are the field
// names above plus `algorithm` and `seed` (empty unless the policy is fixed).
std::vector<std::pair<std::string, std::string>> TrainerConfigToKeyValues(
    const TrainerConfig& config);
absl::Status SetTrainerConfigValue(TrainerConfig& config, absl::string_view key,
                                   absl::string_view value);

enum class LossKind {
  kZeroOne,
  // 1 - p(true class).
  kBoundedTrueClass,
};

// Per-sample losses that gradients can be taken of.
enum class GradientLoss {
  kBoundedTrueClass,
  // Softmax cross-entropy: the training loss of logistic_gd and mlp_sgd,
  // and the smooth surrogate used for perceptron_sgd and linear_svc_sgd.
  kTrainingLoss,
};

const char* LossKindName(LossKind kind);
const char* GradientLossName(GradientLoss kind);

class DefenderModel {
 public:
  // Builds a differentiable or naive-Bayes model directly from parameters,
  // e.g. an untrained (all-zero) logistic model. Not valid for knn.
  static absl::StatusOr<DefenderModel> FromParameters(
      const TrainerConfig& config, int num_classes, int dim,
      std::vector<double> parameters);

  Algorithm algorithm() const { return config_.algorithm; }
  const TrainerConfig& config() const { return config_; }
  TrainerCapabilities capabilities() const { return config_.Capabilities(); }
  int num_classes() const { return num_classes_; }
  int dim() const { return dim_; }
  // Seed the model was trained with (after applying the seed policy).
  uint64_t training_seed() const { return training_seed_; }

  // Empty for knn.
  const std::vector<double>& parameters() const { return parameters_; }
  // Training set in canonical order; knn only.
  const LabeledDataset& stored_examples() const { return examples_; }

  absl::StatusOr<std::vector<double>> PredictProba(
      std::span<const double> features) const;
  // Unchecked: features.size() == dim(), out.size() == num_classes().
  void PredictProbaInto(std::span<const double> features,
                        std::span<double> out) const;

  // Argmax of the class probabilities; ties go to the lowest class.
  int Predict(std::span<const double> features) const;

  // Versioned text blob: algorithm tag, shape, config and parameters as
  // hex floats, so parameters survive a round trip bit for bit.
  std::string Serialize() const;
  static absl::StatusOr<DefenderModel> Deserialize(absl::string_view blob);

  friend bool operator==(const DefenderModel&, const DefenderModel&);

 private:
  friend class ModelBuilder;
  DefenderModel() = default;

  TrainerConfig config_;
  int num_classes_ = 0;
  int dim_ = 0;
  uint64_t training_seed_ = 0;
  std::vector<double> parameters_;
  LabeledDataset examples_;
};

absl::StatusOr<DefenderModel> Train(const TrainerConfig& config,
                                    const LabeledDataset& data, uint64_t seed);

absl::StatusOr<std::vector<double>> PredictProba(
    const DefenderModel& model, std::span<const double> features);

// In [0, 1]. Unchecked variant for hot loops.
absl::StatusOr<double> Loss(const DefenderModel& model, const Sample& sample,
                            LossKind kind);
double LossUnchecked(const DefenderModel& model,
                     std::span<const double> features, int label,
                     LossKind kind);

// L2 norm of the parameter difference. For knn, the distance between the
// stored (canonically ordered) training sets.
absl::StatusOr<double> ParamDistance(const DefenderModel& a,
                                     const DefenderModel& b);

// d loss / d parameters for one sample, same layout as parameters().
absl::StatusOr<std::vector<double>> Gradient(const DefenderModel& model,
                                             const Sample& sample,
                                             LossKind kind);
absl::StatusOr<std::vector<double>> Gradient(const DefenderModel& model,
                                             const Sample& sample,
                                             GradientLoss kind);

// Per-sample training-loss value matching Gradient(..., kTrainingLoss).
absl::StatusOr<double> TrainingLoss(const DefenderModel& model,
                                    const Sample& sample);

// Sort order used by the order-invariant trainers: lexicographic on
// features, then label.
LabeledDataset CanonicalOrder(const LabeledDataset& data);

}  // namespace ltu

#endif  // LTU_DEFENDER_H_
