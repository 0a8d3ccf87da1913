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

#include "ltu/defender.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <numbers>
#include <numeric>

#include "absl/strings/numbers.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_split.h"
#include "absl/strings/string_view.h"
#include "absl/strings/strip.h"
#include "ltu/rng.h"

namespace ltu {

// Grants the trainers access to DefenderModel's private state.
class ModelBuilder {
 public:
  static DefenderModel Make(const TrainerConfig& config, int num_classes,
                            int dim, uint64_t seed,
                            std::vector<double> parameters,
                            LabeledDataset examples = {}) {
    DefenderModel m;
    m.config_ = config;
    m.num_classes_ = num_classes;
    m.dim_ = dim;
    m.training_seed_ = seed;
    m.parameters_ = std::move(parameters);
    m.examples_ = std::move(examples);
    return m;
  }
};

namespace {

constexpr absl::string_view kBlobMagic = "ltu-model";
constexpr int kBlobVersion = 1;

bool IsLinear(Algorithm a) {
  return a == Algorithm::kLogisticGD || a == Algorithm::kPerceptronSgd ||
         a == Algorithm::kLinearSvcSgd;
}

size_t ParameterCount(const TrainerConfig& config, int num_classes, int dim) {
  const auto c = static_cast<size_t>(num_classes);
  const auto k = static_cast<size_t>(dim);
  switch (config.algorithm) {
    case Algorithm::kLogisticGD:
    case Algorithm::kPerceptronSgd:
    case Algorithm::kLinearSvcSgd:
      return c * k + (config.fit_intercept ? c : 0);
    case Algorithm::kGaussianNB:
      return c + 2 * c * k;
    case Algorithm::kKnn:
      return 0;
    case Algorithm::kMlpSgd: {
      const auto h = static_cast<size_t>(config.hidden_width);
      return h * k + h + c * h + c;
    }
  }
  return 0;
}

bool AllFinite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(),
                     [](double v) { return std::isfinite(v); });
}

std::string FormatDouble(double v) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.17g", v);
  return buffer;
}

std::string HexDouble(double v) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%a", v);
  return buffer;
}

absl::StatusOr<double> ParseHexDouble(absl::string_view token) {
  std::string s(token);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    return absl::InvalidArgumentError(absl::StrCat("bad number '", s, "'"));
  }
  return v;
}

void SoftmaxInPlace(std::span<double> z) {
  double max_z = -std::numeric_limits<double>::infinity();
  for (double v : z) max_z = std::max(max_z, v);
  double total = 0.0;
  for (double& v : z) {
    v = std::exp(v - max_z);
    total += v;
  }
  for (double& v : z) v /= total;
}

// z = W x (+ b). W is c x k row-major, followed by b when fitted.
void LinearScores(std::span<const double> params, int c, int k,
                  bool fit_intercept, std::span<const double> x,
                  std::span<double> z) {
  for (int j = 0; j < c; ++j) {
    const double* w = params.data() + static_cast<size_t>(j) * k;
    double s = fit_intercept ? params[static_cast<size_t>(c) * k + j] : 0.0;
    for (int t = 0; t < k; ++t) s += w[t] * x[t];
    z[j] = s;
  }
}

// Layout: W1 (h x k), b1 (h), W2 (c x h), b2 (c).
struct MlpView {
  const double* w1;
  const double* b1;
  const double* w2;
  const double* b2;
  int c, k, h;

  MlpView(std::span<const double> p, int c_, int k_, int h_)
      : c(c_), k(k_), h(h_) {
    w1 = p.data();
    b1 = w1 + static_cast<size_t>(h) * k;
    w2 = b1 + h;
    b2 = w2 + static_cast<size_t>(c) * h;
  }

  void Forward(std::span<const double> x, std::span<double> hidden,
               std::span<double> z) const {
    for (int u = 0; u < h; ++u) {
      const double* w = w1 + static_cast<size_t>(u) * k;
      double s = b1[u];
      for (int t = 0; t < k; ++t) s += w[t] * x[t];
      hidden[u] = std::tanh(s);
    }
    for (int j = 0; j < c; ++j) {
      const double* w = w2 + static_cast<size_t>(j) * h;
      double s = b2[j];
      for (int u = 0; u < h; ++u) s += w[u] * hidden[u];
      z[j] = s;
    }
  }
};

// Accumulates scale * d(loss)/d(params) given d(loss)/d(scores) for a
// linear model.
void AccumulateLinearGradient(std::span<const double> dz, int c, int k,
                              bool fit_intercept, std::span<const double> x,
                              double scale, std::span<double> grad) {
  for (int j = 0; j < c; ++j) {
    const double g = scale * dz[j];
    if (g == 0.0) continue;
    double* row = grad.data() + static_cast<size_t>(j) * k;
    for (int t = 0; t < k; ++t) row[t] += g * x[t];
    if (fit_intercept) grad[static_cast<size_t>(c) * k + j] += g;
  }
}

void AccumulateMlpGradient(const MlpView& net, std::span<const double> dz,
                           std::span<const double> x,
                           std::span<const double> hidden, double scale,
                           std::span<double> grad,
                           std::span<double> scratch_hidden) {
  const int c = net.c, k = net.k, h = net.h;
  double* gw1 = grad.data();
  double* gb1 = gw1 + static_cast<size_t>(h) * k;
  double* gw2 = gb1 + h;
  double* gb2 = gw2 + static_cast<size_t>(c) * h;
  std::fill(scratch_hidden.begin(), scratch_hidden.end(), 0.0);
  for (int j = 0; j < c; ++j) {
    const double g = scale * dz[j];
    gb2[j] += g;
    double* row = gw2 + static_cast<size_t>(j) * h;
    const double* w = net.w2 + static_cast<size_t>(j) * h;
    for (int u = 0; u < h; ++u) {
      row[u] += g * hidden[u];
      scratch_hidden[u] += g * w[u];
    }
  }
  for (int u = 0; u < h; ++u) {
    const double delta = scratch_hidden[u] * (1.0 - hidden[u] * hidden[u]);
    gb1[u] += delta;
    double* row = gw1 + static_cast<size_t>(u) * k;
    for (int t = 0; t < k; ++t) row[t] += delta * x[t];
  }
}

// d loss / d scores for one sample, given softmax probabilities.
void ScoreGradient(std::span<const double> proba, int label, GradientLoss kind,
                   std::span<double> dz) {
  const size_t c = proba.size();
  if (kind == GradientLoss::kTrainingLoss) {
    for (size_t j = 0; j < c; ++j) dz[j] = proba[j];
    dz[static_cast<size_t>(label)] -= 1.0;
  } else {
    // loss = 1 - p_y;  d/dz_j = p_y (p_j - [j == y]).
    const double py = proba[static_cast<size_t>(label)];
    for (size_t j = 0; j < c; ++j) dz[j] = py * proba[j];
    dz[static_cast<size_t>(label)] -= py;
  }
}

absl::Status DivergenceError(const TrainerConfig& config) {
  return absl::InternalError(
      absl::StrCat(AlgorithmName(config.algorithm),
                   ": training diverged (non-finite parameters); lower the "
                   "learning rate"));
}

DefenderModel TrainLogistic(const TrainerConfig& config,
                            const LabeledDataset& data, uint64_t seed) {
  const int c = data.num_classes();
  const int k = data.dim();
  const size_t n = data.size();
  std::vector<double> params(ParameterCount(config, c, k), 0.0);
  std::vector<double> grad(params.size());
  std::vector<double> z(static_cast<size_t>(c));
  const size_t num_weights = static_cast<size_t>(c) * k;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (size_t i = 0; i < n; ++i) {
      auto x = data.features(i);
      LinearScores(params, c, k, config.fit_intercept, x, z);
      SoftmaxInPlace(z);
      z[static_cast<size_t>(data.label(i))] -= 1.0;
      AccumulateLinearGradient(z, c, k, config.fit_intercept, x, 1.0, grad);
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    for (size_t p = 0; p < params.size(); ++p) {
      double g = grad[p] * inv_n;
      if (p < num_weights) g += config.l2 * params[p];
      params[p] -= config.learning_rate * g;
    }
  }
  return ModelBuilder::Make(config, c, k, seed, std::move(params));
}

DefenderModel TrainGaussianNB(const TrainerConfig& config,
                              const LabeledDataset& data, uint64_t seed) {
  const int c = data.num_classes();
  const int k = data.dim();
  const auto cs = static_cast<size_t>(c);
  const auto ks = static_cast<size_t>(k);
  const size_t n = data.size();

  // Layout: prior (c), mean (c x k), variance (c x k).
  std::vector<double> params(ParameterCount(config, c, k), 0.0);
  double* prior = params.data();
  double* mean = prior + cs;
  double* var = mean + cs * ks;

  std::vector<size_t> counts(cs, 0);
  for (size_t i = 0; i < n; ++i) {
    const auto y = static_cast<size_t>(data.label(i));
    ++counts[y];
    auto x = data.features(i);
    for (size_t t = 0; t < ks; ++t) mean[y * ks + t] += x[t];
  }
  for (size_t y = 0; y < cs; ++y) {
    for (size_t t = 0; t < ks; ++t) {
      mean[y * ks + t] =
          counts[y] > 0 ? mean[y * ks + t] / static_cast<double>(counts[y])
                        : 0.0;
    }
  }
  for (size_t i = 0; i < n; ++i) {
    const auto y = static_cast<size_t>(data.label(i));
    auto x = data.features(i);
    for (size_t t = 0; t < ks; ++t) {
      const double d = x[t] - mean[y * ks + t];
      var[y * ks + t] += d * d;
    }
  }

  // Smoothing relative to the largest per-feature variance of the data.
  double max_feature_var = 0.0;
  for (size_t t = 0; t < ks; ++t) {
    double mu = 0.0;
    for (size_t i = 0; i < n; ++i) mu += data.features(i)[t];
    mu /= static_cast<double>(n);
    double v = 0.0;
    for (size_t i = 0; i < n; ++i) {
      const double d = data.features(i)[t] - mu;
      v += d * d;
    }
    max_feature_var = std::max(max_feature_var, v / static_cast<double>(n));
  }
  double epsilon = config.var_smoothing * max_feature_var;
  if (!(epsilon > 0.0)) epsilon = std::max(config.var_smoothing, 1e-12);

  for (size_t y = 0; y < cs; ++y) {
    prior[y] = static_cast<double>(counts[y]) / static_cast<double>(n);
    for (size_t t = 0; t < ks; ++t) {
      var[y * ks + t] =
          (counts[y] > 0 ? var[y * ks + t] / static_cast<double>(counts[y])
                         : 1.0) +
          epsilon;
    }
  }
  return ModelBuilder::Make(config, c, k, seed, std::move(params));
}

DefenderModel TrainKnn(const TrainerConfig& config, const LabeledDataset& data,
                       uint64_t seed) {
  return ModelBuilder::Make(config, data.num_classes(), data.dim(), seed, {},
                            data);
}

std::vector<size_t> EpochOrder(size_t n, bool shuffle, Rng& rng) {
  if (shuffle) return rng.Permutation(n);
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  return order;
}

int ArgMax(std::span<const double> z) {
  return static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
}

// Multiclass perceptron, zero initialization: on a mistake, move the true
// class towards x and the predicted class away from it.
DefenderModel TrainPerceptron(const TrainerConfig& config,
                              const LabeledDataset& data, uint64_t seed) {
  const int c = data.num_classes();
  const int k = data.dim();
  std::vector<double> params(ParameterCount(config, c, k), 0.0);
  std::vector<double> z(static_cast<size_t>(c));
  std::vector<double> step(static_cast<size_t>(c));
  Rng rng(DeriveSeed(seed, "shuffle"));
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (size_t i : EpochOrder(data.size(), config.shuffle_each_epoch, rng)) {
      auto x = data.features(i);
      const int y = data.label(i);
      LinearScores(params, c, k, config.fit_intercept, x, z);
      const int predicted = ArgMax(z);
      if (predicted == y) continue;
      std::fill(step.begin(), step.end(), 0.0);
      step[static_cast<size_t>(y)] = -1.0;
      step[static_cast<size_t>(predicted)] = 1.0;
      AccumulateLinearGradient(step, c, k, config.fit_intercept, x,
                               -config.learning_rate, params);
    }
  }
  return ModelBuilder::Make(config, c, k, seed, std::move(params));
}

// Crammer-Singer multiclass hinge loss with L2 weight decay, plain SGD.
DefenderModel TrainLinearSvc(const TrainerConfig& config,
                             const LabeledDataset& data, uint64_t seed) {
  const int c = data.num_classes();
  const int k = data.dim();
  const size_t num_weights = static_cast<size_t>(c) * k;
  std::vector<double> params(ParameterCount(config, c, k), 0.0);
  std::vector<double> z(static_cast<size_t>(c));
  std::vector<double> step(static_cast<size_t>(c));
  Rng rng(DeriveSeed(seed, "shuffle"));
  const double decay = 1.0 - config.learning_rate * config.l2;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (size_t i : EpochOrder(data.size(), config.shuffle_each_epoch, rng)) {
      auto x = data.features(i);
      const int y = data.label(i);
      LinearScores(params, c, k, config.fit_intercept, x, z);
      int rival = -1;
      for (int j = 0; j < c; ++j) {
        if (j != y && (rival < 0 || z[j] > z[rival])) rival = j;
      }
      for (size_t p = 0; p < num_weights; ++p) params[p] *= decay;
      if (z[y] - z[rival] >= 1.0) continue;
      std::fill(step.begin(), step.end(), 0.0);
      step[static_cast<size_t>(y)] = -1.0;
      step[static_cast<size_t>(rival)] = 1.0;
      AccumulateLinearGradient(step, c, k, config.fit_intercept, x,
                               -config.learning_rate, params);
    }
  }
  return ModelBuilder::Make(config, c, k, seed, std::move(params));
}

double MeanCrossEntropy(const MlpView& net, const LabeledDataset& data,
                        std::span<const size_t> rows) {
  std::vector<double> hidden(static_cast<size_t>(net.h));
  std::vector<double> z(static_cast<size_t>(net.c));
  double total = 0.0;
  for (size_t i : rows) {
    net.Forward(data.features(i), hidden, z);
    SoftmaxInPlace(z);
    total -= std::log(std::max(z[static_cast<size_t>(data.label(i))],
                               std::numeric_limits<double>::min()));
  }
  return total / static_cast<double>(rows.size());
}

DefenderModel TrainMlp(const TrainerConfig& config, const LabeledDataset& data,
                       uint64_t seed) {
  const int c = data.num_classes();
  const int k = data.dim();
  const int h = config.hidden_width;
  std::vector<double> params(ParameterCount(config, c, k), 0.0);

  // Glorot-uniform weights, zero biases.
  Rng init_rng(DeriveSeed(seed, "init"));
  {
    const double a1 = std::sqrt(6.0 / (k + h));
    const double a2 = std::sqrt(6.0 / (h + c));
    const size_t w1 = static_cast<size_t>(h) * k;
    for (size_t p = 0; p < w1; ++p) params[p] = a1 * (2 * init_rng.Uniform() - 1);
    const size_t w2 = w1 + h;
    for (size_t p = 0; p < static_cast<size_t>(c) * h; ++p) {
      params[w2 + p] = a2 * (2 * init_rng.Uniform() - 1);
    }
  }
  const size_t w1_end = static_cast<size_t>(h) * k;
  const size_t w2_begin = w1_end + h;
  const size_t w2_end = w2_begin + static_cast<size_t>(c) * h;
  auto is_weight = [&](size_t p) {
    return p < w1_end || (p >= w2_begin && p < w2_end);
  };

  std::vector<size_t> train_rows(data.size());
  std::iota(train_rows.begin(), train_rows.end(), size_t{0});
  std::vector<size_t> validation_rows;
  if (config.validation_fraction > 0.0 && data.size() >= 2) {
    Rng split_rng(DeriveSeed(seed, "validation"));
    std::vector<size_t> perm = split_rng.Permutation(data.size());
    auto n_val = static_cast<size_t>(std::llround(
        config.validation_fraction * static_cast<double>(data.size())));
    n_val = std::clamp<size_t>(n_val, 1, data.size() - 1);
    validation_rows.assign(perm.begin(), perm.begin() + n_val);
    train_rows.assign(perm.begin() + n_val, perm.end());
    std::sort(validation_rows.begin(), validation_rows.end());
    std::sort(train_rows.begin(), train_rows.end());
  }

  Rng shuffle_rng(DeriveSeed(seed, "shuffle"));
  std::vector<double> grad(params.size());
  std::vector<double> hidden(static_cast<size_t>(h));
  std::vector<double> scratch(static_cast<size_t>(h));
  std::vector<double> z(static_cast<size_t>(c));
  const auto batch = static_cast<size_t>(config.batch_size);

  std::vector<double> best = params;
  double best_loss = std::numeric_limits<double>::infinity();
  int epochs_without_improvement = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<size_t> order =
        EpochOrder(train_rows.size(), config.shuffle_each_epoch, shuffle_rng);
    for (size_t start = 0; start < order.size(); start += batch) {
      const size_t stop = std::min(order.size(), start + batch);
      std::fill(grad.begin(), grad.end(), 0.0);
      MlpView net(params, c, k, h);
      const double scale = 1.0 / static_cast<double>(stop - start);
      for (size_t b = start; b < stop; ++b) {
        const size_t row = train_rows[order[b]];
        auto x = data.features(row);
        net.Forward(x, hidden, z);
        SoftmaxInPlace(z);
        z[static_cast<size_t>(data.label(row))] -= 1.0;
        AccumulateMlpGradient(net, z, x, hidden, scale, grad, scratch);
      }
      for (size_t p = 0; p < params.size(); ++p) {
        double g = grad[p];
        if (is_weight(p)) g += config.l2 * params[p];
        params[p] -= config.learning_rate * g;
      }
    }
    if (!validation_rows.empty()) {
      const double loss =
          MeanCrossEntropy(MlpView(params, c, k, h), data, validation_rows);
      if (loss < best_loss) {
        best_loss = loss;
        best = params;
        epochs_without_improvement = 0;
      } else if (++epochs_without_improvement >= config.patience) {
        break;
      }
    }
  }
  if (!validation_rows.empty() && std::isfinite(best_loss)) {
    params = std::move(best);
  }
  return ModelBuilder::Make(config, c, k, seed, std::move(params));
}

absl::Status CheckFeatures(const DefenderModel& model,
                           std::span<const double> features) {
  if (features.size() != static_cast<size_t>(model.dim())) {
    return absl::InvalidArgumentError(
        absl::StrCat("feature dimension ", features.size(),
                     " does not match model dimension ", model.dim()));
  }
  return absl::OkStatus();
}

absl::Status CheckSample(const DefenderModel& model, const Sample& sample) {
  if (absl::Status s = CheckFeatures(model, sample.features); !s.ok()) {
    return s;
  }
  if (sample.label < 0 || sample.label >= model.num_classes()) {
    return absl::InvalidArgumentError(
        absl::StrCat("label ", sample.label, " outside [0, ",
                     model.num_classes(), ")"));
  }
  return absl::OkStatus();
}

}  // namespace

const char* AlgorithmName(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::kLogisticGD:
      return "logistic_gd";
    case Algorithm::kGaussianNB:
      return "gaussian_nb";
    case Algorithm::kKnn:
      return "knn";
    case Algorithm::kPerceptronSgd:
      return "perceptron_sgd";
    case Algorithm::kLinearSvcSgd:
      return "linear_svc_sgd";
    case Algorithm::kMlpSgd:
      return "mlp_sgd";
  }
  return "unknown";
}

absl::StatusOr<Algorithm> ParseAlgorithm(absl::string_view name) {
  for (Algorithm a :
       {Algorithm::kLogisticGD, Algorithm::kGaussianNB, Algorithm::kKnn,
        Algorithm::kPerceptronSgd, Algorithm::kLinearSvcSgd,
        Algorithm::kMlpSgd}) {
    if (name == AlgorithmName(a)) return a;
  }
  return absl::InvalidArgumentError(absl::StrCat(
      "unknown algorithm '", name,
      "' (expected logistic_gd, gaussian_nb, knn, perceptron_sgd, "
      "linear_svc_sgd or mlp_sgd)"));
}

const char* LossKindName(LossKind kind) {
  return kind == LossKind::kZeroOne ? "zero_one" : "bounded_true_class";
}

const char* GradientLossName(GradientLoss kind) {
  return kind == GradientLoss::kTrainingLoss ? "training_loss"
                                             : "bounded_true_class";
}

bool TrainerConfig::UsesSeed() const {
  switch (algorithm) {
    case Algorithm::kLogisticGD:
    case Algorithm::kGaussianNB:
    case Algorithm::kKnn:
      return false;
    case Algorithm::kPerceptronSgd:
    case Algorithm::kLinearSvcSgd:
      return shuffle_each_epoch;
    case Algorithm::kMlpSgd:
      return true;
  }
  return true;
}

TrainerCapabilities TrainerConfig::Capabilities() const {
  TrainerCapabilities caps;
  caps.deterministic = !UsesSeed() || init_seed_policy.is_fixed();
  caps.order_invariant = algorithm == Algorithm::kLogisticGD ||
                         algorithm == Algorithm::kGaussianNB ||
                         algorithm == Algorithm::kKnn;
  caps.example_based = algorithm == Algorithm::kKnn;
  caps.differentiable =
      IsLinear(algorithm) || algorithm == Algorithm::kMlpSgd;
  return caps;
}

absl::Status TrainerConfig::Validate() const {
  auto range_error = [](absl::string_view key, auto value,
                        absl::string_view range) {
    return absl::InvalidArgumentError(
        absl::StrCat("trainer.", key, " = ", value, " outside ", range));
  };
  if (!(learning_rate > 0.0 && learning_rate <= 100.0)) {
    return range_error("learning_rate", learning_rate, "(0, 100]");
  }
  if (epochs < 0 || epochs > 100000) {
    return range_error("epochs", epochs, "[0, 100000]");
  }
  if (!(l2 >= 0.0 && l2 <= 10.0)) return range_error("l2", l2, "[0, 10]");
  if (batch_size < 1 || batch_size > 4096) {
    return range_error("batch_size", batch_size, "[1, 4096]");
  }
  if (hidden_width < 1 || hidden_width > 64) {
    return range_error("hidden_width", hidden_width, "[1, 64]");
  }
  if (!(validation_fraction >= 0.0 && validation_fraction <= 0.5)) {
    return range_error("validation_fraction", validation_fraction, "[0, 0.5]");
  }
  if (patience < 1 || patience > 100000) {
    return range_error("patience", patience, "[1, 100000]");
  }
  if (k_neighbors < 1 || k_neighbors > 1000) {
    return range_error("k_neighbors", k_neighbors, "[1, 1000]");
  }
  if (!(var_smoothing >= 0.0 && var_smoothing <= 1.0)) {
    return range_error("var_smoothing", var_smoothing, "[0, 1]");
  }
  return absl::OkStatus();
}

std::vector<std::pair<std::string, std::string>> TrainerConfigToKeyValues(
    const TrainerConfig& config) {
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  return {
      {"algorithm", AlgorithmName(config.algorithm)},
      {"learning_rate", FormatDouble(config.learning_rate)},
      {"epochs", absl::StrCat(config.epochs)},
      {"l2", FormatDouble(config.l2)},
      {"fit_intercept", b(config.fit_intercept)},
      {"batch_size", absl::StrCat(config.batch_size)},
      {"hidden_width", absl::StrCat(config.hidden_width)},
      {"validation_fraction", FormatDouble(config.validation_fraction)},
      {"patience", absl::StrCat(config.patience)},
      {"k_neighbors", absl::StrCat(config.k_neighbors)},
      {"var_smoothing", FormatDouble(config.var_smoothing)},
      {"shuffle_each_epoch", b(config.shuffle_each_epoch)},
      {"seed", config.init_seed_policy.is_fixed()
                   ? absl::StrCat(*config.init_seed_policy.fixed_seed)
                   : std::string()},
  };
}

absl::Status SetTrainerConfigValue(TrainerConfig& config, absl::string_view key,
                                   absl::string_view value) {
  auto bad = [&](absl::string_view expected) {
    return absl::InvalidArgumentError(absl::StrCat(
        "trainer.", key, ": expected ", expected, ", got '", value, "'"));
  };
  auto set_double = [&](double& field) -> absl::Status {
    if (!absl::SimpleAtod(value, &field)) return bad("a number");
    return absl::OkStatus();
  };
  auto set_int = [&](int& field) -> absl::Status {
    if (!absl::SimpleAtoi(value, &field)) return bad("an integer");
    return absl::OkStatus();
  };
  auto set_bool = [&](bool& field) -> absl::Status {
    if (!absl::SimpleAtob(value, &field)) return bad("true or false");
    return absl::OkStatus();
  };
  if (key == "algorithm") {
    absl::StatusOr<Algorithm> a = ParseAlgorithm(value);
    if (!a.ok()) return a.status();
    config.algorithm = *a;
    return absl::OkStatus();
  }
  if (key == "learning_rate") return set_double(config.learning_rate);
  if (key == "epochs") return set_int(config.epochs);
  if (key == "l2") return set_double(config.l2);
  if (key == "fit_intercept") return set_bool(config.fit_intercept);
  if (key == "batch_size") return set_int(config.batch_size);
  if (key == "hidden_width") return set_int(config.hidden_width);
  if (key == "validation_fraction") {
    return set_double(config.validation_fraction);
  }
  if (key == "patience") return set_int(config.patience);
  if (key == "k_neighbors") return set_int(config.k_neighbors);
  if (key == "var_smoothing") return set_double(config.var_smoothing);
  if (key == "shuffle_each_epoch") return set_bool(config.shuffle_each_epoch);
  if (key == "seed") {
    if (value.empty() || value == "none") {
      config.init_seed_policy = InitSeedPolicy::FromEvaluator();
      return absl::OkStatus();
    }
    uint64_t seed = 0;
    if (!absl::SimpleAtoi(value, &seed)) return bad("an unsigned integer");
    config.init_seed_policy = InitSeedPolicy::Fixed(seed);
    return absl::OkStatus();
  }
  return absl::InvalidArgumentError(
      absl::StrCat("unknown trainer key 'trainer.", key, "'"));
}

LabeledDataset CanonicalOrder(const LabeledDataset& data) {
  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    auto fa = data.features(a);
    auto fb = data.features(b);
    if (std::lexicographical_compare(fa.begin(), fa.end(), fb.begin(),
                                     fb.end())) {
      return true;
    }
    if (std::lexicographical_compare(fb.begin(), fb.end(), fa.begin(),
                                     fa.end())) {
      return false;
    }
    return data.label(a) < data.label(b);
  });
  return data.Subset(order);
}

absl::StatusOr<DefenderModel> Train(const TrainerConfig& config,
                                    const LabeledDataset& data,
                                    uint64_t seed) {
  if (absl::Status s = config.Validate(); !s.ok()) return s;
  if (data.empty()) {
    return absl::InvalidArgumentError("cannot train on an empty dataset");
  }
  const uint64_t effective_seed = config.EffectiveSeed(seed);
  DefenderModel model = [&] {
    switch (config.algorithm) {
      case Algorithm::kLogisticGD:
        return TrainLogistic(config, CanonicalOrder(data), effective_seed);
      case Algorithm::kGaussianNB:
        return TrainGaussianNB(config, CanonicalOrder(data), effective_seed);
      case Algorithm::kKnn:
        return TrainKnn(config, CanonicalOrder(data), effective_seed);
      case Algorithm::kPerceptronSgd:
        return TrainPerceptron(config, data, effective_seed);
      case Algorithm::kLinearSvcSgd:
        return TrainLinearSvc(config, data, effective_seed);
      case Algorithm::kMlpSgd:
        return TrainMlp(config, data, effective_seed);
    }
    return TrainKnn(config, data, effective_seed);
  }();
  if (!AllFinite(model.parameters())) return DivergenceError(config);
  return model;
}

absl::StatusOr<DefenderModel> DefenderModel::FromParameters(
    const TrainerConfig& config, int num_classes, int dim,
    std::vector<double> parameters) {
  if (absl::Status s = config.Validate(); !s.ok()) return s;
  if (config.algorithm == Algorithm::kKnn) {
    return absl::InvalidArgumentError(
        "knn models are defined by their stored examples; use Train()");
  }
  if (num_classes < 2 || dim < 1) {
    return absl::InvalidArgumentError("need num_classes >= 2 and dim >= 1");
  }
  const size_t expected = ParameterCount(config, num_classes, dim);
  if (parameters.size() != expected) {
    return absl::InvalidArgumentError(
        absl::StrCat("expected ", expected, " parameters, got ",
                     parameters.size()));
  }
  if (!AllFinite(parameters)) {
    return absl::InvalidArgumentError("parameters must be finite");
  }
  return ModelBuilder::Make(config, num_classes, dim,
                            config.EffectiveSeed(0), std::move(parameters));
}

void DefenderModel::PredictProbaInto(std::span<const double> x,
                                     std::span<double> out) const {
  const int c = num_classes_;
  const int k = dim_;
  switch (config_.algorithm) {
    case Algorithm::kLogisticGD:
    case Algorithm::kPerceptronSgd:
    case Algorithm::kLinearSvcSgd:
      LinearScores(parameters_, c, k, config_.fit_intercept, x, out);
      SoftmaxInPlace(out);
      return;
    case Algorithm::kGaussianNB: {
      const auto cs = static_cast<size_t>(c);
      const auto ks = static_cast<size_t>(k);
      const double* prior = parameters_.data();
      const double* mean = prior + cs;
      const double* var = mean + cs * ks;
      for (size_t y = 0; y < cs; ++y) {
        if (prior[y] <= 0.0) {
          out[y] = -std::numeric_limits<double>::infinity();
          continue;
        }
        double log_likelihood = std::log(prior[y]);
        for (size_t t = 0; t < ks; ++t) {
          const double v = var[y * ks + t];
          const double d = x[t] - mean[y * ks + t];
          log_likelihood -=
              0.5 * (std::log(2.0 * std::numbers::pi * v) + d * d / v);
        }
        out[y] = log_likelihood;
      }
      SoftmaxInPlace(out);
      return;
    }
    case Algorithm::kKnn: {
      const size_t n = examples_.size();
      std::vector<std::pair<double, size_t>> dist(n);
      for (size_t i = 0; i < n; ++i) {
        auto f = examples_.features(i);
        double s = 0.0;
        for (int t = 0; t < k; ++t) {
          const double d = f[t] - x[t];
          s += d * d;
        }
        dist[i] = {s, i};
      }
      const size_t kk =
          std::min(n, static_cast<size_t>(config_.k_neighbors));
      std::partial_sort(dist.begin(), dist.begin() + static_cast<ptrdiff_t>(kk),
                        dist.end());
      std::fill(out.begin(), out.end(), 0.0);
      for (size_t i = 0; i < kk; ++i) {
        out[static_cast<size_t>(examples_.label(dist[i].second))] += 1.0;
      }
      for (double& v : out) v /= static_cast<double>(kk);
      return;
    }
    case Algorithm::kMlpSgd: {
      MlpView net(parameters_, c, k, config_.hidden_width);
      std::vector<double> hidden(static_cast<size_t>(config_.hidden_width));
      net.Forward(x, hidden, out);
      SoftmaxInPlace(out);
      return;
    }
  }
}

absl::StatusOr<std::vector<double>> DefenderModel::PredictProba(
    std::span<const double> features) const {
  if (absl::Status s = CheckFeatures(*this, features); !s.ok()) return s;
  std::vector<double> out(static_cast<size_t>(num_classes_));
  PredictProbaInto(features, out);
  return out;
}

int DefenderModel::Predict(std::span<const double> features) const {
  std::vector<double> p(static_cast<size_t>(num_classes_));
  PredictProbaInto(features, p);
  return ArgMax(p);
}

bool operator==(const DefenderModel& a, const DefenderModel& b) {
  return TrainerConfigToKeyValues(a.config_) ==
             TrainerConfigToKeyValues(b.config_) &&
         a.num_classes_ == b.num_classes_ && a.dim_ == b.dim_ &&
         a.training_seed_ == b.training_seed_ &&
         a.parameters_ == b.parameters_ && a.examples_ == b.examples_;
}

std::string DefenderModel::Serialize() const {
  std::string out = absl::StrCat(kBlobMagic, " ", kBlobVersion, "\n");
  absl::StrAppend(&out, "num_classes ", num_classes_, "\n");
  absl::StrAppend(&out, "dim ", dim_, "\n");
  absl::StrAppend(&out, "training_seed ", training_seed_, "\n");
  for (const auto& [key, value] : TrainerConfigToKeyValues(config_)) {
    absl::StrAppend(&out, "config ", key, " ", value, "\n");
  }
  absl::StrAppend(&out, "parameters ", parameters_.size(), "\n");
  for (double v : parameters_) absl::StrAppend(&out, HexDouble(v), "\n");
  absl::StrAppend(&out, "examples ", examples_.size(), "\n");
  for (size_t i = 0; i < examples_.size(); ++i) {
    absl::StrAppend(&out, examples_.label(i));
    for (double v : examples_.features(i)) {
      absl::StrAppend(&out, " ", HexDouble(v));
    }
    absl::StrAppend(&out, "\n");
  }
  return out;
}

absl::StatusOr<DefenderModel> DefenderModel::Deserialize(
    absl::string_view blob) {
  std::vector<absl::string_view> lines =
      absl::StrSplit(blob, '\n', absl::SkipEmpty());
  size_t at = 0;
  auto fail = [&](absl::string_view what) {
    return absl::InvalidArgumentError(
        absl::StrCat("model blob line ", at + 1, ": ", what));
  };
  auto next = [&]() -> absl::StatusOr<std::vector<absl::string_view>> {
    if (at >= lines.size()) return fail("unexpected end of blob");
    return std::vector<absl::string_view>(
        absl::StrSplit(lines[at++], ' ', absl::AllowEmpty()));
  };
  auto expect_count = [&](absl::string_view key) -> absl::StatusOr<uint64_t> {
    absl::StatusOr<std::vector<absl::string_view>> f = next();
    if (!f.ok()) return f.status();
    uint64_t v = 0;
    if (f->size() != 2 || (*f)[0] != key || !absl::SimpleAtoi((*f)[1], &v)) {
      --at;
      return fail(absl::StrCat("expected '", key, " <n>'"));
    }
    return v;
  };

  {
    absl::StatusOr<std::vector<absl::string_view>> f = next();
    if (!f.ok()) return f.status();
    int version = 0;
    if (f->size() != 2 || (*f)[0] != kBlobMagic ||
        !absl::SimpleAtoi((*f)[1], &version)) {
      return fail("not a model blob");
    }
    if (version != kBlobVersion) {
      return absl::UnimplementedError(
          absl::StrCat("unsupported model blob version ", version));
    }
  }
  absl::StatusOr<uint64_t> num_classes = expect_count("num_classes");
  if (!num_classes.ok()) return num_classes.status();
  absl::StatusOr<uint64_t> dim = expect_count("dim");
  if (!dim.ok()) return dim.status();
  absl::StatusOr<uint64_t> seed = expect_count("training_seed");
  if (!seed.ok()) return seed.status();

  TrainerConfig config;
  while (at < lines.size() && absl::StartsWith(lines[at], "config ")) {
    absl::string_view rest = lines[at].substr(7);
    const size_t space = rest.find(' ');
    if (space == absl::string_view::npos) return fail("malformed config line");
    absl::Status s = SetTrainerConfigValue(config, rest.substr(0, space),
                                           rest.substr(space + 1));
    if (!s.ok()) return fail(s.message());
    ++at;
  }

  absl::StatusOr<uint64_t> count = expect_count("parameters");
  if (!count.ok()) return count.status();
  std::vector<double> params;
  params.reserve(*count);
  for (uint64_t i = 0; i < *count; ++i) {
    if (at >= lines.size()) return fail("truncated parameters");
    absl::StatusOr<double> v = ParseHexDouble(lines[at++]);
    if (!v.ok()) return fail(v.status().message());
    params.push_back(*v);
  }
  absl::StatusOr<uint64_t> num_examples = expect_count("examples");
  if (!num_examples.ok()) return num_examples.status();
  std::vector<double> features;
  std::vector<int> labels;
  for (uint64_t i = 0; i < *num_examples; ++i) {
    absl::StatusOr<std::vector<absl::string_view>> f = next();
    if (!f.ok()) return f.status();
    if (f->size() != *dim + 1) return fail("example has wrong arity");
    int label = 0;
    if (!absl::SimpleAtoi((*f)[0], &label)) return fail("bad example label");
    labels.push_back(label);
    for (size_t t = 1; t < f->size(); ++t) {
      absl::StatusOr<double> v = ParseHexDouble((*f)[t]);
      if (!v.ok()) return fail(v.status().message());
      features.push_back(*v);
    }
  }

  const int c = static_cast<int>(*num_classes);
  const int k = static_cast<int>(*dim);
  if (config.algorithm == Algorithm::kKnn) {
    absl::StatusOr<LabeledDataset> examples = LabeledDataset::Create(
        c, k, std::move(features), std::move(labels));
    if (!examples.ok()) return examples.status();
    return ModelBuilder::Make(config, c, k, *seed, {}, *std::move(examples));
  }
  absl::StatusOr<DefenderModel> model =
      FromParameters(config, c, k, std::move(params));
  if (!model.ok()) return model.status();
  return ModelBuilder::Make(config, c, k, *seed, model->parameters_);
}

absl::StatusOr<std::vector<double>> PredictProba(
    const DefenderModel& model, std::span<const double> features) {
  return model.PredictProba(features);
}

double LossUnchecked(const DefenderModel& model,
                     std::span<const double> features, int label,
                     LossKind kind) {
  std::vector<double> p(static_cast<size_t>(model.num_classes()));
  model.PredictProbaInto(features, p);
  if (kind == LossKind::kZeroOne) return ArgMax(p) == label ? 0.0 : 1.0;
  return std::clamp(1.0 - p[static_cast<size_t>(label)], 0.0, 1.0);
}

absl::StatusOr<double> Loss(const DefenderModel& model, const Sample& sample,
                            LossKind kind) {
  if (absl::Status s = CheckSample(model, sample); !s.ok()) return s;
  return LossUnchecked(model, sample.features, sample.label, kind);
}

absl::StatusOr<double> ParamDistance(const DefenderModel& a,
                                     const DefenderModel& b) {
  if (a.algorithm() != b.algorithm() || a.num_classes() != b.num_classes() ||
      a.dim() != b.dim()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "shape mismatch: ", AlgorithmName(a.algorithm()), "(", a.num_classes(),
        "x", a.dim(), ") vs ", AlgorithmName(b.algorithm()), "(",
        b.num_classes(), "x", b.dim(), ")"));
  }
  if (a.algorithm() == Algorithm::kKnn) {
    const LabeledDataset& ea = a.stored_examples();
    const LabeledDataset& eb = b.stored_examples();
    if (ea.size() != eb.size()) {
      return absl::InvalidArgumentError(
          absl::StrCat("shape mismatch: knn models store ", ea.size(),
                       " and ", eb.size(), " examples"));
    }
    double s = 0.0;
    for (size_t i = 0; i < ea.flat_features().size(); ++i) {
      const double d = ea.flat_features()[i] - eb.flat_features()[i];
      s += d * d;
    }
    for (size_t i = 0; i < ea.size(); ++i) {
      const double d = ea.label(i) - eb.label(i);
      s += d * d;
    }
    return std::sqrt(s);
  }
  if (a.parameters().size() != b.parameters().size()) {
    return absl::InvalidArgumentError(
        absl::StrCat("shape mismatch: ", a.parameters().size(), " vs ",
                     b.parameters().size(), " parameters"));
  }
  double s = 0.0;
  for (size_t i = 0; i < a.parameters().size(); ++i) {
    const double d = a.parameters()[i] - b.parameters()[i];
    s += d * d;
  }
  return std::sqrt(s);
}

absl::StatusOr<std::vector<double>> Gradient(const DefenderModel& model,
                                             const Sample& sample,
                                             GradientLoss kind) {
  if (!model.capabilities().differentiable) {
    return absl::FailedPreconditionError(
        absl::StrCat(AlgorithmName(model.algorithm()),
                     " models do not expose gradients"));
  }
  if (absl::Status s = CheckSample(model, sample); !s.ok()) return s;
  const int c = model.num_classes();
  const int k = model.dim();
  const auto& params = model.parameters();
  std::vector<double> grad(params.size(), 0.0);
  std::vector<double> z(static_cast<size_t>(c));
  std::vector<double> dz(static_cast<size_t>(c));
  if (model.algorithm() == Algorithm::kMlpSgd) {
    const int h = model.config().hidden_width;
    MlpView net(params, c, k, h);
    std::vector<double> hidden(static_cast<size_t>(h));
    std::vector<double> scratch(static_cast<size_t>(h));
    net.Forward(sample.features, hidden, z);
    SoftmaxInPlace(z);
    ScoreGradient(z, sample.label, kind, dz);
    AccumulateMlpGradient(net, dz, sample.features, hidden, 1.0, grad,
                          scratch);
  } else {
    const bool bias = model.config().fit_intercept;
    LinearScores(params, c, k, bias, sample.features, z);
    SoftmaxInPlace(z);
    ScoreGradient(z, sample.label, kind, dz);
    AccumulateLinearGradient(dz, c, k, bias, sample.features, 1.0, grad);
  }
  return grad;
}

absl::StatusOr<std::vector<double>> Gradient(const DefenderModel& model,
                                             const Sample& sample,
                                             LossKind kind) {
  if (kind == LossKind::kZeroOne) {
    return absl::FailedPreconditionError(
        "the zero-one loss has no useful gradient");
  }
  return Gradient(model, sample, GradientLoss::kBoundedTrueClass);
}

absl::StatusOr<double> TrainingLoss(const DefenderModel& model,
                                    const Sample& sample) {
  if (absl::Status s = CheckSample(model, sample); !s.ok()) return s;
  std::vector<double> p(static_cast<size_t>(model.num_classes()));
  model.PredictProbaInto(sample.features, p);
  return -std::log(std::max(p[static_cast<size_t>(sample.label)],
                            std::numeric_limits<double>::min()));
}

}  // namespace ltu
