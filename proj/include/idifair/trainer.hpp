/*
 * Copyright 2026 The idi-fair Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Two-layer multi-label head, class-balanced soft-target cross-entropy, the
// ERM / RW / DS / GDRO / GADRO objectives, Adam and dev-loss model selection.

#ifndef IDIFAIR_TRAINER_HPP_
#define IDIFAIR_TRAINER_HPP_

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "idifair/error.hpp"

namespace idifair {

/// Logits are clamped to [-kLogitClamp, kLogitClamp] before the softmax.
inline constexpr double kLogitClamp = 30.0;

/// Weights and biases of x -> softmax(W2 relu(W1 x + b1) + b2).
template <typename Scalar>
struct ClassifierParams {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Matrix w1;  // h x d
  Vector b1;  // h
  Matrix w2;  // |Y| x h
  Vector b2;  // |Y|

  static ClassifierParams zeros(Eigen::Index d, Eigen::Index h,
                                Eigen::Index y) {
    return {Matrix::Zero(h, d), Vector::Zero(h), Matrix::Zero(y, h),
            Vector::Zero(y)};
  }

  Eigen::Index input_dim() const { return w1.cols(); }
  Eigen::Index hidden_dim() const { return w1.rows(); }
  Eigen::Index num_classes() const { return w2.rows(); }

  bool all_finite() const {
    return w1.allFinite() && b1.allFinite() && w2.allFinite() &&
           b2.allFinite();
  }

  /// Applies fn(block_of_this, block_of_other...) to the four blocks.
  template <typename Fn, typename... Others>
  void for_each_block(Fn&& fn, Others&... others) {
    fn(w1, others.w1...);
    fn(b1, others.b1...);
    fn(w2, others.w2...);
    fn(b2, others.b2...);
  }

  bool operator==(const ClassifierParams&) const = default;
};

using Classifier = ClassifierParams<double>;

/// Row-aligned training/evaluation samples.
template <typename Scalar>
struct Batch {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> x;        // n x d
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> targets;  // n x |Y|
  std::vector<int> classes;  // majority-vote class per row
  std::vector<int> groups;   // group id per row

  Eigen::Index size() const { return x.rows(); }

  Batch subset(std::span<const std::size_t> rows) const {
    Batch out;
    out.x.resize(static_cast<Eigen::Index>(rows.size()), x.cols());
    out.targets.resize(static_cast<Eigen::Index>(rows.size()), targets.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(rows[i]);
      out.x.row(static_cast<Eigen::Index>(i)) = x.row(r);
      out.targets.row(static_cast<Eigen::Index>(i)) = targets.row(r);
      if (!classes.empty()) out.classes.push_back(classes[rows[i]]);
      if (!groups.empty()) out.groups.push_back(groups[rows[i]]);
    }
    return out;
  }
};

using SampleSet = Batch<double>;

struct LossResult {
  double value = 0.0;
  Classifier gradient;
  /// Group driving the gradient (GDRO/GADRO), -1 otherwise.
  int selected_group = -1;
};

namespace detail {

template <typename Scalar>
struct ForwardCache {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Matrix pre;      // n x h
  Matrix hidden;   // n x h
  Matrix logits;   // n x |Y|, clamped
  Matrix clamped;  // 1 where the clamp was active
  Matrix probs;    // n x |Y|
};

template <typename Scalar, typename Derived>
ForwardCache<Scalar> forward_cached(const ClassifierParams<Scalar>& p,
                                    const Eigen::MatrixBase<Derived>& x) {
  if (x.cols() != p.input_dim()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "input dim " + std::to_string(x.cols()) + " vs " +
                    std::to_string(p.input_dim()));
  }
  ForwardCache<Scalar> c;
  c.pre = (x * p.w1.transpose()).rowwise() + p.b1.transpose();
  c.hidden = c.pre.cwiseMax(Scalar(0));
  c.logits = (c.hidden * p.w2.transpose()).rowwise() + p.b2.transpose();
  const Scalar lim(kLogitClamp);
  c.clamped = (c.logits.array().abs() > lim).template cast<Scalar>();
  c.logits = c.logits.cwiseMax(-lim).cwiseMin(lim);
  c.probs = (c.logits.colwise() - c.logits.rowwise().maxCoeff())
                .array()
                .exp()
                .matrix();
  c.probs = c.probs.array().colwise() / c.probs.rowwise().sum().array();
  return c;
}

}  // namespace detail

/// Class probabilities for a single input.
template <typename Scalar, typename Derived>
typename ClassifierParams<Scalar>::Vector forward(
    const ClassifierParams<Scalar>& params,
    const Eigen::MatrixBase<Derived>& x) {
  return detail::forward_cached(params, x.transpose()).probs.row(0).transpose();
}

/// Class probabilities for every row of `x`.
template <typename Scalar, typename Derived>
typename ClassifierParams<Scalar>::Matrix predict_proba(
    const ClassifierParams<Scalar>& params,
    const Eigen::MatrixBase<Derived>& x) {
  return detail::forward_cached(params, x).probs;
}

/// Per-row losses -sum_c w_c t_c log p_c, and optionally the gradient of
/// sum_i coefficient_i * loss_i.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> weighted_losses(
    const ClassifierParams<Scalar>& p, const Batch<Scalar>& batch,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& class_weights,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>* coefficients,
    ClassifierParams<Scalar>* gradient) {
  using Matrix = typename ClassifierParams<Scalar>::Matrix;
  const auto c = detail::forward_cached(p, batch.x);
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const Vector row_max = c.logits.rowwise().maxCoeff();
  const Matrix shifted = c.logits.colwise() - row_max;
  const Vector log_norm = shifted.array().exp().rowwise().sum().log().matrix();
  const Matrix log_probs = shifted.colwise() - log_norm;
  // weighted targets: w_c * t_ic
  const Matrix wt = batch.targets.array().rowwise() *
                    class_weights.transpose().array();
  Vector losses =
      -(wt.array() * log_probs.array()).rowwise().sum().matrix();

  if (gradient != nullptr && coefficients != nullptr) {
    // dL_i/dz_ij = p_ij * sum_c(w_c t_ic) - w_j t_ij
    Matrix dz = (c.probs.array().colwise() * wt.rowwise().sum().array()).matrix() - wt;
    dz = dz.cwiseProduct((Matrix::Ones(dz.rows(), dz.cols()) - c.clamped));
    dz = dz.array().colwise() * coefficients->array();
    gradient->w2 = dz.transpose() * c.hidden;
    gradient->b2 = dz.colwise().sum().transpose();
    const Matrix dh =
        (dz * p.w2).cwiseProduct((c.pre.array() > Scalar(0)).template cast<Scalar>().matrix());
    gradient->w1 = dh.transpose() * batch.x;
    gradient->b1 = dh.colwise().sum().transpose();
  }
  return losses;
}

/// Class-balanced weights (1 - beta) / (1 - beta^n_c), rescaled to mean 1.
Eigen::VectorXd cb_weights(std::span<const int> class_counts, double beta);

/// Loss of one sample; fills `gradient` when non-null.
double sample_loss(const Classifier& params, const Eigen::VectorXd& x,
                   const Eigen::VectorXd& target,
                   const Eigen::VectorXd& class_weights,
                   Classifier* gradient = nullptr);

/// Counts over majority-vote classes and groups.
struct GroupStats {
  Eigen::VectorXi n_c;   // |Y|
  Eigen::MatrixXi n_cg;  // |Y| x G
  Eigen::VectorXi n_g;   // G

  static GroupStats compute(std::span<const int> classes,
                            std::span<const int> groups, int num_classes,
                            int num_groups);
};

/// Per-sample reweighting factor n_c / n_{c,g}.
double reweight_factor(const GroupStats& stats, int cls, int group);

LossResult batch_loss_erm(const Classifier& params, const SampleSet& batch,
                          const Eigen::VectorXd& class_weights);

/// Mean of factor_i * loss_i with factor n_c / n_{c,g}.
LossResult batch_loss_rw(const Classifier& params, const SampleSet& batch,
                         const GroupStats& stats,
                         const Eigen::VectorXd& class_weights);

/// Largest per-group mean loss among groups present in the batch.
LossResult batch_loss_gdro(const Classifier& params, const SampleSet& batch,
                           const Eigen::VectorXd& class_weights);

/// Largest (group mean loss + lambda / sqrt(n_g)) over present groups.
LossResult batch_loss_gadro(const Classifier& params, const SampleSet& batch,
                            const GroupStats& stats, double lambda_gd,
                            const Eigen::VectorXd& class_weights);

struct DownsampleResult {
  std::vector<std::size_t> retained;  // sorted row indices
  std::vector<int> dropped_classes;   // classes where some group was empty
};

/// Per class keeps min_g n_{c,g} seeded-random samples from every group.
DownsampleResult downsample(std::span<const int> classes,
                            std::span<const int> groups, int num_groups,
                            std::uint64_t seed);

/// Same rule keyed by utterance ids; returns the retained ids, sorted.
std::vector<std::string> downsample(std::span<const std::string> train_ids,
                                    std::span<const int> classes,
                                    std::span<const int> groups,
                                    int num_groups, std::uint64_t seed,
                                    std::vector<int>* dropped_classes = nullptr);

enum class Method { kErm, kRw, kDs, kGdro, kGadro };

std::string_view to_token(Method m);
Method parse_method(std::string_view token);

struct TrainConfig {
  Method method = Method::kErm;
  double learning_rate = 1e-4;
  int batch_size = 32;
  int epochs = 50;
  double lambda_gd = 4.0;
  double cb_beta = 0.9999;
  int hidden_dim = 256;
  std::uint64_t seed = 42;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
};

class Adam {
 public:
  Adam(const Classifier& shape, double learning_rate, double beta1,
       double beta2, double eps);

  void step(Classifier& params, const Classifier& gradient);

 private:
  Classifier m_;
  Classifier v_;
  double lr_, beta1_, beta2_, eps_;
  int t_ = 0;
};

/// Seeded uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
Classifier init_classifier(Eigen::Index d, Eigen::Index h, Eigen::Index y,
                           std::uint64_t seed);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_loss = 0.0;
};

struct TrainOutcome {
  Classifier best_params;
  int best_epoch = 0;  // index into the histories
  std::vector<double> dev_loss_history;
  /// Base class-balanced loss over the (possibly downsampled) training set
  /// after each epoch.
  std::vector<double> train_loss_history;
  double initial_train_loss = 0.0;
  std::size_t train_size = 0;
  std::vector<std::string> warnings;

  std::vector<EpochRecord> log() const;
};

/// Trains under config.method. `train.groups` must be filled for every
/// method other than ERM; `num_groups` is G.
TrainOutcome train(const SampleSet& train_set, const SampleSet& dev_set,
                   int num_groups, const TrainConfig& config);

void write_checkpoint(const std::filesystem::path& path,
                      const Classifier& params);
Classifier read_checkpoint(const std::filesystem::path& path);

/// One JSON object per line: {"epoch":..,"train_loss":..,"dev_loss":..}.
void write_training_log(const std::filesystem::path& path,
                        const TrainOutcome& outcome);

}  // namespace idifair

#endif  // IDIFAIR_TRAINER_HPP_
