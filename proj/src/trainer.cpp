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

#include "idifair/trainer.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <numeric>

#include <json.hpp>

#include "binary_io.hpp"
#include "idifair/random.hpp"

namespace idifair {
namespace {

constexpr std::array<std::string_view, 5> kMethodNames = {"erm", "rw", "ds",
                                                          "gdro", "gadro"};

constexpr std::uint64_t kInitStream = 11;
constexpr std::uint64_t kShuffleStream = 12;
constexpr std::uint64_t kDownsampleStream = 13;

LossResult loss_with_coefficients(const Classifier& params,
                                  const SampleSet& batch,
                                  const Eigen::VectorXd& class_weights,
                                  const Eigen::VectorXd& coefficients) {
  LossResult out;
  const Eigen::VectorXd losses = weighted_losses(
      params, batch, class_weights, &coefficients, &out.gradient);
  out.value = coefficients.dot(losses);
  return out;
}

struct GroupMeans {
  std::map<int, double> mean;             // group -> mean loss
  std::map<int, std::vector<Eigen::Index>> rows;
};

GroupMeans group_means(const Eigen::VectorXd& losses, const SampleSet& batch) {
  GroupMeans out;
  for (Eigen::Index i = 0; i < losses.size(); ++i) {
    out.rows[batch.groups[static_cast<std::size_t>(i)]].push_back(i);
  }
  for (const auto& [g, rows] : out.rows) {
    double sum = 0.0;
    for (auto i : rows) sum += losses[i];
    out.mean[g] = sum / static_cast<double>(rows.size());
  }
  return out;
}

// Gradient of the mean loss over one group's rows.
LossResult select_group(const Classifier& params, const SampleSet& batch,
                        const Eigen::VectorXd& class_weights,
                        const GroupMeans& means, int group, double value) {
  Eigen::VectorXd coeff = Eigen::VectorXd::Zero(batch.size());
  const auto& rows = means.rows.at(group);
  for (auto i : rows) coeff[i] = 1.0 / static_cast<double>(rows.size());
  LossResult out = loss_with_coefficients(params, batch, class_weights, coeff);
  out.value = value;
  out.selected_group = group;
  return out;
}

void check_groups(const SampleSet& batch) {
  if (batch.size() == 0) {
    throw Error(ErrorCode::kEmptyTrainingSet, "empty batch");
  }
  if (batch.groups.size() != static_cast<std::size_t>(batch.size())) {
    throw Error(ErrorCode::kDimensionMismatch, "batch is missing group ids");
  }
}

double base_loss(const Classifier& params, const SampleSet& set,
                 const Eigen::VectorXd& class_weights) {
  return weighted_losses<double>(params, set, class_weights, nullptr, nullptr)
      .mean();
}

}  // namespace

std::string_view to_token(Method m) { return kMethodNames[static_cast<int>(m)]; }

Method parse_method(std::string_view token) {
  for (std::size_t i = 0; i < kMethodNames.size(); ++i) {
    if (kMethodNames[i] == token) return static_cast<Method>(i);
  }
  throw Error(ErrorCode::kInvalidConfig,
              "unknown method '" + std::string(token) + "'");
}

Eigen::VectorXd cb_weights(std::span<const int> class_counts, double beta) {
  if (!(beta >= 0.0 && beta < 1.0)) {
    throw Error(ErrorCode::kInvalidConfig, "cb_beta must lie in [0, 1)");
  }
  Eigen::VectorXd w(static_cast<Eigen::Index>(class_counts.size()));
  for (std::size_t c = 0; c < class_counts.size(); ++c) {
    if (class_counts[c] < 1) {
      throw Error(ErrorCode::kEmptyTrainingSet,
                  "class " + std::to_string(c) + " has no samples");
    }
    // -expm1(n log beta) keeps 1 - beta^n accurate for beta near 1.
    const double effective =
        beta == 0.0 ? 1.0
                    : -std::expm1(static_cast<double>(class_counts[c]) *
                                  std::log(beta));
    w[static_cast<Eigen::Index>(c)] = (1.0 - beta) / effective;
  }
  return w / w.mean();
}

double sample_loss(const Classifier& params, const Eigen::VectorXd& x,
                   const Eigen::VectorXd& target,
                   const Eigen::VectorXd& class_weights, Classifier* gradient) {
  SampleSet one;
  one.x = x.transpose();
  one.targets = target.transpose();
  const Eigen::VectorXd coeff = Eigen::VectorXd::Ones(1);
  return weighted_losses(params, one, class_weights,
                         gradient != nullptr ? &coeff : nullptr, gradient)[0];
}

GroupStats GroupStats::compute(std::span<const int> classes,
                               std::span<const int> groups, int num_classes,
                               int num_groups) {
  if (classes.size() != groups.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "classes vs groups length");
  }
  GroupStats s;
  s.n_cg = Eigen::MatrixXi::Zero(num_classes, num_groups);
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (groups[i] < 0 || groups[i] >= num_groups || classes[i] < 0 ||
        classes[i] >= num_classes) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "class/group id out of range at row " + std::to_string(i));
    }
    ++s.n_cg(classes[i], groups[i]);
  }
  s.n_c = s.n_cg.rowwise().sum();
  s.n_g = s.n_cg.colwise().sum().transpose();
  return s;
}

double reweight_factor(const GroupStats& stats, int cls, int group) {
  const int n_cg = stats.n_cg(cls, group);
  if (n_cg < 1) {
    throw Error(ErrorCode::kUnseenGroupCell,
                "class " + std::to_string(cls) + ", group " +
                    std::to_string(group) + " has no training samples");
  }
  return static_cast<double>(stats.n_c[cls]) / static_cast<double>(n_cg);
}

LossResult batch_loss_erm(const Classifier& params, const SampleSet& batch,
                          const Eigen::VectorXd& class_weights) {
  if (batch.size() == 0) throw Error(ErrorCode::kEmptyTrainingSet, "empty batch");
  const Eigen::VectorXd coeff = Eigen::VectorXd::Constant(
      batch.size(), 1.0 / static_cast<double>(batch.size()));
  return loss_with_coefficients(params, batch, class_weights, coeff);
}

LossResult batch_loss_rw(const Classifier& params, const SampleSet& batch,
                         const GroupStats& stats,
                         const Eigen::VectorXd& class_weights) {
  check_groups(batch);
  if (batch.classes.size() != batch.groups.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "batch is missing class ids");
  }
  Eigen::VectorXd coeff(batch.size());
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    const auto u = static_cast<std::size_t>(i);
    coeff[i] = reweight_factor(stats, batch.classes[u], batch.groups[u]) /
               static_cast<double>(batch.size());
  }
  return loss_with_coefficients(params, batch, class_weights, coeff);
}

LossResult batch_loss_gdro(const Classifier& params, const SampleSet& batch,
                           const Eigen::VectorXd& class_weights) {
  check_groups(batch);
  const Eigen::VectorXd losses =
      weighted_losses<double>(params, batch, class_weights, nullptr, nullptr);
  const GroupMeans means = group_means(losses, batch);
  int best = -1;
  double best_value = -std::numeric_limits<double>::infinity();
  for (const auto& [g, m] : means.mean) {  // ascending group id
    if (m > best_value) {
      best_value = m;
      best = g;
    }
  }
  return select_group(params, batch, class_weights, means, best, best_value);
}

LossResult batch_loss_gadro(const Classifier& params, const SampleSet& batch,
                            const GroupStats& stats, double lambda_gd,
                            const Eigen::VectorXd& class_weights) {
  check_groups(batch);
  const Eigen::VectorXd losses =
      weighted_losses<double>(params, batch, class_weights, nullptr, nullptr);
  const GroupMeans means = group_means(losses, batch);
  int best = -1;
  double best_value = -std::numeric_limits<double>::infinity();
  for (const auto& [g, m] : means.mean) {
    if (g >= stats.n_g.size() || stats.n_g[g] < 1) {
      throw Error(ErrorCode::kUnseenGroupCell,
                  "group " + std::to_string(g) + " has no training samples");
    }
    const double v =
        m + lambda_gd / std::sqrt(static_cast<double>(stats.n_g[g]));
    if (v > best_value) {
      best_value = v;
      best = g;
    }
  }
  return select_group(params, batch, class_weights, means, best, best_value);
}

DownsampleResult downsample(std::span<const int> classes,
                            std::span<const int> groups, int num_groups,
                            std::uint64_t seed) {
  if (classes.size() != groups.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "classes vs groups length");
  }
  // cells[class][group] = row indices, ascending
  std::map<int, std::vector<std::vector<std::size_t>>> cells;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (groups[i] < 0 || groups[i] >= num_groups) {
      throw Error(ErrorCode::kMissingDemographic,
                  "row " + std::to_string(i) + " has no group");
    }
    auto& cell = cells[classes[i]];
    if (cell.empty()) cell.resize(static_cast<std::size_t>(num_groups));
    cell[static_cast<std::size_t>(groups[i])].push_back(i);
  }
  DownsampleResult out;
  for (auto& [cls, per_group] : cells) {
    std::size_t m = std::numeric_limits<std::size_t>::max();
    for (const auto& rows : per_group) m = std::min(m, rows.size());
    if (m == 0) {
      out.dropped_classes.push_back(cls);
      continue;
    }
    for (std::size_t g = 0; g < per_group.size(); ++g) {
      auto rows = per_group[g];
      Rng rng(derive_seed(seed, {kDownsampleStream,
                                 static_cast<std::uint64_t>(cls),
                                 static_cast<std::uint64_t>(g)}));
      rng.shuffle(std::span<std::size_t>(rows));
      out.retained.insert(out.retained.end(), rows.begin(),
                          rows.begin() + static_cast<std::ptrdiff_t>(m));
    }
  }
  if (out.retained.empty()) {
    throw Error(ErrorCode::kEmptyTrainingSet,
                "downsampling removed every training sample");
  }
  std::sort(out.retained.begin(), out.retained.end());
  return out;
}

std::vector<std::string> downsample(std::span<const std::string> train_ids,
                                    std::span<const int> classes,
                                    std::span<const int> groups,
                                    int num_groups, std::uint64_t seed,
                                    std::vector<int>* dropped_classes) {
  if (train_ids.size() != classes.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "ids vs classes length");
  }
  const DownsampleResult r = downsample(classes, groups, num_groups, seed);
  std::vector<std::string> ids;
  ids.reserve(r.retained.size());
  for (auto i : r.retained) ids.push_back(train_ids[i]);
  std::sort(ids.begin(), ids.end());
  if (dropped_classes != nullptr) *dropped_classes = r.dropped_classes;
  return ids;
}

Adam::Adam(const Classifier& shape, double learning_rate, double beta1,
           double beta2, double eps)
    : m_(Classifier::zeros(shape.input_dim(), shape.hidden_dim(),
                           shape.num_classes())),
      v_(m_),
      lr_(learning_rate),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps) {}

void Adam::step(Classifier& params, const Classifier& gradient) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, t_);
  const double c2 = 1.0 - std::pow(beta2_, t_);
  Classifier grad = gradient;
  params.for_each_block(
      [&](auto& p, auto& g, auto& m, auto& v) {
        m = beta1_ * m + (1.0 - beta1_) * g;
        v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
        p.array() -= lr_ * (m.array() / c1) /
                     ((v.array() / c2).sqrt() + eps_);
      },
      grad, m_, v_);
}

Classifier init_classifier(Eigen::Index d, Eigen::Index h, Eigen::Index y,
                           std::uint64_t seed) {
  Rng rng(derive_seed(seed, {kInitStream}));
  Classifier p = Classifier::zeros(d, h, y);
  const double a1 = 1.0 / std::sqrt(static_cast<double>(d));
  const double a2 = 1.0 / std::sqrt(static_cast<double>(h));
  auto fill = [&rng](auto& block, double bound) {
    for (Eigen::Index j = 0; j < block.cols(); ++j) {
      for (Eigen::Index i = 0; i < block.rows(); ++i) {
        block(i, j) = rng.uniform(-bound, bound);
      }
    }
  };
  fill(p.w1, a1);
  fill(p.b1, a1);
  fill(p.w2, a2);
  fill(p.b2, a2);
  return p;
}

std::vector<EpochRecord> TrainOutcome::log() const {
  std::vector<EpochRecord> out;
  for (std::size_t e = 0; e < dev_loss_history.size(); ++e) {
    out.push_back({static_cast<int>(e), train_loss_history[e],
                   dev_loss_history[e]});
  }
  return out;
}

TrainOutcome train(const SampleSet& train_set, const SampleSet& dev_set,
                   int num_groups, const TrainConfig& config) {
  if (config.epochs < 1 || config.batch_size < 1 || config.hidden_dim < 1 ||
      !(config.learning_rate > 0.0) || config.lambda_gd < 0.0) {
    throw Error(ErrorCode::kInvalidConfig,
                "epochs, batch_size, hidden_dim and learning_rate must be "
                "positive and lambda_gd non-negative");
  }
  if (train_set.size() == 0) {
    throw Error(ErrorCode::kEmptyTrainingSet, "no training samples");
  }
  if (dev_set.size() == 0) {
    throw Error(ErrorCode::kInvalidConfig, "dev set is empty");
  }
  if (dev_set.x.cols() != train_set.x.cols() ||
      dev_set.targets.cols() != train_set.targets.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "train/dev shapes differ");
  }
  const auto num_classes = static_cast<int>(train_set.targets.cols());
  const bool needs_groups = config.method != Method::kErm;

  TrainOutcome outcome;
  SampleSet data = train_set;
  if (config.method == Method::kDs) {
    const DownsampleResult ds = downsample(train_set.classes, train_set.groups,
                                           num_groups, config.seed);
    for (int c : ds.dropped_classes) {
      outcome.warnings.push_back("downsampling dropped class " +
                                 std::to_string(c) +
                                 ": some group has no samples");
    }
    data = train_set.subset(ds.retained);
  }
  outcome.train_size = static_cast<std::size_t>(data.size());

  GroupStats stats;
  if (needs_groups) {
    stats = GroupStats::compute(data.classes, data.groups, num_classes,
                                num_groups);
  }

  // Classes absent from the training set are weighted as if seen once.
  std::vector<int> class_counts(static_cast<std::size_t>(num_classes), 0);
  for (int c : data.classes) ++class_counts[static_cast<std::size_t>(c)];
  for (auto& n : class_counts) n = std::max(n, 1);
  const Eigen::VectorXd class_weights = cb_weights(class_counts, config.cb_beta);

  Classifier params = init_classifier(data.x.cols(), config.hidden_dim,
                                      num_classes, config.seed);
  Adam adam(params, config.learning_rate, config.adam_beta1, config.adam_beta2,
            config.adam_eps);
  outcome.initial_train_loss = base_loss(params, data, class_weights);

  const auto n = static_cast<std::size_t>(data.size());
  std::vector<std::size_t> order(n);
  double best_dev = std::numeric_limits<double>::infinity();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(config.seed,
                        {kShuffleStream, static_cast<std::uint64_t>(epoch)}));
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < n;
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop =
          std::min(n, start + static_cast<std::size_t>(config.batch_size));
      const SampleSet batch = data.subset(
          std::span<const std::size_t>(order).subspan(start, stop - start));
      LossResult r;
      switch (config.method) {
        case Method::kErm:
        case Method::kDs:
          r = batch_loss_erm(params, batch, class_weights);
          break;
        case Method::kRw:
          r = batch_loss_rw(params, batch, stats, class_weights);
          break;
        case Method::kGdro:
          r = batch_loss_gdro(params, batch, class_weights);
          break;
        case Method::kGadro:
          r = batch_loss_gadro(params, batch, stats, config.lambda_gd,
                               class_weights);
          break;
      }
      if (!std::isfinite(r.value) || !r.gradient.all_finite()) {
        throw Error(ErrorCode::kNonFiniteLoss,
                    "epoch " + std::to_string(epoch) + ", batch at row " +
                        std::to_string(start) + ": loss " +
                        std::to_string(r.value));
      }
      adam.step(params, r.gradient);
    }
    const double train_loss = base_loss(params, data, class_weights);
    const double dev_loss = base_loss(params, dev_set, class_weights);
    if (!std::isfinite(train_loss) || !std::isfinite(dev_loss)) {
      throw Error(ErrorCode::kNonFiniteLoss,
                  "epoch " + std::to_string(epoch) + " produced non-finite loss");
    }
    outcome.train_loss_history.push_back(train_loss);
    outcome.dev_loss_history.push_back(dev_loss);
    if (dev_loss < best_dev) {
      best_dev = dev_loss;
      outcome.best_epoch = epoch;
      outcome.best_params = params;
    }
  }
  return outcome;
}

void write_checkpoint(const std::filesystem::path& path,
                      const Classifier& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write("MLP1", 4);
  binary_io::write_u32(out, static_cast<std::uint32_t>(params.input_dim()));
  binary_io::write_u32(out, static_cast<std::uint32_t>(params.hidden_dim()));
  binary_io::write_u32(out, static_cast<std::uint32_t>(params.num_classes()));
  // Row-major within each block.
  auto put = [&out](const auto& block) {
    for (Eigen::Index i = 0; i < block.rows(); ++i) {
      for (Eigen::Index j = 0; j < block.cols(); ++j) {
        binary_io::write_f64(out, block(i, j));
      }
    }
  };
  put(params.w1);
  put(params.b1);
  put(params.w2);
  put(params.b2);
}

Classifier read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  const std::string what = path.string();
  binary_io::expect_magic(in, "MLP1", what);
  const std::uint32_t d = binary_io::read_u32(in, what);
  const std::uint32_t h = binary_io::read_u32(in, what);
  const std::uint32_t y = binary_io::read_u32(in, what);
  Classifier p = Classifier::zeros(d, h, y);
  auto get = [&](auto& block) {
    for (Eigen::Index i = 0; i < block.rows(); ++i) {
      for (Eigen::Index j = 0; j < block.cols(); ++j) {
        block(i, j) = binary_io::read_f64(in, what);
      }
    }
  };
  get(p.w1);
  get(p.b1);
  get(p.w2);
  get(p.b2);
  if (!p.all_finite()) throw Error(ErrorCode::kNonFinite, what);
  return p;
}

void write_training_log(const std::filesystem::path& path,
                        const TrainOutcome& outcome) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  for (const auto& rec : outcome.log()) {
    nlohmann::ordered_json line = {{"epoch", rec.epoch},
                                   {"train_loss", rec.train_loss},
                                   {"dev_loss", rec.dev_loss}};
    out << line.dump() << '\n';
  }
}

}  // namespace idifair
