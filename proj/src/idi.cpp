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

#include "idifair/idi.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>

#include "binary_io.hpp"
#include "idifair/error.hpp"
#include "idifair/random.hpp"

namespace idifair {
namespace {

constexpr std::array<std::string_view, 5> kSourceNames = {
    "ground_truth_gender", "ground_truth_race", "ground_truth_age",
    "pseudo_gender", "cluster"};

// Stream tags for the counter-based generator.
constexpr std::uint64_t kSeedingStream = 1;
constexpr std::uint64_t kBatchStream = 2;
constexpr std::uint64_t kReassignStream = 3;

Attribute source_attribute(GroupSource s) {
  switch (s) {
    case GroupSource::kGroundTruthGender: return Attribute::kGender;
    case GroupSource::kGroundTruthRace: return Attribute::kRace;
    case GroupSource::kGroundTruthAge: return Attribute::kAge;
    case GroupSource::kPseudoGender: return Attribute::kPseudoGender;
    case GroupSource::kCluster: break;
  }
  throw Error(ErrorCode::kInvalidConfig, "cluster source has no attribute");
}

// Index of the first cumulative entry >= value (numpy searchsorted, left).
std::size_t search_cumulative(const std::vector<double>& cumulative,
                              double value) {
  const auto it =
      std::lower_bound(cumulative.begin(), cumulative.end(), value);
  const auto idx = static_cast<std::size_t>(it - cumulative.begin());
  return std::min(idx, cumulative.size() - 1);
}

std::vector<int> label_all(const Eigen::MatrixXd& centroids,
                           const Eigen::MatrixXd& data,
                           double* total_inertia) {
  std::vector<int> labels(static_cast<std::size_t>(data.rows()));
  double sum = 0.0;
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    double dist = 0.0;
    labels[static_cast<std::size_t>(i)] =
        nearest_centroid(centroids, data.row(i), &dist);
    sum += dist;
  }
  if (total_inertia != nullptr) *total_inertia = sum;
  return labels;
}

}  // namespace

std::string_view to_token(GroupSource s) {
  return kSourceNames[static_cast<int>(s)];
}

GroupSource parse_group_source(std::string_view token) {
  for (std::size_t i = 0; i < kSourceNames.size(); ++i) {
    if (kSourceNames[i] == token) return static_cast<GroupSource>(i);
  }
  throw Error(ErrorCode::kInvalidConfig,
              "unknown group source '" + std::string(token) + "'");
}

int group_count(GroupSource source, int k) {
  if (source == GroupSource::kCluster) return k;
  return attribute_cardinality(source_attribute(source));
}

Eigen::MatrixXd kmeanspp_greedy(const Eigen::MatrixXd& data, int k,
                                std::uint64_t seed) {
  const Eigen::Index n = data.rows();
  Rng rng(derive_seed(seed, {kSeedingStream}));
  const int local_trials =
      2 + static_cast<int>(std::floor(std::log(static_cast<double>(k))));

  Eigen::MatrixXd centers(k, data.cols());
  const auto first = static_cast<Eigen::Index>(
      rng.uniform_index(static_cast<std::uint64_t>(n)));
  centers.row(0) = data.row(first);

  std::vector<double> closest(static_cast<std::size_t>(n));
  double potential = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    closest[static_cast<std::size_t>(i)] =
        (data.row(i) - centers.row(0)).squaredNorm();
    potential += closest[static_cast<std::size_t>(i)];
  }

  std::vector<double> cumulative(static_cast<std::size_t>(n));
  std::vector<double> trial(static_cast<std::size_t>(n));
  std::vector<double> best_closest(static_cast<std::size_t>(n));
  for (int c = 1; c < k; ++c) {
    double running = 0.0;
    for (std::size_t i = 0; i < closest.size(); ++i) {
      running += closest[i];
      cumulative[i] = running;
    }
    double best_potential = std::numeric_limits<double>::infinity();
    Eigen::Index best_candidate = 0;
    for (int t = 0; t < local_trials; ++t) {
      const auto candidate = static_cast<Eigen::Index>(
          search_cumulative(cumulative, rng.uniform() * potential));
      double pot = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        trial[ui] = std::min(closest[ui],
                             (data.row(i) - data.row(candidate)).squaredNorm());
        pot += trial[ui];
      }
      if (pot < best_potential) {
        best_potential = pot;
        best_candidate = candidate;
        best_closest.swap(trial);
      }
    }
    centers.row(c) = data.row(best_candidate);
    potential = best_potential;
    closest = best_closest;
  }
  return centers;
}

double inertia(const Eigen::MatrixXd& centroids, const Eigen::MatrixXd& data) {
  double total = 0.0;
  label_all(centroids, data, &total);
  return total;
}

KMeansModel kmeans_fit(const Eigen::MatrixXd& data,
                       const KMeansConfig& config) {
  const Eigen::Index n = data.rows();
  const int k = config.k;
  if (k < 1) throw Error(ErrorCode::kInvalidConfig, "k must be >= 1");
  if (n < k) {
    throw Error(ErrorCode::kInvalidConfig,
                "need at least k=" + std::to_string(k) + " rows, got " +
                    std::to_string(n));
  }
  if (config.mini_batch_size < 1 || config.max_iter < 1) {
    throw Error(ErrorCode::kInvalidConfig,
                "mini_batch_size and max_iter must be positive");
  }
  if (!data.allFinite()) {
    throw Error(ErrorCode::kNonFinite, "embeddings contain non-finite values");
  }

  Eigen::MatrixXd centers = kmeanspp_greedy(data, k, config.seed);

  // Convergence threshold scaled by the mean per-feature variance.
  const Eigen::RowVectorXd mean = data.colwise().mean();
  const double mean_variance =
      (data.rowwise() - mean).array().square().colwise().sum().mean() /
      static_cast<double>(n);
  const double tol = config.tolerance * mean_variance;

  const std::size_t batch = static_cast<std::size_t>(config.mini_batch_size);
  const auto total = static_cast<std::uint64_t>(config.max_iter) *
                     static_cast<std::uint64_t>(n);
  const std::uint64_t steps = std::max<std::uint64_t>(1, (total + batch - 1) / batch);
  const double alpha =
      std::min(1.0, 2.0 * static_cast<double>(batch) / static_cast<double>(n + 1));

  Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
  std::vector<Eigen::Index> idx(batch);
  std::vector<int> batch_labels(batch);
  double ewa_diff = -1.0;
  int steps_run = 0;
  for (std::uint64_t step = 0; step < steps; ++step) {
    ++steps_run;
    Rng rng(derive_seed(config.seed, {kBatchStream, step}));
    for (auto& i : idx) {
      i = static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(n)));
    }
    for (std::size_t b = 0; b < batch; ++b) {
      batch_labels[b] = nearest_centroid(centers, data.row(idx[b]));
    }

    const Eigen::MatrixXd previous = centers;
    for (std::size_t b = 0; b < batch; ++b) {
      const int c = batch_labels[b];
      counts[c] += 1.0;
      centers.row(c) += (data.row(idx[b]) - centers.row(c)) / counts[c];
    }

    // Move starved centroids onto batch points far from the current centers.
    if (config.reassignment_ratio > 0.0 && k > 1 &&
        (step + 1) % static_cast<std::uint64_t>(10 + counts.minCoeff()) == 0) {
      const double cutoff = config.reassignment_ratio * counts.maxCoeff();
      std::vector<int> starved;
      for (int c = 0; c < k; ++c) {
        if (counts[c] < cutoff) starved.push_back(c);
      }
      const std::size_t limit = std::max<std::size_t>(1, batch / 2);
      if (starved.size() > limit) starved.resize(limit);
      if (!starved.empty()) {
        std::vector<double> cumulative(batch);
        double running = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
          double dist = 0.0;
          nearest_centroid(centers, data.row(idx[b]), &dist);
          running += dist;
          cumulative[b] = running;
        }
        if (running > 0.0) {
          Rng pick(derive_seed(config.seed, {kReassignStream, step}));
          double floor_count = std::numeric_limits<double>::infinity();
          for (int c = 0; c < k; ++c) {
            if (std::find(starved.begin(), starved.end(), c) == starved.end()) {
              floor_count = std::min(floor_count, counts[c]);
            }
          }
          if (!std::isfinite(floor_count)) floor_count = 0.0;
          for (int c : starved) {
            const std::size_t b =
                search_cumulative(cumulative, pick.uniform() * running);
            centers.row(c) = data.row(idx[b]);
            counts[c] = floor_count;
          }
        }
      }
    }

    const double diff =
        (centers - previous).squaredNorm() / static_cast<double>(batch);
    if (step == 0) {
      ewa_diff = diff;
      continue;
    }
    ewa_diff = ewa_diff * (1.0 - alpha) + diff * alpha;
    if (tol > 0.0 && ewa_diff <= tol) break;
  }

  // Full-batch Lloyd refinement.
  std::vector<int> labels = label_all(centers, data, nullptr);
  for (int it = 0; it < config.max_iter; ++it) {
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, data.cols());
    Eigen::VectorXd members = Eigen::VectorXd::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int c = labels[static_cast<std::size_t>(i)];
      sums.row(c) += data.row(i);
      members[c] += 1.0;
    }
    for (int c = 0; c < k; ++c) {
      if (members[c] > 0.0) centers.row(c) = sums.row(c) / members[c];
    }
    std::vector<int> next = label_all(centers, data, nullptr);
    const bool stable = next == labels;
    labels = std::move(next);
    if (stable) break;
  }

  KMeansModel model;
  model.centroids = centers;
  model.labels = label_all(centers, data, &model.inertia);
  model.iterations_run = steps_run;
  return model;
}

KMeansModel kmeans_fit(const EmbeddingSet& embeddings,
                       const KMeansConfig& config) {
  return kmeans_fit(Eigen::MatrixXd(embeddings.values.cast<double>()), config);
}

GroupAssignment kmeans_assign(const KMeansModel& model,
                              const Eigen::MatrixXd& data) {
  if (data.cols() != model.centroids.cols()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "embedding dim " + std::to_string(data.cols()) +
                    " vs centroid dim " + std::to_string(model.dim()));
  }
  GroupAssignment out;
  out.source = GroupSource::kCluster;
  out.num_groups = model.k();
  out.ids = label_all(model.centroids, data, nullptr);
  return out;
}

GroupAssignment kmeans_assign(const KMeansModel& model,
                              const EmbeddingSet& embeddings) {
  return kmeans_assign(model, Eigen::MatrixXd(embeddings.values.cast<double>()));
}

GroupAssignment assign_groups(std::span<const UtteranceRecord> records,
                              GroupSource source,
                              const KMeansModel* cluster_model,
                              const EmbeddingSet* embeddings) {
  if (source == GroupSource::kCluster) {
    if (cluster_model == nullptr || embeddings == nullptr) {
      throw Error(ErrorCode::kMissingClusterModel,
                  "cluster source needs a fitted model and embeddings");
    }
    if (embeddings->rows() != records.size()) {
      throw Error(ErrorCode::kCountMismatch,
                  "embeddings do not match records");
    }
    return kmeans_assign(*cluster_model, *embeddings);
  }
  const Attribute attribute = source_attribute(source);
  GroupAssignment out;
  out.source = source;
  out.num_groups = attribute_cardinality(attribute);
  out.ids.reserve(records.size());
  for (const auto& r : records) {
    const int g = attribute_value(r, attribute);
    if (g < 0 && r.split == Split::kTrain) {
      throw Error(ErrorCode::kMissingDemographic,
                  r.utt_id + " has NA " + std::string(to_token(attribute)));
    }
    out.ids.push_back(g);
  }
  return out;
}

void write_cluster_assignments(const std::filesystem::path& path,
                               std::span<const UtteranceRecord> records,
                               const GroupAssignment& groups) {
  if (groups.ids.size() != records.size()) {
    throw Error(ErrorCode::kCountMismatch, "assignment does not match records");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << "utt_id\tgroup_id\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    out << records[i].utt_id << '\t' << groups.ids[i] << '\n';
  }
}

void write_kmeans_model(const std::filesystem::path& path,
                        const KMeansModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write("KMC1", 4);
  binary_io::write_u32(out, static_cast<std::uint32_t>(model.k()));
  binary_io::write_u32(out, static_cast<std::uint32_t>(model.dim()));
  for (Eigen::Index i = 0; i < model.centroids.rows(); ++i) {
    for (Eigen::Index j = 0; j < model.centroids.cols(); ++j) {
      binary_io::write_f32(out, static_cast<float>(model.centroids(i, j)));
    }
  }
  binary_io::write_f64(out, model.inertia);
}

KMeansModel read_kmeans_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  const std::string what = path.string();
  binary_io::expect_magic(in, "KMC1", what);
  const std::uint32_t k = binary_io::read_u32(in, what);
  const std::uint32_t d = binary_io::read_u32(in, what);
  KMeansModel model;
  model.centroids.resize(k, d);
  for (std::uint32_t i = 0; i < k; ++i) {
    for (std::uint32_t j = 0; j < d; ++j) {
      model.centroids(i, j) = binary_io::read_f32(in, what);
    }
  }
  model.inertia = binary_io::read_f64(in, what);
  if (!model.centroids.allFinite()) {
    throw Error(ErrorCode::kNonFinite, what);
  }
  return model;
}

}  // namespace idifair
