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

// Implicit demography inference: mini-batch k-means over embeddings, and
// the routing of demographic or pseudo labels into group ids.

#ifndef IDIFAIR_IDI_HPP_
#define IDIFAIR_IDI_HPP_

#include <cstdint>
#include <limits>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "idifair/dataset.hpp"

namespace idifair {

enum class GroupSource {
  kGroundTruthGender,
  kGroundTruthRace,
  kGroundTruthAge,
  kPseudoGender,
  kCluster,
};

std::string_view to_token(GroupSource s);
GroupSource parse_group_source(std::string_view token);

/// Per-utterance group ids in [0, num_groups). Records outside the training
/// split whose attribute is NA carry -1 and are skipped by group metrics.
struct GroupAssignment {
  GroupSource source = GroupSource::kGroundTruthGender;
  int num_groups = 0;
  std::vector<int> ids;
};

struct KMeansConfig {
  int k = 16;
  std::uint64_t seed = 42;
  /// Passes over the data; the mini-batch phase runs
  /// ceil(max_iter * n / mini_batch_size) steps at most.
  int max_iter = 1000;
  int mini_batch_size = 32;
  double reassignment_ratio = 0.01;
  double tolerance = 1e-4;
};

struct KMeansModel {
  Eigen::MatrixXd centroids;  // k x d
  double inertia = 0.0;
  int iterations_run = 0;
  /// Final-pass labels of the fitted rows.
  std::vector<int> labels;

  int k() const { return static_cast<int>(centroids.rows()); }
  int dim() const { return static_cast<int>(centroids.cols()); }
};

/// Nearest centroid by squared Euclidean distance, ties to the lower index.
template <typename DerivedC, typename DerivedX>
int nearest_centroid(const Eigen::MatrixBase<DerivedC>& centroids,
                     const Eigen::MatrixBase<DerivedX>& point,
                     double* squared_distance = nullptr) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < centroids.rows(); ++j) {
    const double dist =
        (centroids.row(j).template cast<double>() -
         point.template cast<double>())
            .squaredNorm();
    if (dist < best_d) {
      best_d = dist;
      best = static_cast<int>(j);
    }
  }
  if (squared_distance != nullptr) *squared_distance = best_d;
  return best;
}

/// Greedy k-means++ seeding followed by mini-batch Lloyd updates with
/// low-count centroid reassignment, then full-batch Lloyd refinement until
/// the labels are stable and a final labeling pass.
KMeansModel kmeans_fit(const Eigen::MatrixXd& data, const KMeansConfig& config);
KMeansModel kmeans_fit(const EmbeddingSet& embeddings,
                       const KMeansConfig& config);

/// Greedy k-means++ seeding alone (exposed for tests).
Eigen::MatrixXd kmeanspp_greedy(const Eigen::MatrixXd& data, int k,
                                std::uint64_t seed);

/// Sum of squared distances of every row to its nearest centroid.
double inertia(const Eigen::MatrixXd& centroids, const Eigen::MatrixXd& data);

GroupAssignment kmeans_assign(const KMeansModel& model,
                              const EmbeddingSet& embeddings);
GroupAssignment kmeans_assign(const KMeansModel& model,
                              const Eigen::MatrixXd& data);

/// Maps a demographic or pseudo-label column to group ids by fixed enum
/// order, or delegates to the cluster model. NA on a training record is an
/// error.
GroupAssignment assign_groups(std::span<const UtteranceRecord> records,
                              GroupSource source,
                              const KMeansModel* cluster_model = nullptr,
                              const EmbeddingSet* embeddings = nullptr);

/// Number of groups the source produces (k for clusters).
int group_count(GroupSource source, int k);

void write_cluster_assignments(const std::filesystem::path& path,
                               std::span<const UtteranceRecord> records,
                               const GroupAssignment& groups);

void write_kmeans_model(const std::filesystem::path& path,
                        const KMeansModel& model);
KMeansModel read_kmeans_model(const std::filesystem::path& path);

}  // namespace idifair

#endif  // IDIFAIR_IDI_HPP_
