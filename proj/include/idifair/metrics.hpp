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

// Multi-label performance (macro-F1, Hamming accuracy) and group fairness
// (RMS TPR gap, demographic-parity gap) over binarized predictions.

#ifndef IDIFAIR_METRICS_HPP_
#define IDIFAIR_METRICS_HPP_

#include <span>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "idifair/dataset.hpp"

namespace idifair {

/// 1 where prob >= 1/|Y| (inclusive), computed per entry.
template <typename Derived>
BinaryMatrix binarize(const Eigen::MatrixBase<Derived>& probs) {
  const double threshold = 1.0 / static_cast<double>(probs.cols());
  return (probs.template cast<double>().array() >= threshold)
      .template cast<int>()
      .matrix();
}

struct PredictionSet {
  Eigen::MatrixXd probs;  // n x |Y|
  BinaryMatrix binary;    // binarize(probs)
};

double macro_f1(const BinaryMatrix& pred, const BinaryMatrix& truth);

/// Per-class 2TP / (2TP + FP + FN), 0 when the denominator is 0.
Eigen::VectorXd per_class_f1(const BinaryMatrix& pred,
                             const BinaryMatrix& truth);

double hamming_acc(const BinaryMatrix& pred, const BinaryMatrix& truth);

/// |Y| x G true-positive rates; NaN where a group has no positives.
Eigen::MatrixXd per_group_tpr(const BinaryMatrix& pred,
                              const BinaryMatrix& truth,
                              std::span<const int> groups, int num_groups);

/// |Y| x G positive-prediction rates. Every group must be non-empty.
Eigen::MatrixXd per_group_rate(const BinaryMatrix& pred,
                               std::span<const int> groups, int num_groups);

/// sqrt(mean_c (max_g TPR - min_g TPR)^2) over groups with defined TPR.
/// Rows with a negative group id are ignored.
double tpr_gap(const BinaryMatrix& pred, const BinaryMatrix& truth,
               std::span<const int> groups, int num_groups);

/// sqrt(sum_c max_g (rate_{c,g} - rate_c)^2), rates over rows with a group.
double dp_gap(const BinaryMatrix& pred, std::span<const int> groups,
              int num_groups);

struct FairnessReport {
  double tpr_gap = 0.0;
  double dp_gap = 0.0;
  Eigen::MatrixXd per_class_tpr;   // |Y| x G
  Eigen::MatrixXd per_class_rate;  // |Y| x G
};

FairnessReport fairness_report(const BinaryMatrix& pred,
                               const BinaryMatrix& truth,
                               std::span<const int> groups, int num_groups);

struct MetricSummary {
  double f1 = 0.0;
  double acc = 0.0;
  double tpr_gap = 0.0;
  double dp_gap = 0.0;
  Eigen::VectorXd class_f1;
  FairnessReport fairness;
};

MetricSummary evaluate_predictions(const BinaryMatrix& pred,
                                   const BinaryMatrix& truth,
                                   std::span<const int> groups,
                                   int num_groups);

/// {f1, acc, tpr_gap, dp_gap, per_class: {name: {f1, tpr: [...], rate: [...]}}}
nlohmann::ordered_json metrics_to_json(const MetricSummary& summary,
                                       const LabelSpace& label_space);

}  // namespace idifair

#endif  // IDIFAIR_METRICS_HPP_
