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

#include "idifair/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "idifair/error.hpp"

namespace idifair {
namespace {

void check_shapes(const BinaryMatrix& pred, const BinaryMatrix& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "prediction and truth shapes differ");
  }
}

void check_groups(const BinaryMatrix& pred, std::span<const int> groups,
                  int num_groups) {
  if (static_cast<Eigen::Index>(groups.size()) != pred.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "group ids do not match rows");
  }
  if (num_groups < 1) {
    throw Error(ErrorCode::kInvalidConfig, "need at least one group");
  }
  for (int g : groups) {
    if (g >= num_groups) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "group id " + std::to_string(g) + " >= G");
    }
  }
}

}  // namespace

Eigen::VectorXd per_class_f1(const BinaryMatrix& pred,
                             const BinaryMatrix& truth) {
  check_shapes(pred, truth);
  const Eigen::ArrayXXi p = pred.array();
  const Eigen::ArrayXXi t = truth.array();
  const Eigen::ArrayXd tp = (p * t).colwise().sum().cast<double>().transpose();
  const Eigen::ArrayXd fp =
      (p * (1 - t)).colwise().sum().cast<double>().transpose();
  const Eigen::ArrayXd fn =
      ((1 - p) * t).colwise().sum().cast<double>().transpose();
  const Eigen::ArrayXd denom = 2.0 * tp + fp + fn;
  return (denom > 0.0).select(2.0 * tp / denom, 0.0).matrix();
}

double macro_f1(const BinaryMatrix& pred, const BinaryMatrix& truth) {
  return per_class_f1(pred, truth).mean();
}

double hamming_acc(const BinaryMatrix& pred, const BinaryMatrix& truth) {
  check_shapes(pred, truth);
  if (pred.size() == 0) return 0.0;
  return static_cast<double>((pred.array() == truth.array()).count()) /
         static_cast<double>(pred.size());
}

Eigen::MatrixXd per_group_tpr(const BinaryMatrix& pred,
                              const BinaryMatrix& truth,
                              std::span<const int> groups, int num_groups) {
  check_shapes(pred, truth);
  check_groups(pred, groups, num_groups);
  Eigen::MatrixXd tp = Eigen::MatrixXd::Zero(pred.cols(), num_groups);
  Eigen::MatrixXd pos = Eigen::MatrixXd::Zero(pred.cols(), num_groups);
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    const int g = groups[static_cast<std::size_t>(i)];
    if (g < 0) continue;
    for (Eigen::Index c = 0; c < pred.cols(); ++c) {
      if (truth(i, c) == 1) {
        pos(c, g) += 1.0;
        tp(c, g) += pred(i, c);
      }
    }
  }
  return (pos.array() > 0.0)
      .select(tp.array() / pos.array(),
              std::numeric_limits<double>::quiet_NaN())
      .matrix();
}

Eigen::MatrixXd per_group_rate(const BinaryMatrix& pred,
                               std::span<const int> groups, int num_groups) {
  check_groups(pred, groups, num_groups);
  Eigen::MatrixXd positives = Eigen::MatrixXd::Zero(pred.cols(), num_groups);
  Eigen::VectorXd sizes = Eigen::VectorXd::Zero(num_groups);
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    const int g = groups[static_cast<std::size_t>(i)];
    if (g < 0) continue;
    sizes[g] += 1.0;
    positives.col(g) += pred.row(i).transpose().cast<double>();
  }
  for (int g = 0; g < num_groups; ++g) {
    if (sizes[g] == 0.0) {
      throw Error(ErrorCode::kInvalidConfig,
                  "group " + std::to_string(g) + " is empty");
    }
  }
  return positives.array().rowwise() / sizes.transpose().array();
}

double tpr_gap(const BinaryMatrix& pred, const BinaryMatrix& truth,
               std::span<const int> groups, int num_groups) {
  const Eigen::MatrixXd tpr = per_group_tpr(pred, truth, groups, num_groups);
  if (tpr.rows() == 0) return 0.0;
  double sum_sq = 0.0;
  for (Eigen::Index c = 0; c < tpr.rows(); ++c) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    int defined = 0;
    for (Eigen::Index g = 0; g < tpr.cols(); ++g) {
      const double v = tpr(c, g);
      if (std::isnan(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      ++defined;
    }
    if (defined >= 2) sum_sq += (hi - lo) * (hi - lo);
  }
  return std::sqrt(sum_sq / static_cast<double>(tpr.rows()));
}

double dp_gap(const BinaryMatrix& pred, std::span<const int> groups,
              int num_groups) {
  const Eigen::MatrixXd rate = per_group_rate(pred, groups, num_groups);
  Eigen::VectorXd overall = Eigen::VectorXd::Zero(pred.cols());
  double counted = 0.0;
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    if (groups[static_cast<std::size_t>(i)] < 0) continue;
    overall += pred.row(i).transpose().cast<double>();
    counted += 1.0;
  }
  overall /= counted;
  const Eigen::MatrixXd deviation = rate.colwise() - overall;
  return std::sqrt(deviation.array().square().rowwise().maxCoeff().sum());
}

FairnessReport fairness_report(const BinaryMatrix& pred,
                               const BinaryMatrix& truth,
                               std::span<const int> groups, int num_groups) {
  FairnessReport r;
  r.per_class_tpr = per_group_tpr(pred, truth, groups, num_groups);
  r.per_class_rate = per_group_rate(pred, groups, num_groups);
  r.tpr_gap = tpr_gap(pred, truth, groups, num_groups);
  r.dp_gap = dp_gap(pred, groups, num_groups);
  return r;
}

MetricSummary evaluate_predictions(const BinaryMatrix& pred,
                                   const BinaryMatrix& truth,
                                   std::span<const int> groups,
                                   int num_groups) {
  MetricSummary s;
  s.class_f1 = per_class_f1(pred, truth);
  s.f1 = s.class_f1.mean();
  s.acc = hamming_acc(pred, truth);
  s.fairness = fairness_report(pred, truth, groups, num_groups);
  s.tpr_gap = s.fairness.tpr_gap;
  s.dp_gap = s.fairness.dp_gap;
  return s;
}

nlohmann::ordered_json metrics_to_json(const MetricSummary& summary,
                                       const LabelSpace& label_space) {
  nlohmann::ordered_json out;
  out["f1"] = summary.f1;
  out["acc"] = summary.acc;
  out["tpr_gap"] = summary.tpr_gap;
  out["dp_gap"] = summary.dp_gap;
  nlohmann::ordered_json per_class = nlohmann::ordered_json::object();
  for (std::size_t c = 0; c < label_space.size(); ++c) {
    const auto row = static_cast<Eigen::Index>(c);
    nlohmann::ordered_json tpr = nlohmann::ordered_json::array();
    nlohmann::ordered_json rate = nlohmann::ordered_json::array();
    for (Eigen::Index g = 0; g < summary.fairness.per_class_tpr.cols(); ++g) {
      const double v = summary.fairness.per_class_tpr(row, g);
      tpr.push_back(std::isnan(v) ? nlohmann::ordered_json(nullptr)
                                  : nlohmann::ordered_json(v));
      rate.push_back(summary.fairness.per_class_rate(row, g));
    }
    per_class[label_space.name(c)] = {{"f1", summary.class_f1[row]},
                                      {"tpr", tpr},
                                      {"rate", rate}};
  }
  out["per_class"] = per_class;
  return out;
}

}  // namespace idifair
