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

// Shared data builders for the unit and acceptance tests.

#ifndef IDIFAIR_TESTS_FIXTURES_HPP_
#define IDIFAIR_TESTS_FIXTURES_HPP_

#include <algorithm>
#include <array>
#include <cstdio>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "idifair/dataset.hpp"
#include "idifair/harness.hpp"
#include "idifair/random.hpp"
#include "idifair/trainer.hpp"

namespace idifair::fixtures {

/// CREMA-D fold-1 training counts after 1:20 injection, in default class
/// order (angry, disgust, fear, happy, neutral, sad): {male, female}.
inline constexpr std::array<std::array<int, 2>, 6> kFold1TrainRetained = {{
    {240, 12},   // angry
    {86, 4},     // disgust
    {6, 127},    // fear
    {5, 102},    // happy
    {1080, 54},  // neutral
    {2, 58},     // sad
}};

/// Training pools whose majority cells match the retained counts above and
/// whose minority cells are as large as the majority (CREMA-D is close to
/// gender-balanced per emotion).
inline std::vector<UtteranceRecord> fold1_train_pool() {
  const LabelSpace space;
  std::vector<UtteranceRecord> records;
  for (int c = 0; c < 6; ++c) {
    const int major = std::max(kFold1TrainRetained[c][0],
                               kFold1TrainRetained[c][1]);
    for (int g = 0; g < 2; ++g) {
      for (int i = 0; i < major; ++i) {
        UtteranceRecord r;
        char id[64];
        std::snprintf(id, sizeof id, "tr_%s_%s_%05d", space.name(c).c_str(),
                      g == 0 ? "m" : "f", i);
        r.utt_id = id;
        r.split = Split::kTrain;
        r.gender = g == 0 ? Gender::kMale : Gender::kFemale;
        r.pseudo_gender = r.gender;
        r.label_dist = Eigen::VectorXd::Unit(6, c);
        records.push_back(std::move(r));
      }
    }
  }
  return records;
}

/// The planted 20:1 design used by the end-to-end checks: two classes, two
/// groups, group direction stronger than class direction.
inline SynthSpec planted_bias_spec() {
  SynthSpec s;
  s.classes = {"neutral", "happy"};
  s.group_attribute = Attribute::kGender;
  s.dim = 32;
  s.class_separation = 2.0;
  s.bias_strength = 4.0;
  s.noise = 1.0;
  s.train.counts = {{1400, 70}, {25, 505}};
  s.dev.counts = {{350, 17}, {6, 126}};
  s.test.counts = {{250, 250}, {250, 250}};
  return s;
}

/// Classifier with N(0, scale^2) entries.
inline Classifier random_classifier(Rng& rng, int d, int h, int y,
                                    double scale = 0.7) {
  Classifier p = Classifier::zeros(d, h, y);
  p.for_each_block([&](auto& block) {
    for (Eigen::Index i = 0; i < block.size(); ++i) {
      block.data()[i] = scale * rng.normal();
    }
  });
  return p;
}

/// Batch with soft targets, majority classes and uniformly drawn groups.
inline SampleSet random_batch(Rng& rng, int n, int d, int y, int groups) {
  SampleSet b;
  b.x.resize(n, d);
  b.targets.resize(n, y);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) b.x(i, j) = rng.normal();
    for (int c = 0; c < y; ++c) b.targets(i, c) = rng.exponential();
    b.targets.row(i) /= b.targets.row(i).sum();
    Eigen::Index arg;
    b.targets.row(i).maxCoeff(&arg);
    b.classes.push_back(static_cast<int>(arg));
    b.groups.push_back(static_cast<int>(rng.uniform_index(groups)));
  }
  return b;
}

/// Positive class weights with mean 1.
inline Eigen::VectorXd random_class_weights(Rng& rng, int y) {
  Eigen::VectorXd w(y);
  for (int c = 0; c < y; ++c) w[c] = rng.uniform(0.2, 2.0);
  return w / w.mean();
}

/// Largest |a - b| over the four blocks, relative to the larger max-norm.
inline double relative_difference(const Classifier& a, const Classifier& b) {
  double diff = 0.0;
  double scale = 0.0;
  Classifier a_copy = a;
  Classifier b_copy = b;
  a_copy.for_each_block(
      [&](auto& x, auto& y) {
        diff = std::max(diff, (x - y).cwiseAbs().maxCoeff());
        scale = std::max({scale, x.cwiseAbs().maxCoeff(),
                          y.cwiseAbs().maxCoeff()});
      },
      b_copy);
  return scale > 0.0 ? diff / scale : diff;
}

/// Central finite-difference gradient of `loss` at `params`.
template <typename LossFn>
Classifier numeric_gradient(const Classifier& params, LossFn&& loss,
                            double step = 1e-4) {
  Classifier grad = Classifier::zeros(params.input_dim(), params.hidden_dim(),
                                      params.num_classes());
  Classifier probe = params;
  probe.for_each_block(
      [&](auto& p, auto& g) {
        for (Eigen::Index i = 0; i < p.size(); ++i) {
          const double saved = p.data()[i];
          p.data()[i] = saved + step;
          const double up = loss(probe);
          p.data()[i] = saved - step;
          const double down = loss(probe);
          p.data()[i] = saved;
          g.data()[i] = (up - down) / (2.0 * step);
        }
      },
      grad);
  return grad;
}

}  // namespace idifair::fixtures

#endif  // IDIFAIR_TESTS_FIXTURES_HPP_
