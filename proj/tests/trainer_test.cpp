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


#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "idifair/random.hpp"
#include "idifair/trainer.hpp"
#include "test_util.hpp"

namespace idifair {
namespace {

using fixtures::numeric_gradient;
using fixtures::random_batch;
using fixtures::random_class_weights;
using fixtures::random_classifier;
using fixtures::relative_difference;

/// Rows whose loss at zero parameters is exactly `loss` (uniform softmax
/// over y classes, unit weights).
SampleSet constant_loss_rows(int rows, int d, int y, double loss, int group) {
  SampleSet b;
  b.x = Eigen::MatrixXd::Zero(rows, d);
  b.targets = Eigen::MatrixXd::Zero(rows, y);
  b.targets.col(0).setConstant(loss / std::log(static_cast<double>(y)));
  b.classes.assign(static_cast<std::size_t>(rows), 0);
  b.groups.assign(static_cast<std::size_t>(rows), group);
  return b;
}

SampleSet concat(const SampleSet& a, const SampleSet& b) {
  SampleSet out;
  out.x.resize(a.size() + b.size(), a.x.cols());
  out.x << a.x, b.x;
  out.targets.resize(a.size() + b.size(), a.targets.cols());
  out.targets << a.targets, b.targets;
  out.classes = a.classes;
  out.classes.insert(out.classes.end(), b.classes.begin(), b.classes.end());
  out.groups = a.groups;
  out.groups.insert(out.groups.end(), b.groups.begin(), b.groups.end());
  return out;
}

TEST(Forward, ZeroParamsGiveUniform) {
  const Classifier p = Classifier::zeros(4, 3, 6);
  const Eigen::VectorXd out = forward(p, Eigen::VectorXd::Ones(4));
  EXPECT_TRUE(out.isApprox(Eigen::VectorXd::Constant(6, 1.0 / 6.0), 1e-15));
}

TEST(Forward, SumsToOneAndSaturates) {
  Rng rng(1);
  for (int t = 0; t < 50; ++t) {
    const Classifier p = random_classifier(rng, 5, 7, 4, 3.0);
    Eigen::VectorXd x(5);
    for (int j = 0; j < 5; ++j) x[j] = 10.0 * rng.normal();
    const Eigen::VectorXd out = forward(p, x);
    EXPECT_NEAR(out.sum(), 1.0, 1e-9);
    EXPECT_TRUE((out.array() >= 0.0).all());
  }
  Classifier p = Classifier::zeros(1, 1, 3);
  p.b2 << 1000.0, -1000.0, 0.0;
  const Eigen::VectorXd out = forward(p, Eigen::VectorXd::Zero(1));
  EXPECT_NEAR(out[0], 1.0, 1e-12);
  EXPECT_LT(out[1], 1e-25);
  EXPECT_THROW(forward(p, Eigen::VectorXd::Zero(2)), Error);
}

TEST(CbWeights, Examples) {
  const std::vector<int> two = {10, 1000};
  const std::vector<int> equal = {7, 7, 7};
  EXPECT_TRUE(cb_weights(two, 0.0).isApprox(Eigen::VectorXd::Ones(2)));
  EXPECT_TRUE(cb_weights(equal, 0.9999).isApprox(Eigen::VectorXd::Ones(3)));

  // Extended-precision oracle of the closed form.
  const long double beta = 0.999L;
  const long double w0 = (1.0L - beta) / (1.0L - std::pow(beta, 10.0L));
  const long double w1 = (1.0L - beta) / (1.0L - std::pow(beta, 1000.0L));
  EXPECT_NEAR(static_cast<double>(w0), 0.1004508, 1e-7);
  EXPECT_NEAR(static_cast<double>(w1), 0.001582, 5e-7);
  const Eigen::VectorXd w = cb_weights(two, 0.999);
  EXPECT_NEAR(w.mean(), 1.0, 1e-15);
  EXPECT_NEAR(w[0] / w[1], static_cast<double>(w0 / w1), 1e-10);
  EXPECT_NEAR(w[0] / w[1], 63.51, 1e-2);
  EXPECT_IDIFAIR_ERROR(cb_weights(two, 1.0), ErrorCode::kInvalidConfig);
}

TEST(SampleLoss, Examples) {
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(6);
  const Classifier zero = Classifier::zeros(3, 2, 6);
  EXPECT_NEAR(sample_loss(zero, Eigen::VectorXd::Zero(3),
                          Eigen::VectorXd::Unit(6, 2), ones),
              std::log(6.0), 1e-15);
  EXPECT_NEAR(std::log(6.0), 1.7918, 1e-4);

  Classifier confident = Classifier::zeros(3, 2, 6);
  confident.b2[2] = 40.0;
  EXPECT_LT(sample_loss(confident, Eigen::VectorXd::Zero(3),
                        Eigen::VectorXd::Unit(6, 2), ones),
            1e-12);
}

TEST(SampleLoss, GradientMatchesFiniteDifference) {
  Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    const Classifier p = random_classifier(rng, 5, 4, 3);
    const SampleSet b = random_batch(rng, 1, 5, 3, 1);
    const Eigen::VectorXd w = random_class_weights(rng, 3);
    const Eigen::VectorXd x = b.x.row(0).transpose();
    const Eigen::VectorXd target = b.targets.row(0).transpose();
    Classifier grad;
    sample_loss(p, x, target, w, &grad);
    const Classifier fd = numeric_gradient(
        p, [&](const Classifier& q) { return sample_loss(q, x, target, w); });
    EXPECT_LT(relative_difference(grad, fd), 1e-5);
  }
}

TEST(BatchLoss, ErmIsMean) {
  Rng rng(3);
  const Classifier p = random_classifier(rng, 5, 4, 3);
  const SampleSet b = random_batch(rng, 2, 5, 3, 1);
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(3);
  const double l0 = sample_loss(p, b.x.row(0).transpose(),
                                b.targets.row(0).transpose(), w);
  const double l1 = sample_loss(p, b.x.row(1).transpose(),
                                b.targets.row(1).transpose(), w);
  EXPECT_NEAR(batch_loss_erm(p, b, w).value, 0.5 * (l0 + l1), 1e-14);
  EXPECT_NEAR(batch_loss_erm(p, concat(b, b), w).value, 0.5 * (l0 + l1), 1e-14);
  const std::size_t first[] = {0};
  EXPECT_NEAR(batch_loss_erm(p, b.subset(first), w).value, l0, 1e-14);

  const SampleSet pair =
      concat(constant_loss_rows(1, 5, 3, 0.4, 0), constant_loss_rows(1, 5, 3, 0.8, 0));
  EXPECT_NEAR(batch_loss_erm(Classifier::zeros(5, 4, 3), pair, w).value, 0.6,
              1e-14);
}

TEST(GroupStats, Counts) {
  const std::vector<int> classes = {0, 0, 1, 1, 1, 0};
  const std::vector<int> groups = {0, 1, 1, 1, 0, 0};
  const GroupStats s = GroupStats::compute(classes, groups, 2, 2);
  EXPECT_EQ(s.n_c, Eigen::Vector2i(3, 3));
  EXPECT_EQ(s.n_g, Eigen::Vector2i(3, 3));
  EXPECT_EQ(s.n_cg(0, 0), 2);
  EXPECT_EQ(s.n_cg(1, 1), 2);
  EXPECT_EQ(s.n_cg.rowwise().sum(), s.n_c);
  EXPECT_EQ(s.n_cg.colwise().sum().transpose(), s.n_g);
}

TEST(Reweight, Factors) {
  std::vector<int> classes(21, 0), groups(21, 0);
  groups[20] = 1;
  const GroupStats s = GroupStats::compute(classes, groups, 1, 2);
  EXPECT_DOUBLE_EQ(reweight_factor(s, 0, 0), 1.05);
  EXPECT_DOUBLE_EQ(reweight_factor(s, 0, 1), 21.0);

  const std::vector<int> lone = {0};
  const GroupStats t = GroupStats::compute(lone, lone, 1, 2);
  EXPECT_IDIFAIR_ERROR(reweight_factor(t, 0, 1), ErrorCode::kUnseenGroupCell);
}

TEST(Reweight, SingleGroupEqualsErm) {
  Rng rng(4);
  for (int t = 0; t < 100; ++t) {
    const Classifier p = random_classifier(rng, 5, 4, 3);
    const SampleSet b = random_batch(rng, 8, 5, 3, 1);
    const Eigen::VectorXd w = random_class_weights(rng, 3);
    const GroupStats s = GroupStats::compute(b.classes, b.groups, 3, 1);
    EXPECT_NEAR(batch_loss_rw(p, b, s, w).value, batch_loss_erm(p, b, w).value,
                1e-12);
  }
}

TEST(Reweight, BalancedGroupsScaleErm) {
  Rng rng(5);
  for (int t = 0; t < 100; ++t) {
    const int g = 2 + static_cast<int>(rng.uniform_index(3));
    const Classifier p = random_classifier(rng, 5, 4, 3);
    SampleSet b = random_batch(rng, 6 * g, 5, 3, 1);
    for (int i = 0; i < b.size(); ++i) {
      b.classes[i] = (i / g) % 3;
      b.groups[i] = i % g;
    }
    const Eigen::VectorXd w = random_class_weights(rng, 3);
    const GroupStats s = GroupStats::compute(b.classes, b.groups, 3, g);
    const LossResult rw = batch_loss_rw(p, b, s, w);
    const LossResult erm = batch_loss_erm(p, b, w);
    EXPECT_NEAR(rw.value, g * erm.value, 1e-9);
    Classifier scaled = erm.gradient;
    scaled.for_each_block([g](auto& x) { x *= static_cast<double>(g); });
    EXPECT_LT(relative_difference(rw.gradient, scaled), 1e-12);
  }
}

TEST(Gdro, Examples) {
  const Classifier zero = Classifier::zeros(2, 3, 3);
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(3);
  const SampleSet b = concat(constant_loss_rows(2, 2, 3, 0.2, 0),
                             constant_loss_rows(3, 2, 3, 0.7, 1));
  const LossResult r = batch_loss_gdro(zero, b, w);
  EXPECT_NEAR(r.value, 0.7, 1e-14);
  EXPECT_EQ(r.selected_group, 1);

  // Zero targets make every loss exactly 0, so the three groups tie.
  const SampleSet tied = concat(
      concat(constant_loss_rows(2, 2, 3, 0.0, 2), constant_loss_rows(1, 2, 3, 0.0, 0)),
      constant_loss_rows(2, 2, 3, 0.0, 1));
  const LossResult t = batch_loss_gdro(zero, tied, w);
  EXPECT_EQ(t.value, 0.0);
  EXPECT_EQ(t.selected_group, 0);

  Rng rng(6);
  const Classifier p = random_classifier(rng, 5, 4, 3);
  SampleSet single = random_batch(rng, 8, 5, 3, 1);
  for (auto& g : single.groups) g = 3;
  const LossResult one = batch_loss_gdro(p, single, w);
  const LossResult erm = batch_loss_erm(p, single, w);
  EXPECT_NEAR(one.value, erm.value, 1e-14);
  EXPECT_LT(relative_difference(one.gradient, erm.gradient), 1e-14);
}

TEST(Gadro, HandExample) {
  const Classifier zero = Classifier::zeros(2, 3, 3);
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(3);
  const SampleSet b = concat(constant_loss_rows(2, 2, 3, 0.5, 0),
                             constant_loss_rows(2, 2, 3, 1.0, 1));
  std::vector<int> classes(20, 0), groups(20, 1);
  for (int i = 0; i < 4; ++i) groups[i] = 0;
  const GroupStats s = GroupStats::compute(classes, groups, 3, 2);
  const LossResult r = batch_loss_gadro(zero, b, s, 4.0, w);
  EXPECT_NEAR(r.value, 2.5, 1e-14);
  EXPECT_EQ(r.selected_group, 0);
  // Group B's adjusted value is 1.0 + 4/4 = 2.0; at lambda 0 it wins.
  const LossResult plain = batch_loss_gadro(zero, b, s, 0.0, w);
  EXPECT_NEAR(plain.value, 1.0, 1e-14);
  EXPECT_EQ(plain.selected_group, 1);
}

TEST(Gadro, LambdaZeroAndEqualSizesMatchGdro) {
  Rng rng(7);
  for (int t = 0; t < 200; ++t) {
    const int g = 2 + static_cast<int>(rng.uniform_index(3));
    const Classifier p = random_classifier(rng, 5, 4, 3);
    const SampleSet b = random_batch(rng, 8, 5, 3, g);
    const Eigen::VectorXd w = random_class_weights(rng, 3);
    std::vector<int> classes, groups;
    for (int k = 0; k < g; ++k) {
      for (int i = 0; i < 10; ++i) {
        classes.push_back(i % 3);
        groups.push_back(k);
      }
    }
    const GroupStats equal = GroupStats::compute(classes, groups, 3, g);
    const LossResult gdro = batch_loss_gdro(p, b, w);
    const LossResult zero = batch_loss_gadro(p, b, equal, 0.0, w);
    EXPECT_EQ(zero.value, gdro.value);
    EXPECT_EQ(zero.selected_group, gdro.selected_group);
    EXPECT_EQ(batch_loss_gadro(p, b, equal, 4.0, w).selected_group,
              gdro.selected_group);
  }
}

TEST(Gradients, AllObjectivesMatchFiniteDifferences) {
  Rng rng(8);
  for (int t = 0; t < 25; ++t) {
    const Classifier p = random_classifier(rng, 5, 4, 3);
    const SampleSet b = random_batch(rng, 8, 5, 3, 2);
    const Eigen::VectorXd w = random_class_weights(rng, 3);
    std::vector<int> classes = b.classes, groups = b.groups;
    for (int c = 0; c < 3; ++c) {
      for (int g = 0; g < 2; ++g) {
        classes.push_back(c);
        groups.push_back(g);
      }
    }
    const GroupStats s = GroupStats::compute(classes, groups, 3, 2);
    const auto check = [&](auto&& fn, const char* name) {
      const LossResult r = fn(p);
      const Classifier fd =
          numeric_gradient(p, [&](const Classifier& q) { return fn(q).value; });
      EXPECT_LT(relative_difference(r.gradient, fd), 1e-5) << name;
    };
    check([&](const Classifier& q) { return batch_loss_erm(q, b, w); }, "erm");
    check([&](const Classifier& q) { return batch_loss_rw(q, b, s, w); }, "rw");
    check([&](const Classifier& q) { return batch_loss_gdro(q, b, w); }, "gdro");
    check([&](const Classifier& q) { return batch_loss_gadro(q, b, s, 4.0, w); },
          "gadro");
  }
}

TEST(Gradients, ClampedLogitsHaveZeroGradient) {
  Classifier p = Classifier::zeros(2, 2, 3);
  p.b2 << 50.0, 0.0, 0.0;
  SampleSet b;
  b.x = Eigen::MatrixXd::Zero(1, 2);
  b.targets = Eigen::MatrixXd::Zero(1, 3);
  b.targets(0, 1) = 1.0;
  Classifier grad;
  const Eigen::VectorXd coeff = Eigen::VectorXd::Ones(1);
  const Eigen::VectorXd losses =
      weighted_losses<double>(p, b, Eigen::VectorXd::Ones(3), &coeff, &grad);
  EXPECT_NEAR(losses[0], kLogitClamp, 1e-9);
  EXPECT_EQ(grad.b2[0], 0.0);
  EXPECT_TRUE(std::isfinite(grad.b2[1]));
}

TEST(Downsample, Examples) {
  std::vector<int> classes(252, 0), groups(252, 1);
  for (int i = 0; i < 12; ++i) groups[i] = 0;
  const DownsampleResult r = downsample(classes, groups, 2, 1);
  ASSERT_EQ(r.retained.size(), 24u);
  int g0 = 0;
  for (auto i : r.retained) g0 += groups[i] == 0;
  EXPECT_EQ(g0, 12);
  EXPECT_TRUE(std::is_sorted(r.retained.begin(), r.retained.end()));

  std::vector<int> eq_classes(100, 0), eq_groups(100, 0);
  for (int i = 50; i < 100; ++i) eq_groups[i] = 1;
  EXPECT_EQ(downsample(eq_classes, eq_groups, 2, 1).retained.size(), 100u);

  std::vector<int> c2(40, 1), g2(40, 1);
  for (int i = 0; i < 10; ++i) c2[i] = 0;
  for (int i = 0; i < 5; ++i) g2[i] = 0;
  for (int i = 10; i < 15; ++i) g2[i] = 0;
  // Class 0: groups (5, 5). Class 1: groups (5, 25).
  const DownsampleResult both = downsample(c2, g2, 2, 1);
  EXPECT_EQ(both.retained.size(), 20u);
  EXPECT_TRUE(both.dropped_classes.empty());

  std::vector<int> only(30, 0), one_group(30, 1);
  std::vector<int> c3 = only, g3 = one_group;
  c3.push_back(1);
  g3.push_back(0);
  c3.push_back(1);
  g3.push_back(1);
  const DownsampleResult dropped = downsample(c3, g3, 2, 1);
  EXPECT_EQ(dropped.dropped_classes, (std::vector<int>{0}));
  EXPECT_EQ(dropped.retained.size(), 2u);
  EXPECT_IDIFAIR_ERROR(downsample(only, one_group, 2, 1),
                       ErrorCode::kEmptyTrainingSet);
}

TEST(Downsample, BalancedWithinEveryClass) {
  Rng rng(9);
  for (int t = 0; t < 30; ++t) {
    const int g = 2 + static_cast<int>(rng.uniform_index(3));
    std::vector<int> classes, groups;
    for (int i = 0; i < 300; ++i) {
      classes.push_back(static_cast<int>(rng.uniform_index(4)));
      groups.push_back(static_cast<int>(rng.uniform_index(g)));
    }
    const DownsampleResult r = downsample(classes, groups, g, t);
    Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(4, g);
    for (auto i : r.retained) ++counts(classes[i], groups[i]);
    for (int c = 0; c < 4; ++c) {
      EXPECT_EQ(counts.row(c).minCoeff(), counts.row(c).maxCoeff());
    }
    const std::vector<std::string> ids = [&] {
      std::vector<std::string> v;
      for (int i = 0; i < 300; ++i) v.push_back("u" + std::to_string(1000 + i));
      return v;
    }();
    EXPECT_EQ(downsample(ids, classes, groups, g, t).size(), r.retained.size());
  }
}

SampleSet separable_set(int n, std::uint64_t seed) {
  Rng rng(seed);
  SampleSet s;
  s.x.resize(n, 4);
  s.targets = Eigen::MatrixXd::Zero(n, 2);
  for (int i = 0; i < n; ++i) {
    const int c = i % 2;
    for (int j = 0; j < 4; ++j) s.x(i, j) = 0.3 * rng.normal();
    s.x(i, 0) += c ? 2.0 : -2.0;
    s.targets(i, c) = 1.0;
    s.classes.push_back(c);
    s.groups.push_back(static_cast<int>(rng.uniform_index(2)));
  }
  return s;
}

TEST(Train, RejectsZeroEpochs) {
  TrainConfig cfg;
  cfg.epochs = 0;
  const SampleSet s = separable_set(20, 1);
  EXPECT_IDIFAIR_ERROR(train(s, s, 2, cfg), ErrorCode::kInvalidConfig);
}

TEST(Train, ConvergesOnSeparableData) {
  TrainConfig cfg;
  cfg.hidden_dim = 16;
  cfg.learning_rate = 1e-2;
  const SampleSet tr = separable_set(200, 1);
  const SampleSet dev = separable_set(60, 2);
  const TrainOutcome out = train(tr, dev, 2, cfg);
  ASSERT_EQ(out.train_loss_history.size(), 50u);
  EXPECT_LT(out.train_loss_history.back(), 0.1 * out.initial_train_loss);
  const auto best = std::min_element(out.dev_loss_history.begin(),
                                     out.dev_loss_history.end());
  EXPECT_EQ(out.best_epoch, best - out.dev_loss_history.begin());
}

TEST(Train, DeterministicForEveryMethod) {
  const SampleSet tr = separable_set(120, 3);
  const SampleSet dev = separable_set(40, 4);
  for (Method m : {Method::kErm, Method::kRw, Method::kDs, Method::kGdro,
                   Method::kGadro}) {
    TrainConfig cfg;
    cfg.method = m;
    cfg.epochs = 4;
    cfg.hidden_dim = 8;
    cfg.learning_rate = 1e-3;
    const TrainOutcome a = train(tr, dev, 2, cfg);
    const TrainOutcome b = train(tr, dev, 2, cfg);
    EXPECT_EQ(a.best_params, b.best_params) << to_token(m);
    EXPECT_EQ(a.dev_loss_history, b.dev_loss_history) << to_token(m);
    cfg.seed = 43;
    EXPECT_FALSE(train(tr, dev, 2, cfg).best_params == a.best_params);
  }
}

TEST(Train, MethodTokens) {
  for (Method m : {Method::kErm, Method::kRw, Method::kDs, Method::kGdro,
                   Method::kGadro}) {
    EXPECT_EQ(parse_method(to_token(m)), m);
  }
  EXPECT_EQ(to_token(Method::kGadro), "gadro");
  EXPECT_IDIFAIR_ERROR(parse_method("lff"), ErrorCode::kInvalidConfig);
}

TEST(Init, WithinFanInBounds) {
  const Classifier p = init_classifier(25, 16, 6, 42);
  EXPECT_LE(p.w1.cwiseAbs().maxCoeff(), 0.2);
  EXPECT_LE(p.b1.cwiseAbs().maxCoeff(), 0.2);
  EXPECT_LE(p.w2.cwiseAbs().maxCoeff(), 0.25);
  EXPECT_GT(p.w1.cwiseAbs().maxCoeff(), 0.15);
  EXPECT_EQ(init_classifier(25, 16, 6, 42), p);
}

TEST(Checkpoint, RoundTripAndLog) {
  const auto dir = testing::scratch_dir("trainer");
  Rng rng(10);
  const Classifier p = random_classifier(rng, 3, 4, 2);
  write_checkpoint(dir / "c.mlp1", p);
  EXPECT_EQ(read_checkpoint(dir / "c.mlp1"), p);
  EXPECT_EQ(testing::read_file(dir / "c.mlp1").size(),
            4u + 12u + 8u * (12u + 4u + 8u + 2u));

  TrainOutcome out;
  out.dev_loss_history = {0.5, 0.25};
  out.train_loss_history = {0.75, 0.125};
  write_training_log(dir / "log.jsonl", out);
  EXPECT_EQ(testing::read_file(dir / "log.jsonl"),
            "{\"epoch\":0,\"train_loss\":0.75,\"dev_loss\":0.5}\n"
            "{\"epoch\":1,\"train_loss\":0.125,\"dev_loss\":0.25}\n");
}

}  // namespace
}  // namespace idifair
