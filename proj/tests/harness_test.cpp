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
#include <fstream>
#include <vector>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "idifair/harness.hpp"
#include "idifair/json_format.hpp"
#include "test_util.hpp"

namespace idifair {
namespace {

using nlohmann::json;
using testing::read_file;
using testing::scratch_dir;

SynthSpec small_spec() {
  SynthSpec s;
  s.dim = 8;
  s.class_separation = 2.0;
  s.bias_strength = 1.0;
  s.train.counts = {{60, 20}, {20, 60}};
  s.dev.counts = {{15, 5}, {5, 15}};
  s.test.counts = {{20, 20}, {20, 20}};
  return s;
}

ExperimentConfig small_config(const std::filesystem::path& dir, int folds) {
  const LabelSpace space(small_spec().classes);
  ExperimentConfig c;
  c.classes = space.classes();
  for (int f = 0; f < folds; ++f) {
    const auto fd = dir / ("data" + std::to_string(f));
    write_fold(fd, synth_generate(small_spec(), 10 + f), space);
    c.folds.push_back({fd / "manifest.tsv", fd / "embeddings.emb1"});
  }
  c.train.epochs = 3;
  c.train.hidden_dim = 8;
  c.train.learning_rate = 1e-3;
  c.output_dir = dir / "out";
  return c;
}

TEST(Gain, PublishedRows) {
  const MetricMeans erm{0.651, 0.824, 0.278, 0.103};
  const MetricMeans pseudo{0.623, 0.813, 0.198, 0.073};
  const Gains g = compute_gain(pseudo, erm);
  EXPECT_NEAR(g.f1, -4.30, 0.005);
  EXPECT_NEAR(g.acc, -1.335, 0.005);
  EXPECT_NEAR(g.tpr_gap, 28.78, 0.005);
  EXPECT_NEAR(g.dp_gap, 29.13, 0.005);
  const Gains self = compute_gain(erm, erm);
  EXPECT_EQ(self.f1, 0.0);
  EXPECT_EQ(self.acc, 0.0);
  EXPECT_EQ(self.tpr_gap, 0.0);
  EXPECT_EQ(self.dp_gap, 0.0);
}

TEST(Gain, FoldStructureMustMatch) {
  const ReportSummary a{"rw", 5, {0.6, 0.8, 0.2, 0.1}};
  const ReportSummary b{"erm", 4, {0.6, 0.8, 0.2, 0.1}};
  EXPECT_IDIFAIR_ERROR(compute_gain(a, b), ErrorCode::kInvalidConfig);
}

TEST(RandomBaseline, DeterministicAndFair) {
  const LabelSpace space;
  const PredictionSet a = random_baseline(10000, space, 5);
  const PredictionSet b = random_baseline(10000, space, 5);
  EXPECT_EQ(a.probs, b.probs);
  EXPECT_TRUE(a.probs.rowwise().sum().isApproxToConstant(1.0, 1e-12));
  EXPECT_EQ(a.binary, binarize(a.probs));
  Rng rng(77);
  std::vector<int> groups(10000);
  for (auto& g : groups) g = static_cast<int>(rng.uniform_index(2));
  EXPECT_LT(dp_gap(a.binary, groups, 2), 0.05);
}

TEST(Config, ParsesAndRejectsUnknownKeys) {
  const json j = {{"folds", {{{"manifest", "m.tsv"}, {"embeddings", "e.emb1"}}}},
                  {"method", "gadro"},
                  {"group_source", "cluster"},
                  {"k", 16},
                  {"train", {{"epochs", 7}, {"lambda_gd", 4.0}}},
                  {"seed", 9}};
  ExperimentConfig c = parse_experiment_config(j, "/base");
  EXPECT_EQ(c.train.method, Method::kGadro);
  EXPECT_EQ(c.group_source, GroupSource::kCluster);
  EXPECT_EQ(c.kmeans.k, 16);
  EXPECT_EQ(c.train.epochs, 7);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.train.seed, 9u);
  EXPECT_EQ(c.kmeans.seed, 9u);
  EXPECT_EQ(c.folds[0].manifest, std::filesystem::path("/base/m.tsv"));
  EXPECT_EQ(c.method_token(), "gadro");

  json bad = j;
  bad["epochs"] = 3;
  EXPECT_IDIFAIR_ERROR(parse_experiment_config(bad, "/"),
                       ErrorCode::kInvalidConfig);
  json bad_train = j;
  bad_train["train"]["momentum"] = 0.9;
  EXPECT_IDIFAIR_ERROR(parse_experiment_config(bad_train, "/"),
                       ErrorCode::kInvalidConfig);
  json random = j;
  random["method"] = "random";
  EXPECT_EQ(parse_experiment_config(random, "/").method_token(), "random");
}

TEST(Config, JsonRoundTrip) {
  ExperimentConfig c;
  c.train.method = Method::kRw;
  c.bias.enabled = true;
  c.bias.majority_map = {{"angry", "male"}};
  const auto j = config_to_json(c);
  const ExperimentConfig back = parse_experiment_config(json::parse(j.dump()), "/");
  EXPECT_EQ(config_to_json(back).dump(), j.dump());
}

TEST(Synth, DeterministicAndShaped) {
  const SynthSpec s = small_spec();
  const FoldData a = synth_generate(s, 3);
  const FoldData b = synth_generate(s, 3);
  EXPECT_EQ(a.records, b.records);
  EXPECT_EQ(a.embeddings.values, b.embeddings.values);
  EXPECT_EQ(a.records.size(), 160u + 40u + 80u);
  EXPECT_EQ(a.embeddings.dim(), 8u);
  EXPECT_FALSE(synth_generate(s, 4).embeddings.values == a.embeddings.values);

  const auto dir = scratch_dir("harness");
  const LabelSpace space(s.classes);
  write_fold(dir, a, space);
  const FoldData loaded = load_fold({dir / "manifest.tsv", dir / "embeddings.emb1"}, space);
  EXPECT_EQ(loaded.records, a.records);
  EXPECT_EQ(loaded.embeddings.values, a.embeddings.values);
}

TEST(Synth, SpecParsing) {
  const json j = {{"classes", {"neutral", "happy"}},
                  {"train", {{10, 1}, {1, 10}}},
                  {"dev", {{2, 1}, {1, 2}}},
                  {"test", {{5, 5}, {5, 5}}},
                  {"bias_strength", 3.0}};
  const SynthSpec s = parse_synth_spec(j);
  EXPECT_EQ(s.train.counts[0][1], 1);
  EXPECT_EQ(s.bias_strength, 3.0);
  json bad = j;
  bad["colour"] = 1;
  EXPECT_IDIFAIR_ERROR(parse_synth_spec(bad), ErrorCode::kInvalidConfig);
}

TEST(Synth, NoPlantedBiasGivesSmallGap) {
  SynthSpec s;
  s.dim = 32;
  s.class_separation = 2.0;
  s.bias_strength = 0.0;
  s.train.counts = {{500, 500}, {500, 500}};
  s.dev.counts = {{125, 125}, {125, 125}};
  s.test.counts = {{250, 250}, {250, 250}};
  ExperimentConfig c;
  c.classes = s.classes;
  c.train.epochs = 10;
  c.train.hidden_dim = 32;
  c.train.learning_rate = 1e-3;
  const FoldResult r = run_fold(synth_generate(s, 1), c, 0, std::nullopt);
  EXPECT_LT(r.metrics.tpr_gap, 0.1);
}

TEST(Experiment, ErmSingleFoldReport) {
  const auto dir = scratch_dir("harness");
  const ExperimentConfig c = small_config(dir, 1);
  const EvalReport r = run_experiment(c);
  const auto j = report_to_json(r);
  EXPECT_EQ(j["folds"].size(), 1u);
  EXPECT_FALSE(j.contains("gain_percent"));
  EXPECT_EQ(j["method"], "erm");
  EXPECT_TRUE(std::filesystem::exists(dir / "out" / "report.json"));
  EXPECT_TRUE(std::filesystem::exists(fold_dir(dir / "out", 0) / "checkpoint.mlp1"));
  EXPECT_TRUE(std::filesystem::exists(fold_dir(dir / "out", 0) / "train_log.jsonl"));
  const ReportSummary s = read_report_summary(dir / "out" / "report.json");
  EXPECT_EQ(s.num_folds, 1u);
  EXPECT_EQ(s.means.f1, r.means.f1);
}

TEST(Experiment, ProvenanceRecordsLambdaAndK) {
  const auto dir = scratch_dir("harness");
  ExperimentConfig c = small_config(dir, 1);
  c.train.method = Method::kGadro;
  c.group_source = GroupSource::kCluster;
  c.kmeans.k = 16;
  const auto j = report_to_json(run_experiment(c));
  EXPECT_EQ(j["provenance"]["lambda_gd"], 4.0);
  EXPECT_EQ(j["provenance"]["k"], 16);
  EXPECT_EQ(j["provenance"]["method"], "gadro");
  EXPECT_EQ(j["folds"][0]["num_train_groups"], 16);
  EXPECT_TRUE(std::filesystem::exists(fold_dir(dir / "out", 0) / "kmeans.kmc1"));
  EXPECT_TRUE(std::filesystem::exists(fold_dir(dir / "out", 0) / "clusters.tsv"));
  EXPECT_EQ(read_kmeans_model(fold_dir(dir / "out", 0) / "kmeans.kmc1").k(), 16);
}

TEST(Experiment, RerunIsByteIdenticalModuloTimestamp) {
  const auto dir = scratch_dir("harness");
  ExperimentConfig c = small_config(dir, 2);
  c.train.method = Method::kRw;
  const auto a = report_to_json(run_experiment(c));
  const std::string first_bytes = read_file(dir / "out" / "report.json");
  const auto b = report_to_json(run_experiment(c));
  EXPECT_EQ(report_fingerprint(a), report_fingerprint(b));
  apply_seed(c, 43);
  EXPECT_NE(report_fingerprint(report_to_json(run_experiment(c))),
            report_fingerprint(a));
  EXPECT_FALSE(first_bytes.empty());
}

TEST(Experiment, MeansEqualFoldAverage) {
  const auto dir = scratch_dir("harness");
  ExperimentConfig c = small_config(dir, 3);
  c.train.method = Method::kGdro;
  const auto j = report_to_json(run_experiment(c));
  double f1 = 0, acc = 0, tpr = 0, dp = 0;
  for (const auto& f : j["folds"]) {
    f1 += f["metrics"]["f1"].get<double>();
    acc += f["metrics"]["acc"].get<double>();
    tpr += f["metrics"]["tpr_gap"].get<double>();
    dp += f["metrics"]["dp_gap"].get<double>();
  }
  EXPECT_EQ(j["f1"].get<double>(), f1 / 3.0);
  EXPECT_EQ(j["acc"].get<double>(), acc / 3.0);
  EXPECT_EQ(j["tpr_gap"].get<double>(), tpr / 3.0);
  EXPECT_EQ(j["dp_gap"].get<double>(), dp / 3.0);
}

TEST(Experiment, TestSplitUntouchedByBiasInjection) {
  const auto dir = scratch_dir("harness");
  ExperimentConfig c = small_config(dir, 1);
  c.train.method = Method::kDs;
  c.bias.enabled = true;
  c.bias.majority_map = {{"neutral", "male"}, {"happy", "female"}};
  const std::string before = read_file(c.folds[0].manifest);
  const EvalReport r = run_experiment(c);
  EXPECT_EQ(read_file(c.folds[0].manifest), before);
  EXPECT_EQ(r.folds[0].test_size, 80u);
  const auto kept = read_id_set(fold_dir(c.output_dir, 0) / "retained_ids.txt");
  // Train: 60 + 3 per class; dev: 15 + 0 per class; test: all 80.
  EXPECT_EQ(kept.size(), 126u + 30u + 80u);
  // Downsampling leaves min(60, 3) per cell.
  EXPECT_EQ(r.folds[0].train_size, 12u);
}

TEST(Experiment, GainsAgainstErmReference) {
  const auto dir = scratch_dir("harness");
  ExperimentConfig erm = small_config(dir, 2);
  erm.train.epochs = 20;
  run_experiment(erm);
  ExperimentConfig rw = erm;
  rw.train.method = Method::kRw;
  rw.output_dir = dir / "rw";
  rw.erm_reference = dir / "out" / "report.json";
  const EvalReport r = run_experiment(rw);
  ASSERT_TRUE(r.gains.has_value());
  const ReportSummary e = read_report_summary(dir / "out" / "report.json");
  EXPECT_DOUBLE_EQ(r.gains->tpr_gap,
                   100.0 * (e.means.tpr_gap - r.means.tpr_gap) / e.means.tpr_gap);
  const std::string table = render_table(
      {json::parse(read_file(dir / "rw" / "report.json"))},
      json::parse(read_file(dir / "out" / "report.json")));
  EXPECT_NE(table.find("| erm | 2 |"), std::string::npos);
  EXPECT_NE(table.find("| Gain (rw) |"), std::string::npos);
}

TEST(Experiment, RandomBaselineNeedsNoTraining) {
  const auto dir = scratch_dir("harness");
  ExperimentConfig c = small_config(dir, 1);
  c.random_baseline = true;
  const EvalReport r = run_experiment(c);
  EXPECT_EQ(r.method, "random");
  EXPECT_EQ(r.folds[0].best_epoch, -1);
  EXPECT_FALSE(std::filesystem::exists(fold_dir(c.output_dir, 0) / "checkpoint.mlp1"));
}

TEST(JsonFormat, SeventeenDigitsAndNull) {
  nlohmann::ordered_json j = {{"a", 0.1}, {"b", std::nan("")}, {"c", 3}};
  const std::string s = dump_json(j);
  EXPECT_NE(s.find("0.10000000000000001"), std::string::npos);
  EXPECT_NE(s.find("\"b\": null"), std::string::npos);
  EXPECT_NE(s.find("\"c\": 3"), std::string::npos);
  EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
}

}  // namespace
}  // namespace idifair
