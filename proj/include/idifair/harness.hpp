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

// Experiment orchestration: configuration, per-fold pipeline, baselines,
// gain-vs-ERM reporting and the synthetic data generator.

#ifndef IDIFAIR_HARNESS_HPP_
#define IDIFAIR_HARNESS_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "idifair/dataset.hpp"
#include "idifair/idi.hpp"
#include "idifair/metrics.hpp"
#include "idifair/trainer.hpp"

namespace idifair {

std::string software_version();

struct FoldPaths {
  std::filesystem::path manifest;
  std::filesystem::path embeddings;
};

struct BiasSettings {
  bool enabled = false;
  Attribute attribute = Attribute::kGender;
  int ratio = 20;
  /// class name -> majority attribute token. Empty means the CREMA-D fold-1
  /// gender map.
  std::map<std::string, std::string> majority_map;
};

/// Parsed experiment configuration. Every field has a default; unknown JSON
/// keys are rejected.
struct ExperimentConfig {
  std::vector<FoldPaths> folds;
  std::vector<std::string> classes = LabelSpace().classes();
  /// "random" selects the random baseline; otherwise train.method is used.
  bool random_baseline = false;
  GroupSource group_source = GroupSource::kGroundTruthGender;
  /// Attribute that fairness metrics are measured against.
  Attribute eval_attribute = Attribute::kGender;
  KMeansConfig kmeans;
  TrainConfig train;
  BiasSettings bias;
  std::filesystem::path output_dir;
  std::uint64_t seed = 42;
  std::optional<std::filesystem::path> erm_reference;
  std::optional<double> pseudo_label_accuracy;

  LabelSpace label_space() const { return LabelSpace(classes); }
  std::string method_token() const;
};

/// Relative paths are resolved against `base_dir`.
ExperimentConfig parse_experiment_config(const nlohmann::json& j,
                                         const std::filesystem::path& base_dir);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Canonical JSON form of a config (all defaults spelled out).
nlohmann::ordered_json config_to_json(const ExperimentConfig& config);

/// Propagates the experiment seed to the training, clustering stages.
void apply_seed(ExperimentConfig& config, std::uint64_t seed);

struct MetricMeans {
  double f1 = 0.0;
  double acc = 0.0;
  double tpr_gap = 0.0;
  double dp_gap = 0.0;
};

/// Relative improvement over ERM in percent; TPR/DP gains are positive when
/// the gap shrinks.
struct Gains {
  double f1 = 0.0;
  double acc = 0.0;
  double tpr_gap = 0.0;
  double dp_gap = 0.0;
};

Gains compute_gain(const MetricMeans& method, const MetricMeans& erm);

struct FoldResult {
  int fold = 0;
  MetricSummary metrics;
  int num_eval_groups = 0;
  int num_train_groups = 0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  int best_epoch = -1;
  std::vector<std::string> warnings;
};

struct EvalReport {
  std::string method;
  std::vector<FoldResult> folds;
  MetricMeans means;
  std::optional<Gains> gains;
  nlohmann::ordered_json provenance;
  LabelSpace label_space;
};

MetricMeans mean_over_folds(const std::vector<FoldResult>& folds);

/// Fold count and means recovered from an emitted report.
struct ReportSummary {
  std::string method;
  std::size_t num_folds = 0;
  MetricMeans means;
};
ReportSummary read_report_summary(const std::filesystem::path& path);
ReportSummary report_summary_from_json(const nlohmann::json& j);

/// Same as compute_gain but checks the fold structure first.
Gains compute_gain(const ReportSummary& method, const ReportSummary& erm);

nlohmann::ordered_json report_to_json(const EvalReport& report);

/// Report JSON without the timestamp, for reproducibility checks.
std::string report_fingerprint(const nlohmann::ordered_json& report);

/// Per utterance: a simplex-uniform probability vector (normalized unit
/// exponentials), binarized at 1/|Y|.
PredictionSet random_baseline(std::size_t n, const LabelSpace& label_space,
                              std::uint64_t seed);

/// One fold's manifest records and embeddings.
struct FoldData {
  std::vector<UtteranceRecord> records;
  EmbeddingSet embeddings;
};

FoldData load_fold(const FoldPaths& paths, const LabelSpace& label_space);

/// Row partition of a fold after optional bias injection.
struct PreparedFold {
  std::vector<int> single;  // majority-vote class per record
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> dev_rows;
  std::vector<std::size_t> test_rows;
  /// Retained ids when bias injection ran.
  std::optional<std::vector<std::string>> retained_ids;
};

PreparedFold prepare_fold(const FoldData& data, const ExperimentConfig& config);

/// Training rows (and dev rows) as model inputs with soft targets.
SampleSet make_sample_set(const FoldData& data, const PreparedFold& fold,
                          std::span<const std::size_t> rows);

struct GroupedTrainSet {
  SampleSet train;
  SampleSet dev;
  int num_groups = 1;
  GroupAssignment train_groups;
  std::optional<KMeansModel> cluster_model;
};

/// Builds the train/dev sample sets and their group ids; fits k-means on
/// the training embeddings when the source is cluster.
GroupedTrainSet group_training_data(const FoldData& data,
                                    const PreparedFold& fold,
                                    const ExperimentConfig& config);

struct TrainedFold {
  TrainOutcome outcome;
  int num_groups = 1;
};

/// Groups and trains one fold; writes artifacts into `artifact_dir`.
TrainedFold train_fold(const FoldData& data, const PreparedFold& fold,
                       const ExperimentConfig& config,
                       const std::optional<std::filesystem::path>& artifact_dir);

/// Scores the untouched test split. A null `params` means the random
/// baseline.
FoldResult evaluate_fold(const FoldData& data, const PreparedFold& fold,
                         const ExperimentConfig& config, int fold_index,
                         const Classifier* params);

/// prepare_fold + train_fold + evaluate_fold.
FoldResult run_fold(const FoldData& data, const ExperimentConfig& config,
                    int fold_index,
                    const std::optional<std::filesystem::path>& artifact_dir);

/// Means, gains (when config.erm_reference is set) and provenance.
EvalReport assemble_report(const ExperimentConfig& config,
                           std::vector<FoldResult> folds);

/// Writes dump_json(report_to_json(report)) to `path`.
void write_report(const std::filesystem::path& path, const EvalReport& report);

/// Artifact directory of fold `f` under the output directory.
std::filesystem::path fold_dir(const std::filesystem::path& output_dir,
                               std::size_t f);

/// Loads every fold, runs it, writes report.json (and per-fold artifacts)
/// under config.output_dir when set.
EvalReport run_experiment(const ExperimentConfig& config);

/// Markdown table rendered from one or more report JSON objects.
std::string render_table(const std::vector<nlohmann::json>& reports,
                         const std::optional<nlohmann::json>& erm_report);

// ---------------------------------------------------------------------------
// Synthetic data.

struct SynthSplitCounts {
  /// counts[class][group]
  std::vector<std::vector<int>> counts;
};

struct SynthSpec {
  std::vector<std::string> classes = {"neutral", "happy"};
  Attribute group_attribute = Attribute::kGender;
  SynthSplitCounts train;
  SynthSplitCounts dev;
  SynthSplitCounts test;
  int dim = 32;
  /// Scale of the per-class mean (class c sits on axis c).
  double class_separation = 1.0;
  /// Scale of the per-group offset (group g sits on axis |Y| + g).
  double bias_strength = 0.0;
  double noise = 1.0;
  /// Target = (1 - s) one-hot + s uniform.
  double label_softening = 0.0;
  /// Probability that pseudo_gender disagrees with gender.
  double pseudo_flip_rate = 0.0;

  int num_classes() const { return static_cast<int>(classes.size()); }
  int num_groups() const { return attribute_cardinality(group_attribute); }
};

SynthSpec parse_synth_spec(const nlohmann::json& j);

/// Records in split, class, group order; ids are zero-padded so they sort
/// in file order.
FoldData synth_generate(const SynthSpec& spec, std::uint64_t seed);

/// Writes manifest.tsv and embeddings.emb1 into `dir`.
void write_fold(const std::filesystem::path& dir, const FoldData& data,
                const LabelSpace& label_space);

}  // namespace idifair

#endif  // IDIFAIR_HARNESS_HPP_
