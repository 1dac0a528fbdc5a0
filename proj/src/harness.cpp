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

#include "idifair/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "idifair/error.hpp"
#include "idifair/json_format.hpp"
#include "idifair/random.hpp"

#ifndef IDIFAIR_VERSION
#define IDIFAIR_VERSION "0.0.0"
#endif

namespace idifair {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

constexpr std::uint64_t kRandomBaselineStream = 21;

void reject_unknown_keys(const json& j, std::initializer_list<const char*> keys,
                         const std::string& where) {
  if (!j.is_object()) {
    throw Error(ErrorCode::kInvalidConfig, where + " must be a JSON object");
  }
  for (const auto& [key, value] : j.items()) {
    const bool known = std::any_of(keys.begin(), keys.end(), [&](const char* k) {
      return key == k;
    });
    if (!known) {
      throw Error(ErrorCode::kInvalidConfig,
                  "unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
void read_opt(const json& j, const char* key, T& out, const std::string& where) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig,
                where + "." + key + ": " + e.what());
  }
}

std::string read_string(const json& j, const char* key, const std::string& where) {
  std::string s;
  read_opt(j, key, s, where);
  return s;
}

std::filesystem::path resolve(const std::filesystem::path& base,
                              const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(
      std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

double gain_up(double method, double erm) { return 100.0 * (method - erm) / erm; }
double gain_down(double method, double erm) { return 100.0 * (erm - method) / erm; }

ordered_json gains_to_json(const Gains& g) {
  return {{"f1", g.f1}, {"acc", g.acc}, {"tpr_gap", g.tpr_gap},
          {"dp_gap", g.dp_gap}};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
}

std::string fixed(double v, int digits) {
  if (!std::isfinite(v)) return "n/a";
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::string percent(double v) {
  return std::isfinite(v) ? fixed(v, 2) + "%" : "n/a";
}

}  // namespace

std::string software_version() { return IDIFAIR_VERSION; }

std::string ExperimentConfig::method_token() const {
  return random_baseline ? "random" : std::string(to_token(train.method));
}

ExperimentConfig parse_experiment_config(const json& j,
                                         const std::filesystem::path& base_dir) {
  reject_unknown_keys(j,
                      {"folds", "classes", "method", "group_source",
                       "eval_attribute", "k", "kmeans", "train", "bias",
                       "output_dir", "seed", "erm_reference",
                       "pseudo_label_accuracy"},
                      "config");
  ExperimentConfig c;
  if (const auto it = j.find("folds"); it != j.end()) {
    if (!it->is_array()) {
      throw Error(ErrorCode::kInvalidConfig, "folds must be an array");
    }
    for (const auto& f : *it) {
      reject_unknown_keys(f, {"manifest", "embeddings"}, "folds[]");
      FoldPaths paths;
      paths.manifest = resolve(base_dir, read_string(f, "manifest", "folds[]"));
      paths.embeddings =
          resolve(base_dir, read_string(f, "embeddings", "folds[]"));
      if (paths.manifest.empty() || paths.embeddings.empty()) {
        throw Error(ErrorCode::kInvalidConfig,
                    "each fold needs manifest and embeddings");
      }
      c.folds.push_back(paths);
    }
  }
  read_opt(j, "classes", c.classes, "config");
  const std::string method = read_string(j, "method", "config");
  if (method == "random") {
    c.random_baseline = true;
  } else if (!method.empty()) {
    c.train.method = parse_method(method);
  }
  if (const auto s = read_string(j, "group_source", "config"); !s.empty()) {
    c.group_source = parse_group_source(s);
  }
  if (const auto s = read_string(j, "eval_attribute", "config"); !s.empty()) {
    try {
      c.eval_attribute = parse_attribute(s);
    } catch (const Error& e) {
      throw Error(ErrorCode::kInvalidConfig, e.what());
    }
  }
  read_opt(j, "k", c.kmeans.k, "config");
  if (const auto it = j.find("kmeans"); it != j.end()) {
    reject_unknown_keys(*it, {"max_iter", "mini_batch_size",
                              "reassignment_ratio", "tolerance"},
                        "kmeans");
    read_opt(*it, "max_iter", c.kmeans.max_iter, "kmeans");
    read_opt(*it, "mini_batch_size", c.kmeans.mini_batch_size, "kmeans");
    read_opt(*it, "reassignment_ratio", c.kmeans.reassignment_ratio, "kmeans");
    read_opt(*it, "tolerance", c.kmeans.tolerance, "kmeans");
  }
  if (const auto it = j.find("train"); it != j.end()) {
    reject_unknown_keys(*it, {"learning_rate", "batch_size", "epochs",
                              "lambda_gd", "cb_beta", "hidden_dim",
                              "adam_beta1", "adam_beta2", "adam_eps"},
                        "train");
    auto& t = c.train;
    read_opt(*it, "learning_rate", t.learning_rate, "train");
    read_opt(*it, "batch_size", t.batch_size, "train");
    read_opt(*it, "epochs", t.epochs, "train");
    read_opt(*it, "lambda_gd", t.lambda_gd, "train");
    read_opt(*it, "cb_beta", t.cb_beta, "train");
    read_opt(*it, "hidden_dim", t.hidden_dim, "train");
    read_opt(*it, "adam_beta1", t.adam_beta1, "train");
    read_opt(*it, "adam_beta2", t.adam_beta2, "train");
    read_opt(*it, "adam_eps", t.adam_eps, "train");
  }
  if (const auto it = j.find("bias"); it != j.end()) {
    reject_unknown_keys(*it, {"enabled", "attribute", "ratio", "majority_map"},
                        "bias");
    read_opt(*it, "enabled", c.bias.enabled, "bias");
    if (const auto s = read_string(*it, "attribute", "bias"); !s.empty()) {
      c.bias.attribute = parse_attribute(s);
    }
    read_opt(*it, "ratio", c.bias.ratio, "bias");
    read_opt(*it, "majority_map", c.bias.majority_map, "bias");
  }
  if (const auto s = read_string(j, "output_dir", "config"); !s.empty()) {
    c.output_dir = resolve(base_dir, s);
  }
  std::uint64_t seed = c.seed;
  read_opt(j, "seed", seed, "config");
  apply_seed(c, seed);
  if (const auto s = read_string(j, "erm_reference", "config"); !s.empty()) {
    c.erm_reference = resolve(base_dir, s);
  }
  if (j.contains("pseudo_label_accuracy")) {
    double acc = 0.0;
    read_opt(j, "pseudo_label_accuracy", acc, "config");
    c.pseudo_label_accuracy = acc;
  }

  // Validate eagerly so configuration mistakes surface before any data work.
  (void)c.label_space();
  if (c.bias.ratio < 1) throw Error(ErrorCode::kInvalidConfig, "bias.ratio < 1");
  if (c.kmeans.k < 1) throw Error(ErrorCode::kInvalidConfig, "k < 1");
  if (c.train.epochs < 1 || c.train.batch_size < 1 || c.train.hidden_dim < 1 ||
      !(c.train.learning_rate > 0.0) || c.train.lambda_gd < 0.0 ||
      !(c.train.cb_beta >= 0.0 && c.train.cb_beta < 1.0)) {
    throw Error(ErrorCode::kInvalidConfig, "invalid train settings");
  }
  const LabelSpace space = c.label_space();
  for (const auto& [cls, token] : c.bias.majority_map) {
    if (!space.index_of(cls)) {
      throw Error(ErrorCode::kInvalidConfig,
                  "majority_map names unknown class '" + cls + "'");
    }
    try {
      parse_attribute_value(c.bias.attribute, token);
    } catch (const Error& e) {
      throw Error(ErrorCode::kInvalidConfig, e.what());
    }
  }
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kInvalidConfig, "cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, path.string() + ": " + e.what());
  }
  return parse_experiment_config(j, path.parent_path());
}

void apply_seed(ExperimentConfig& config, std::uint64_t seed) {
  config.seed = seed;
  config.train.seed = seed;
  config.kmeans.seed = seed;
}

ordered_json config_to_json(const ExperimentConfig& c) {
  ordered_json folds = ordered_json::array();
  for (const auto& f : c.folds) {
    folds.push_back({{"manifest", f.manifest.string()},
                     {"embeddings", f.embeddings.string()}});
  }
  ordered_json majority = ordered_json::object();
  for (const auto& [k, v] : c.bias.majority_map) majority[k] = v;
  ordered_json out = {
      {"folds", folds},
      {"classes", c.classes},
      {"method", c.method_token()},
      {"group_source", std::string(to_token(c.group_source))},
      {"eval_attribute", std::string(to_token(c.eval_attribute))},
      {"k", c.kmeans.k},
      {"kmeans",
       {{"max_iter", c.kmeans.max_iter},
        {"mini_batch_size", c.kmeans.mini_batch_size},
        {"reassignment_ratio", c.kmeans.reassignment_ratio},
        {"tolerance", c.kmeans.tolerance}}},
      {"train",
       {{"learning_rate", c.train.learning_rate},
        {"batch_size", c.train.batch_size},
        {"epochs", c.train.epochs},
        {"lambda_gd", c.train.lambda_gd},
        {"cb_beta", c.train.cb_beta},
        {"hidden_dim", c.train.hidden_dim},
        {"adam_beta1", c.train.adam_beta1},
        {"adam_beta2", c.train.adam_beta2},
        {"adam_eps", c.train.adam_eps}}},
      {"bias",
       {{"enabled", c.bias.enabled},
        {"attribute", std::string(to_token(c.bias.attribute))},
        {"ratio", c.bias.ratio},
        {"majority_map", majority}}},
      {"seed", c.seed},
  };
  if (c.erm_reference) out["erm_reference"] = c.erm_reference->string();
  if (c.pseudo_label_accuracy) {
    out["pseudo_label_accuracy"] = *c.pseudo_label_accuracy;
  }
  return out;
}

Gains compute_gain(const MetricMeans& method, const MetricMeans& erm) {
  return {gain_up(method.f1, erm.f1), gain_up(method.acc, erm.acc),
          gain_down(method.tpr_gap, erm.tpr_gap),
          gain_down(method.dp_gap, erm.dp_gap)};
}

Gains compute_gain(const ReportSummary& method, const ReportSummary& erm) {
  if (method.num_folds != erm.num_folds) {
    throw Error(ErrorCode::kInvalidConfig,
                "fold structure differs: " + std::to_string(method.num_folds) +
                    " vs " + std::to_string(erm.num_folds) + " folds");
  }
  return compute_gain(method.means, erm.means);
}

MetricMeans mean_over_folds(const std::vector<FoldResult>& folds) {
  MetricMeans m;
  if (folds.empty()) return m;
  for (const auto& f : folds) {
    m.f1 += f.metrics.f1;
    m.acc += f.metrics.acc;
    m.tpr_gap += f.metrics.tpr_gap;
    m.dp_gap += f.metrics.dp_gap;
  }
  const auto n = static_cast<double>(folds.size());
  m.f1 /= n;
  m.acc /= n;
  m.tpr_gap /= n;
  m.dp_gap /= n;
  return m;
}

ReportSummary report_summary_from_json(const json& j) {
  ReportSummary s;
  try {
    s.method = j.at("method").get<std::string>();
    s.num_folds = j.at("folds").size();
    s.means.f1 = j.at("f1").get<double>();
    s.means.acc = j.at("acc").get<double>();
    s.means.tpr_gap = j.at("tpr_gap").get<double>();
    s.means.dp_gap = j.at("dp_gap").get<double>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedLine,
                std::string("report is missing fields: ") + e.what());
  }
  return s;
}

ReportSummary read_report_summary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  try {
    return report_summary_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kMalformedLine, path.string() + ": " + e.what());
  }
}

ordered_json report_to_json(const EvalReport& r) {
  ordered_json out;
  out["method"] = r.method;
  out["f1"] = r.means.f1;
  out["acc"] = r.means.acc;
  out["tpr_gap"] = r.means.tpr_gap;
  out["dp_gap"] = r.means.dp_gap;
  ordered_json per_class = ordered_json::object();
  for (std::size_t c = 0; c < r.label_space.size(); ++c) {
    double sum = 0.0;
    for (const auto& f : r.folds) {
      sum += f.metrics.class_f1[static_cast<Eigen::Index>(c)];
    }
    per_class[r.label_space.name(c)] = {
        {"f1", r.folds.empty() ? 0.0 : sum / static_cast<double>(r.folds.size())}};
  }
  out["per_class"] = per_class;
  ordered_json folds = ordered_json::array();
  for (const auto& f : r.folds) {
    ordered_json fj;
    fj["fold"] = f.fold;
    fj["metrics"] = metrics_to_json(f.metrics, r.label_space);
    fj["num_eval_groups"] = f.num_eval_groups;
    fj["num_train_groups"] = f.num_train_groups;
    fj["train_size"] = f.train_size;
    fj["test_size"] = f.test_size;
    fj["best_epoch"] = f.best_epoch;
    fj["warnings"] = f.warnings;
    folds.push_back(fj);
  }
  out["folds"] = folds;
  if (r.gains) out["gain_percent"] = gains_to_json(*r.gains);
  out["provenance"] = r.provenance;
  return out;
}

std::string report_fingerprint(const ordered_json& report) {
  ordered_json copy = report;
  if (copy.contains("provenance")) copy["provenance"].erase("generated_at");
  return dump_json(copy);
}

PredictionSet random_baseline(std::size_t n, const LabelSpace& label_space,
                              std::uint64_t seed) {
  Rng rng(derive_seed(seed, {kRandomBaselineStream}));
  PredictionSet out;
  out.probs.resize(static_cast<Eigen::Index>(n),
                   static_cast<Eigen::Index>(label_space.size()));
  for (Eigen::Index i = 0; i < out.probs.rows(); ++i) {
    for (Eigen::Index c = 0; c < out.probs.cols(); ++c) {
      out.probs(i, c) = rng.exponential();
    }
    out.probs.row(i) /= out.probs.row(i).sum();
  }
  out.binary = binarize(out.probs);
  return out;
}

FoldData load_fold(const FoldPaths& paths, const LabelSpace& label_space) {
  FoldData data;
  data.records = load_manifest(paths.manifest, label_space);
  data.embeddings = load_embeddings(paths.embeddings, data.records.size());
  return data;
}

std::filesystem::path fold_dir(const std::filesystem::path& output_dir,
                               std::size_t f) {
  return output_dir / ("fold_" + std::to_string(f));
}

PreparedFold prepare_fold(const FoldData& data, const ExperimentConfig& config) {
  const LabelSpace space = config.label_space();
  const auto& records = data.records;
  if (data.embeddings.rows() != records.size()) {
    throw Error(ErrorCode::kCountMismatch, "embeddings do not match manifest");
  }
  for (const auto& r : records) {
    if (static_cast<std::size_t>(r.label_dist.size()) != space.size()) {
      throw Error(ErrorCode::kDimensionMismatch,
                  r.utt_id + ": label distribution size");
    }
  }
  PreparedFold fold;
  fold.single = majority_vote(records);

  std::vector<bool> keep(records.size(), true);
  if (config.bias.enabled) {
    BiasInjectionConfig bias;
    bias.attribute = config.bias.attribute;
    bias.ratio = config.bias.ratio;
    bias.seed = config.seed;
    if (config.bias.majority_map.empty()) {
      bias.majority_map = crema_d_fold1_gender_majority(space);
    } else {
      for (const auto& [cls, token] : config.bias.majority_map) {
        bias.majority_map[static_cast<int>(*space.index_of(cls))] =
            parse_attribute_value(config.bias.attribute, token);
      }
    }
    auto retained = inject_bias(records, fold.single, bias);
    const std::set<std::string> retained_set(retained.begin(), retained.end());
    for (std::size_t i = 0; i < records.size(); ++i) {
      keep[i] = retained_set.count(records[i].utt_id) > 0;
    }
    fold.retained_ids = std::move(retained);
  }

  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!keep[i]) continue;
    switch (records[i].split) {
      case Split::kTrain: fold.train_rows.push_back(i); break;
      case Split::kDev: fold.dev_rows.push_back(i); break;
      case Split::kTest: fold.test_rows.push_back(i); break;
    }
  }
  if (fold.test_rows.empty()) {
    throw Error(ErrorCode::kEmptyTrainingSet, "fold has no test utterances");
  }
  return fold;
}

SampleSet make_sample_set(const FoldData& data, const PreparedFold& fold,
                          std::span<const std::size_t> rows) {
  SampleSet s;
  s.x = data.embeddings.gather(rows);
  const Eigen::Index y =
      data.records.empty() ? 0 : data.records.front().label_dist.size();
  s.targets.resize(static_cast<Eigen::Index>(rows.size()), y);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    s.targets.row(static_cast<Eigen::Index>(i)) =
        data.records[rows[i]].label_dist.transpose();
    s.classes.push_back(fold.single[rows[i]]);
  }
  return s;
}

namespace {

std::vector<UtteranceRecord> pick_records(const FoldData& data,
                                          std::span<const std::size_t> rows) {
  std::vector<UtteranceRecord> out;
  out.reserve(rows.size());
  for (auto i : rows) out.push_back(data.records[i]);
  return out;
}

}  // namespace

GroupedTrainSet group_training_data(const FoldData& data,
                                    const PreparedFold& fold,
                                    const ExperimentConfig& config) {
  if (fold.train_rows.empty()) {
    throw Error(ErrorCode::kEmptyTrainingSet, "fold has no training data");
  }
  GroupedTrainSet out;
  out.train = make_sample_set(data, fold, fold.train_rows);
  out.dev = make_sample_set(data, fold, fold.dev_rows);
  const auto train_records = pick_records(data, fold.train_rows);
  if (config.group_source == GroupSource::kCluster) {
    KMeansModel model = kmeans_fit(out.train.x, config.kmeans);
    out.train_groups = kmeans_assign(model, out.train.x);
    if (out.dev.size() > 0) out.dev.groups = kmeans_assign(model, out.dev.x).ids;
    out.cluster_model = std::move(model);
  } else {
    out.train_groups = assign_groups(train_records, config.group_source);
    out.dev.groups =
        assign_groups(pick_records(data, fold.dev_rows), config.group_source).ids;
  }
  out.train.groups = out.train_groups.ids;
  out.num_groups = out.train_groups.num_groups;
  return out;
}

TrainedFold train_fold(const FoldData& data, const PreparedFold& fold,
                       const ExperimentConfig& config,
                       const std::optional<std::filesystem::path>& artifact_dir) {
  if (artifact_dir && fold.retained_ids) {
    write_id_set(*artifact_dir / "retained_ids.txt", *fold.retained_ids);
  }
  TrainedFold out;
  GroupedTrainSet grouped;
  if (config.train.method == Method::kErm) {
    // ERM ignores groups; skip grouping so NA demographics do not matter.
    if (fold.train_rows.empty()) {
      throw Error(ErrorCode::kEmptyTrainingSet, "fold has no training data");
    }
    grouped.train = make_sample_set(data, fold, fold.train_rows);
    grouped.dev = make_sample_set(data, fold, fold.dev_rows);
    grouped.train.groups.assign(fold.train_rows.size(), 0);
  } else {
    grouped = group_training_data(data, fold, config);
    if (artifact_dir && grouped.cluster_model) {
      write_kmeans_model(*artifact_dir / "kmeans.kmc1", *grouped.cluster_model);
      write_cluster_assignments(*artifact_dir / "clusters.tsv",
                                pick_records(data, fold.train_rows),
                                grouped.train_groups);
    }
  }
  out.num_groups = grouped.num_groups;
  out.outcome = train(grouped.train, grouped.dev, grouped.num_groups,
                      config.train);
  if (artifact_dir) {
    write_checkpoint(*artifact_dir / "checkpoint.mlp1", out.outcome.best_params);
    write_training_log(*artifact_dir / "train_log.jsonl", out.outcome);
  }
  return out;
}

FoldResult evaluate_fold(const FoldData& data, const PreparedFold& fold,
                         const ExperimentConfig& config, int fold_index,
                         const Classifier* params) {
  const LabelSpace space = config.label_space();
  const auto test_records = pick_records(data, fold.test_rows);
  FoldResult result;
  result.fold = fold_index;
  result.test_size = fold.test_rows.size();
  result.train_size = fold.train_rows.size();

  PredictionSet predictions;
  if (params == nullptr) {
    predictions = random_baseline(
        fold.test_rows.size(), space,
        derive_seed(config.seed, {static_cast<std::uint64_t>(fold_index)}));
  } else {
    predictions.probs =
        predict_proba(*params, data.embeddings.gather(fold.test_rows));
    predictions.binary = binarize(predictions.probs);
  }
  const BinaryMatrix truth = threshold_labels(test_records, space.threshold());

  // Fairness groups: attribute values present in the test split, compacted.
  std::set<int> present;
  for (const auto& r : test_records) {
    const int v = attribute_value(r, config.eval_attribute);
    if (v >= 0) present.insert(v);
  }
  if (present.empty()) {
    throw Error(ErrorCode::kMissingDemographic,
                "no test utterance has " +
                    std::string(to_token(config.eval_attribute)));
  }
  std::vector<int> eval_groups;
  eval_groups.reserve(test_records.size());
  for (const auto& r : test_records) {
    const int v = attribute_value(r, config.eval_attribute);
    eval_groups.push_back(
        v < 0 ? -1
              : static_cast<int>(std::distance(present.begin(), present.find(v))));
  }
  result.num_eval_groups = static_cast<int>(present.size());
  result.metrics = evaluate_predictions(predictions.binary, truth, eval_groups,
                                        result.num_eval_groups);
  return result;
}

FoldResult run_fold(const FoldData& data, const ExperimentConfig& config,
                    int fold_index,
                    const std::optional<std::filesystem::path>& artifact_dir) {
  const PreparedFold fold = prepare_fold(data, config);
  if (config.random_baseline) {
    return evaluate_fold(data, fold, config, fold_index, nullptr);
  }
  const TrainedFold trained = train_fold(data, fold, config, artifact_dir);
  FoldResult result = evaluate_fold(data, fold, config, fold_index,
                                    &trained.outcome.best_params);
  result.best_epoch = trained.outcome.best_epoch;
  result.train_size = trained.outcome.train_size;
  result.num_train_groups = trained.num_groups;
  result.warnings = trained.outcome.warnings;
  return result;
}

EvalReport assemble_report(const ExperimentConfig& config,
                           std::vector<FoldResult> folds) {
  EvalReport report;
  report.method = config.method_token();
  report.label_space = config.label_space();
  report.folds = std::move(folds);
  report.means = mean_over_folds(report.folds);

  if (config.erm_reference) {
    const ReportSummary erm = read_report_summary(*config.erm_reference);
    const ReportSummary self{report.method, report.folds.size(), report.means};
    report.gains = compute_gain(self, erm);
  }

  ordered_json prov;
  const ordered_json cfg = config_to_json(config);
  prov["config_hash"] = fnv1a_hex(cfg.dump());
  prov["software_version"] = software_version();
  prov["seed"] = config.seed;
  prov["method"] = report.method;
  prov["group_source"] = std::string(to_token(config.group_source));
  prov["lambda_gd"] = config.train.lambda_gd;
  if (config.group_source == GroupSource::kCluster) prov["k"] = config.kmeans.k;
  prov["cb_beta"] = config.train.cb_beta;
  prov["cb_beta_note"] =
      "class-balanced beta is a convention, not a published value";
  if (config.pseudo_label_accuracy) {
    prov["pseudo_label_accuracy"] = *config.pseudo_label_accuracy;
  }
  prov["config"] = cfg;
  prov["generated_at"] = utc_timestamp();
  report.provenance = prov;
  return report;
}

void write_report(const std::filesystem::path& path, const EvalReport& report) {
  write_text(path, dump_json(report_to_json(report)));
}

EvalReport run_experiment(const ExperimentConfig& config) {
  if (config.folds.empty()) {
    throw Error(ErrorCode::kInvalidConfig, "config lists no folds");
  }
  const LabelSpace space = config.label_space();
  if (!config.output_dir.empty()) {
    std::filesystem::create_directories(config.output_dir);
  }
  std::vector<FoldResult> results;
  for (std::size_t f = 0; f < config.folds.size(); ++f) {
    try {
      const FoldData data = load_fold(config.folds[f], space);
      std::optional<std::filesystem::path> artifacts;
      if (!config.output_dir.empty()) {
        artifacts = fold_dir(config.output_dir, f);
        std::filesystem::create_directories(*artifacts);
      }
      results.push_back(run_fold(data, config, static_cast<int>(f), artifacts));
    } catch (const Error& e) {
      throw Error(e.code(), "fold " + std::to_string(f) + ": " + e.message());
    }
  }
  EvalReport report = assemble_report(config, std::move(results));
  if (!config.output_dir.empty()) {
    write_report(config.output_dir / "report.json", report);
  }
  return report;
}

std::string render_table(const std::vector<json>& reports,
                         const std::optional<json>& erm_report) {
  std::ostringstream os;
  os << "| Method | Folds | F1 | ACC | TPR_gap | DP_gap |\n"
     << "|---|---|---|---|---|---|\n";
  auto row = [&os](const ReportSummary& s) {
    os << "| " << s.method << " | " << s.num_folds << " | "
       << fixed(s.means.f1, 3) << " | " << fixed(s.means.acc, 3) << " | "
       << fixed(s.means.tpr_gap, 3) << " | " << fixed(s.means.dp_gap, 3)
       << " |\n";
  };
  std::optional<ReportSummary> erm;
  if (erm_report) {
    erm = report_summary_from_json(*erm_report);
    row(*erm);
  }
  for (const auto& r : reports) row(report_summary_from_json(r));
  if (erm) {
    for (const auto& r : reports) {
      const ReportSummary s = report_summary_from_json(r);
      const Gains g = compute_gain(s, *erm);
      os << "| Gain (" << s.method << ") | | " << percent(g.f1) << " | "
         << percent(g.acc) << " | " << percent(g.tpr_gap) << " | "
         << percent(g.dp_gap) << " |\n";
    }
  }
  return os.str();
}

}  // namespace idifair
