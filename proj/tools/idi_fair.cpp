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

// idi-fair: command-line front end.
//
//   idi-fair <subcommand> --config <path> [--seed N] [--out DIR]
//
// Exit status: 0 success, 2 configuration error, 3 data error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "idifair/dataset.hpp"
#include "idifair/error.hpp"
#include "idifair/harness.hpp"
#include "idifair/idi.hpp"
#include "idifair/json_format.hpp"
#include "idifair/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw idifair::Error(idifair::ErrorCode::kInvalidConfig,
                         "cannot open " + path.string());
  }
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw idifair::Error(idifair::ErrorCode::kInvalidConfig,
                         path.string() + ": " + e.what());
  }
}

idifair::ExperimentConfig experiment_config(const Options& opt) {
  idifair::ExperimentConfig config = idifair::load_experiment_config(opt.config);
  if (opt.seed) idifair::apply_seed(config, *opt.seed);
  if (!opt.out.empty()) config.output_dir = opt.out;
  if (config.output_dir.empty()) {
    throw idifair::Error(idifair::ErrorCode::kInvalidConfig,
                         "no output directory (set output_dir or --out)");
  }
  if (config.folds.empty()) {
    throw idifair::Error(idifair::ErrorCode::kInvalidConfig,
                         "config lists no folds");
  }
  fs::create_directories(config.output_dir);
  return config;
}

// Runs `body(fold_index, data, prepared, artifact_dir)` on every fold.
template <typename Body>
void for_each_fold(const idifair::ExperimentConfig& config, Body&& body) {
  const idifair::LabelSpace space = config.label_space();
  for (std::size_t f = 0; f < config.folds.size(); ++f) {
    try {
      const auto data = idifair::load_fold(config.folds[f], space);
      const auto prepared = idifair::prepare_fold(data, config);
      const fs::path dir = idifair::fold_dir(config.output_dir, f);
      fs::create_directories(dir);
      body(f, data, prepared, dir);
    } catch (const idifair::Error& e) {
      throw idifair::Error(e.code(),
                           "fold " + std::to_string(f) + ": " + e.message());
    }
  }
}

int cmd_synth(const Options& opt) {
  json j = read_json(opt.config);
  std::uint64_t seed = j.value("seed", std::uint64_t{42});
  if (opt.seed) seed = *opt.seed;
  const idifair::SynthSpec spec = idifair::parse_synth_spec(j);
  const fs::path out = opt.out.empty() ? fs::path(".") : fs::path(opt.out);
  const auto data = idifair::synth_generate(spec, seed);
  idifair::write_fold(out, data, idifair::LabelSpace(spec.classes));
  std::cout << "wrote " << data.records.size() << " utterances to "
            << out.string() << "\n";
  return 0;
}

int cmd_inject_bias(const Options& opt) {
  auto config = experiment_config(opt);
  config.bias.enabled = true;
  for_each_fold(config, [](std::size_t f, const auto&, const auto& prepared,
                           const fs::path& dir) {
    idifair::write_id_set(dir / "retained_ids.txt", *prepared.retained_ids);
    std::cout << "fold " << f << ": retained " << prepared.retained_ids->size()
              << " utterances\n";
  });
  return 0;
}

int cmd_cluster(const Options& opt) {
  auto config = experiment_config(opt);
  config.group_source = idifair::GroupSource::kCluster;
  for_each_fold(config, [&config](std::size_t f, const auto& data,
                                  const auto& prepared, const fs::path& dir) {
    const auto train = idifair::make_sample_set(data, prepared, prepared.train_rows);
    const auto model = idifair::kmeans_fit(train.x, config.kmeans);
    idifair::write_kmeans_model(dir / "kmeans.kmc1", model);
    std::vector<idifair::UtteranceRecord> kept;
    std::vector<std::size_t> rows;
    for (const auto* part : {&prepared.train_rows, &prepared.dev_rows,
                             &prepared.test_rows}) {
      for (auto i : *part) {
        kept.push_back(data.records[i]);
        rows.push_back(i);
      }
    }
    const auto groups =
        idifair::kmeans_assign(model, data.embeddings.gather(rows));
    idifair::write_cluster_assignments(dir / "clusters.tsv", kept, groups);
    std::cout << "fold " << f << ": k=" << model.k()
              << " inertia=" << model.inertia << "\n";
  });
  return 0;
}

int cmd_train(const Options& opt) {
  const auto config = experiment_config(opt);
  if (config.random_baseline) {
    throw idifair::Error(idifair::ErrorCode::kInvalidConfig,
                         "the random baseline has nothing to train");
  }
  for_each_fold(config, [&config](std::size_t f, const auto& data,
                                  const auto& prepared, const fs::path& dir) {
    const auto trained = idifair::train_fold(data, prepared, config, dir);
    for (const auto& w : trained.outcome.warnings) {
      std::cerr << "fold " << f << ": warning: " << w << "\n";
    }
    std::cout << "fold " << f << ": best epoch " << trained.outcome.best_epoch
              << " dev loss "
              << trained.outcome.dev_loss_history[static_cast<std::size_t>(
                     trained.outcome.best_epoch)]
              << "\n";
  });
  return 0;
}

int cmd_evaluate(const Options& opt) {
  const auto config = experiment_config(opt);
  std::vector<idifair::FoldResult> results;
  for_each_fold(config, [&](std::size_t f, const auto& data,
                            const auto& prepared, const fs::path& dir) {
    if (config.random_baseline) {
      results.push_back(idifair::evaluate_fold(data, prepared, config,
                                               static_cast<int>(f), nullptr));
      return;
    }
    const auto params = idifair::read_checkpoint(dir / "checkpoint.mlp1");
    results.push_back(idifair::evaluate_fold(data, prepared, config,
                                             static_cast<int>(f), &params));
  });
  const auto report = idifair::assemble_report(config, std::move(results));
  idifair::write_report(config.output_dir / "report.json", report);
  std::cout << idifair::dump_json(idifair::report_to_json(report));
  return 0;
}

int cmd_run(const Options& opt) {
  const auto config = experiment_config(opt);
  const auto report = idifair::run_experiment(config);
  std::cout << "F1 " << report.means.f1 << "  ACC " << report.means.acc
            << "  TPR_gap " << report.means.tpr_gap << "  DP_gap "
            << report.means.dp_gap << "\n";
  return 0;
}

// Config: {"reports": [paths...], "erm_reference": path}
int cmd_report(const Options& opt) {
  const json j = read_json(opt.config);
  for (const auto& [key, value] : j.items()) {
    if (key != "reports" && key != "erm_reference") {
      throw idifair::Error(idifair::ErrorCode::kInvalidConfig,
                           "unknown key '" + key + "' in report config");
    }
  }
  const fs::path base = fs::path(opt.config).parent_path();
  auto resolve = [&base](const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : base / path;
  };
  std::vector<json> reports;
  for (const auto& p : j.value("reports", std::vector<std::string>{})) {
    reports.push_back(read_json(resolve(p)));
  }
  std::optional<json> erm;
  if (j.contains("erm_reference")) {
    erm = read_json(resolve(j.at("erm_reference").get<std::string>()));
  }
  const std::string table = idifair::render_table(reports, erm);
  if (!opt.out.empty()) {
    fs::create_directories(opt.out);
    std::ofstream(fs::path(opt.out) / "table.md") << table;
  }
  std::cout << table;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Subgroup-fair multi-label emotion classification over embeddings"};
  app.require_subcommand(1);

  Options opt;
  auto add = [&app, &opt](const std::string& name, const std::string& help) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opt.config, "JSON configuration file")
        ->required();
    sub->add_option("--seed", opt.seed, "Override the experiment seed");
    sub->add_option("--out", opt.out, "Output directory");
    return sub;
  };
  auto* synth = add("synth", "Generate a synthetic manifest + embedding pair");
  auto* inject = add("inject-bias", "Write the retained ids of the 1:ratio protocol");
  auto* cluster = add("cluster", "Fit k-means on training embeddings and export groups");
  auto* train = add("train", "Train one model per fold");
  auto* evaluate = add("evaluate", "Score trained checkpoints on the test split");
  auto* report = add("report", "Render a table (and gains) from report files");
  auto* run = add("run", "Train and evaluate every fold, then write report.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*synth) return cmd_synth(opt);
    if (*inject) return cmd_inject_bias(opt);
    if (*cluster) return cmd_cluster(opt);
    if (*train) return cmd_train(opt);
    if (*evaluate) return cmd_evaluate(opt);
    if (*report) return cmd_report(opt);
    if (*run) return cmd_run(opt);
  } catch (const idifair::Error& e) {
    std::cerr << "idi-fair: " << e.what() << "\n";
    return idifair::is_config_error(e.code()) ? kExitConfig : kExitData;
  } catch (const std::exception& e) {
    std::cerr << "idi-fair: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
