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

#include <algorithm>
#include <array>
#include <cstdio>

#include "idifair/error.hpp"
#include "idifair/harness.hpp"
#include "idifair/random.hpp"

namespace idifair {
namespace {

using nlohmann::json;

constexpr std::uint64_t kSynthStream = 31;

SynthSplitCounts parse_counts(const json& j, const char* key,
                              std::size_t classes, std::size_t groups) {
  SynthSplitCounts out;
  const auto it = j.find(key);
  if (it == j.end()) {
    out.counts.assign(classes, std::vector<int>(groups, 0));
    return out;
  }
  try {
    out.counts = it->get<std::vector<std::vector<int>>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string(key) + ": " + e.what());
  }
  return out;
}

void check_counts(const SynthSplitCounts& s, const SynthSpec& spec,
                  const char* name) {
  if (s.counts.size() != spec.classes.size()) {
    throw Error(ErrorCode::kInvalidConfig,
                std::string(name) + ": need one row per class");
  }
  for (const auto& row : s.counts) {
    if (row.size() != static_cast<std::size_t>(spec.num_groups())) {
      throw Error(ErrorCode::kInvalidConfig,
                  std::string(name) + ": need one count per group");
    }
    for (int v : row) {
      if (v < 0) {
        throw Error(ErrorCode::kInvalidConfig,
                    std::string(name) + ": negative count");
      }
    }
  }
}

void set_attribute(UtteranceRecord& r, Attribute a, int value) {
  switch (a) {
    case Attribute::kGender:
      r.gender = static_cast<Gender>(value);
      break;
    case Attribute::kPseudoGender:
      r.pseudo_gender = static_cast<Gender>(value);
      break;
    case Attribute::kRace:
      r.race = static_cast<Race>(value);
      break;
    case Attribute::kAge:
      r.age_group = static_cast<AgeGroup>(value);
      break;
  }
}

}  // namespace

SynthSpec parse_synth_spec(const json& j) {
  if (!j.is_object()) {
    throw Error(ErrorCode::kInvalidConfig, "synth spec must be an object");
  }
  for (const auto& [key, value] : j.items()) {
    static const std::vector<std::string> known = {
        "classes", "group_attribute", "train", "dev", "test", "dim",
        "class_separation", "bias_strength", "noise", "label_softening",
        "pseudo_flip_rate", "seed"};
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw Error(ErrorCode::kInvalidConfig, "unknown synth key '" + key + "'");
    }
  }
  SynthSpec s;
  try {
    if (j.contains("classes")) s.classes = j.at("classes").get<std::vector<std::string>>();
    if (j.contains("group_attribute")) {
      s.group_attribute = parse_attribute(j.at("group_attribute").get<std::string>());
    }
    if (j.contains("dim")) s.dim = j.at("dim").get<int>();
    if (j.contains("class_separation")) s.class_separation = j.at("class_separation").get<double>();
    if (j.contains("bias_strength")) s.bias_strength = j.at("bias_strength").get<double>();
    if (j.contains("noise")) s.noise = j.at("noise").get<double>();
    if (j.contains("label_softening")) s.label_softening = j.at("label_softening").get<double>();
    if (j.contains("pseudo_flip_rate")) s.pseudo_flip_rate = j.at("pseudo_flip_rate").get<double>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("synth spec: ") + e.what());
  } catch (const Error& e) {
    throw Error(ErrorCode::kInvalidConfig, e.what());
  }
  const auto nc = s.classes.size();
  const auto ng = static_cast<std::size_t>(s.num_groups());
  s.train = parse_counts(j, "train", nc, ng);
  s.dev = parse_counts(j, "dev", nc, ng);
  s.test = parse_counts(j, "test", nc, ng);
  return s;
}

FoldData synth_generate(const SynthSpec& spec, std::uint64_t seed) {
  const LabelSpace space(spec.classes);
  const int num_classes = spec.num_classes();
  const int num_groups = spec.num_groups();
  check_counts(spec.train, spec, "train");
  check_counts(spec.dev, spec, "dev");
  check_counts(spec.test, spec, "test");
  if (spec.dim < num_classes + num_groups) {
    throw Error(ErrorCode::kInvalidConfig,
                "dim must be at least |Y| + G = " +
                    std::to_string(num_classes + num_groups));
  }
  if (!(spec.label_softening >= 0.0 && spec.label_softening < 1.0) ||
      !(spec.pseudo_flip_rate >= 0.0 && spec.pseudo_flip_rate <= 1.0) ||
      spec.noise < 0.0) {
    throw Error(ErrorCode::kInvalidConfig,
                "label_softening in [0,1), pseudo_flip_rate in [0,1], noise >= 0");
  }

  Rng rng(derive_seed(seed, {kSynthStream}));
  FoldData out;
  std::vector<Eigen::RowVectorXf> rows;
  const std::array<std::pair<Split, const SynthSplitCounts*>, 3> splits = {{
      {Split::kTrain, &spec.train},
      {Split::kDev, &spec.dev},
      {Split::kTest, &spec.test},
  }};
  for (const auto& [split, counts] : splits) {
    for (int c = 0; c < num_classes; ++c) {
      for (int g = 0; g < num_groups; ++g) {
        const int n = counts->counts[static_cast<std::size_t>(c)]
                                    [static_cast<std::size_t>(g)];
        for (int i = 0; i < n; ++i) {
          UtteranceRecord r;
          char id[64];
          std::snprintf(id, sizeof(id), "%s_c%02d_g%d_%06d",
                        std::string(to_token(split)).c_str(), c, g, i);
          r.utt_id = id;
          r.split = split;
          set_attribute(r, spec.group_attribute, g);
          if (spec.group_attribute == Attribute::kGender) {
            const bool flip = rng.uniform() < spec.pseudo_flip_rate;
            r.pseudo_gender = static_cast<Gender>(flip ? 1 - g : g);
          }
          r.label_dist = Eigen::VectorXd::Constant(
              num_classes, spec.label_softening / num_classes);
          r.label_dist[c] += 1.0 - spec.label_softening;

          Eigen::RowVectorXf x(spec.dim);
          for (int k = 0; k < spec.dim; ++k) {
            x[k] = static_cast<float>(spec.noise * rng.normal());
          }
          x[c] += static_cast<float>(spec.class_separation);
          x[num_classes + g] += static_cast<float>(spec.bias_strength);
          out.records.push_back(std::move(r));
          rows.push_back(std::move(x));
        }
      }
    }
  }
  out.embeddings.values.resize(static_cast<Eigen::Index>(rows.size()), spec.dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.embeddings.values.row(static_cast<Eigen::Index>(i)) = rows[i];
  }
  return out;
}

void write_fold(const std::filesystem::path& dir, const FoldData& data,
                const LabelSpace& label_space) {
  std::filesystem::create_directories(dir);
  write_manifest(dir / "manifest.tsv", data.records, label_space);
  write_embeddings(dir / "embeddings.emb1", data.embeddings);
}

}  // namespace idifair
