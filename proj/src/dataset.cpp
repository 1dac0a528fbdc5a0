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

#include "idifair/dataset.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>
#include <unordered_set>

#include "binary_io.hpp"
#include "idifair/error.hpp"
#include "idifair/random.hpp"

namespace idifair {
namespace {

constexpr std::size_t kDemographicColumns = 6;

template <typename Enum, std::size_t N>
Enum parse_token(std::string_view token,
                 const std::array<std::string_view, N>& names,
                 std::string_view what) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == token) return static_cast<Enum>(i);
  }
  throw Error(ErrorCode::kUnknownEnumToken,
              std::string(what) + " token '" + std::string(token) + "'");
}

constexpr std::array<std::string_view, 3> kSplitNames = {"train", "dev", "test"};
constexpr std::array<std::string_view, 3> kGenderNames = {"male", "female", "NA"};
constexpr std::array<std::string_view, 4> kRaceNames = {
    "caucasian", "african_american", "asian", "NA"};
constexpr std::array<std::string_view, 4> kAgeNames = {"young", "middle",
                                                       "elderly", "NA"};
constexpr std::array<std::string_view, 4> kAttributeNames = {
    "gender", "race", "age_group", "pseudo_gender"};

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

double parse_double(std::string_view token, std::size_t line_no) {
  double v = 0.0;
  const auto [ptr, ec] =
      std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw Error(ErrorCode::kMalformedLine,
                "line " + std::to_string(line_no) + ": bad number '" +
                    std::string(token) + "'");
  }
  return v;
}

std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

LabelSpace::LabelSpace()
    : LabelSpace({"angry", "disgust", "fear", "happy", "neutral", "sad"}) {}

LabelSpace::LabelSpace(std::vector<std::string> classes)
    : classes_(std::move(classes)) {
  if (classes_.size() < 2) {
    throw Error(ErrorCode::kInvalidConfig, "label space needs at least 2 classes");
  }
  std::unordered_set<std::string> seen;
  for (const auto& c : classes_) {
    if (c.empty() || !seen.insert(c).second) {
      throw Error(ErrorCode::kInvalidConfig,
                  "class names must be unique and non-empty: '" + c + "'");
    }
  }
}

std::optional<std::size_t> LabelSpace::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    if (classes_[i] == name) return i;
  }
  return std::nullopt;
}

std::string_view to_token(Split v) { return kSplitNames[static_cast<int>(v)]; }
std::string_view to_token(Gender v) { return kGenderNames[static_cast<int>(v)]; }
std::string_view to_token(Race v) { return kRaceNames[static_cast<int>(v)]; }
std::string_view to_token(AgeGroup v) { return kAgeNames[static_cast<int>(v)]; }
std::string_view to_token(Attribute a) {
  return kAttributeNames[static_cast<int>(a)];
}

Split parse_split(std::string_view t) {
  return parse_token<Split>(t, kSplitNames, "split");
}
Gender parse_gender(std::string_view t) {
  return parse_token<Gender>(t, kGenderNames, "gender");
}
Race parse_race(std::string_view t) {
  return parse_token<Race>(t, kRaceNames, "race");
}
AgeGroup parse_age_group(std::string_view t) {
  return parse_token<AgeGroup>(t, kAgeNames, "age_group");
}
Attribute parse_attribute(std::string_view t) {
  return parse_token<Attribute>(t, kAttributeNames, "attribute");
}

int attribute_cardinality(Attribute a) {
  switch (a) {
    case Attribute::kGender:
    case Attribute::kPseudoGender:
      return 2;
    case Attribute::kRace:
    case Attribute::kAge:
      return 3;
  }
  return 0;
}

int attribute_value(const UtteranceRecord& r, Attribute a) {
  int v = 0;
  switch (a) {
    case Attribute::kGender: v = static_cast<int>(r.gender); break;
    case Attribute::kPseudoGender: v = static_cast<int>(r.pseudo_gender); break;
    case Attribute::kRace: v = static_cast<int>(r.race); break;
    case Attribute::kAge: v = static_cast<int>(r.age_group); break;
  }
  return v < attribute_cardinality(a) ? v : -1;
}

int parse_attribute_value(Attribute a, std::string_view token) {
  int v = 0;
  switch (a) {
    case Attribute::kGender:
    case Attribute::kPseudoGender:
      v = static_cast<int>(parse_gender(token));
      break;
    case Attribute::kRace: v = static_cast<int>(parse_race(token)); break;
    case Attribute::kAge: v = static_cast<int>(parse_age_group(token)); break;
  }
  if (v >= attribute_cardinality(a)) {
    throw Error(ErrorCode::kUnknownEnumToken,
                "NA is not a group value for " + std::string(to_token(a)));
  }
  return v;
}

Eigen::MatrixXd EmbeddingSet::gather(std::span<const std::size_t> rows) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), values.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) =
        values.row(static_cast<Eigen::Index>(rows[i])).cast<double>();
  }
  return out;
}

std::string manifest_header(const LabelSpace& label_space) {
  std::string header = "utt_id\tsplit\tgender\trace\tage_group\tpseudo_gender";
  for (const auto& c : label_space.classes()) header += "\tp_" + c;
  return header;
}

std::vector<UtteranceRecord> parse_manifest(std::istream& in,
                                            const LabelSpace& label_space) {
  std::string line;
  if (!std::getline(in, line)) {
    throw Error(ErrorCode::kMalformedLine, "empty manifest");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != manifest_header(label_space)) {
    throw Error(ErrorCode::kMalformedLine, "unexpected manifest header");
  }
  const std::size_t columns = kDemographicColumns + label_space.size();
  std::vector<UtteranceRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    if (fields.size() != columns) {
      throw Error(ErrorCode::kMalformedLine,
                  "line " + std::to_string(line_no) + ": expected " +
                      std::to_string(columns) + " columns, got " +
                      std::to_string(fields.size()));
    }
    UtteranceRecord r;
    r.utt_id = std::string(fields[0]);
    if (r.utt_id.empty()) {
      throw Error(ErrorCode::kMalformedLine,
                  "line " + std::to_string(line_no) + ": empty utt_id");
    }
    r.split = parse_split(fields[1]);
    r.gender = parse_gender(fields[2]);
    r.race = parse_race(fields[3]);
    r.age_group = parse_age_group(fields[4]);
    r.pseudo_gender = parse_gender(fields[5]);
    r.label_dist.resize(static_cast<Eigen::Index>(label_space.size()));
    for (std::size_t c = 0; c < label_space.size(); ++c) {
      const double p = parse_double(fields[kDemographicColumns + c], line_no);
      if (!std::isfinite(p)) {
        throw Error(ErrorCode::kNonFinite, "line " + std::to_string(line_no));
      }
      if (p < 0.0) {
        throw Error(ErrorCode::kNegativeProbability,
                    "line " + std::to_string(line_no));
      }
      r.label_dist[static_cast<Eigen::Index>(c)] = p;
    }
    const double sum = r.label_dist.sum();
    if (std::abs(sum - 1.0) > 1e-3) {
      throw Error(ErrorCode::kBadDistributionSum,
                  "line " + std::to_string(line_no) + ": sum " +
                      format_double(sum));
    }
    // Already-normalized rows are left untouched so files round-trip exactly.
    if (std::abs(sum - 1.0) > 1e-12) r.label_dist /= sum;
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<UtteranceRecord> load_manifest(const std::filesystem::path& path,
                                           const LabelSpace& label_space) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return parse_manifest(in, label_space);
}

void write_manifest(const std::filesystem::path& path,
                    std::span<const UtteranceRecord> records,
                    const LabelSpace& label_space) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << manifest_header(label_space) << '\n';
  for (const auto& r : records) {
    out << r.utt_id << '\t' << to_token(r.split) << '\t' << to_token(r.gender)
        << '\t' << to_token(r.race) << '\t' << to_token(r.age_group) << '\t'
        << to_token(r.pseudo_gender);
    for (Eigen::Index c = 0; c < r.label_dist.size(); ++c) {
      out << '\t' << format_double(r.label_dist[c]);
    }
    out << '\n';
  }
}

EmbeddingSet load_embeddings(const std::filesystem::path& path,
                             std::size_t expected_n) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  const std::string what = path.string();
  binary_io::expect_magic(in, "EMB1", what);
  const std::uint32_t n = binary_io::read_u32(in, what);
  const std::uint32_t d = binary_io::read_u32(in, what);
  if (n != expected_n) {
    throw Error(ErrorCode::kCountMismatch,
                what + ": " + std::to_string(n) + " rows, expected " +
                    std::to_string(expected_n));
  }
  EmbeddingSet set;
  set.values.resize(n, d);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j = 0; j < d; ++j) {
      const float v = binary_io::read_f32(in, what);
      if (!std::isfinite(v)) {
        throw Error(ErrorCode::kNonFinite,
                    what + ": row " + std::to_string(i) + " col " +
                        std::to_string(j));
      }
      set.values(i, j) = v;
    }
  }
  return set;
}

void write_embeddings(const std::filesystem::path& path,
                      const EmbeddingSet& embeddings) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write("EMB1", 4);
  binary_io::write_u32(out, static_cast<std::uint32_t>(embeddings.rows()));
  binary_io::write_u32(out, static_cast<std::uint32_t>(embeddings.dim()));
  for (Eigen::Index i = 0; i < embeddings.values.rows(); ++i) {
    for (Eigen::Index j = 0; j < embeddings.values.cols(); ++j) {
      binary_io::write_f32(out, embeddings.values(i, j));
    }
  }
}

BinaryMatrix threshold_labels(std::span<const UtteranceRecord> records,
                              double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw Error(ErrorCode::kInvalidConfig, "threshold must lie in (0, 1)");
  }
  const Eigen::Index y =
      records.empty() ? 0 : records.front().label_dist.size();
  BinaryMatrix multi(static_cast<Eigen::Index>(records.size()), y);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    multi.row(row) = (records[i].label_dist.array() >= threshold)
                         .cast<int>()
                         .matrix()
                         .transpose();
    if (multi.row(row).sum() == 0) {
      throw Error(ErrorCode::kEmptyLabelRow, records[i].utt_id);
    }
  }
  return multi;
}

std::vector<int> majority_vote(std::span<const UtteranceRecord> records) {
  std::vector<int> single;
  single.reserve(records.size());
  for (const auto& r : records) {
    Eigen::Index best = 0;
    r.label_dist.maxCoeff(&best);  // first maximal index
    single.push_back(static_cast<int>(best));
  }
  return single;
}

std::map<int, int> crema_d_fold1_gender_majority(const LabelSpace& label_space) {
  const std::array<std::pair<std::string_view, Gender>, 6> table = {{
      {"angry", Gender::kMale},
      {"disgust", Gender::kMale},
      {"fear", Gender::kFemale},
      {"happy", Gender::kFemale},
      {"neutral", Gender::kMale},
      {"sad", Gender::kFemale},
  }};
  std::map<int, int> map;
  for (const auto& [name, gender] : table) {
    if (auto c = label_space.index_of(name)) {
      map[static_cast<int>(*c)] = static_cast<int>(gender);
    }
  }
  return map;
}

std::vector<std::string> inject_bias(std::span<const UtteranceRecord> records,
                                     std::span<const int> single,
                                     const BiasInjectionConfig& config) {
  if (config.ratio < 1) {
    throw Error(ErrorCode::kInvalidConfig, "ratio must be >= 1");
  }
  if (single.size() != records.size()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "single labels do not match records");
  }
  const int groups = attribute_cardinality(config.attribute);

  // pools[(split, class, group)] = ids
  std::map<std::tuple<int, int, int>, std::vector<std::string>> pools;
  std::vector<std::string> retained;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.split == Split::kTest) {
      retained.push_back(r.utt_id);
      continue;
    }
    const int g = attribute_value(r, config.attribute);
    if (g < 0) {
      throw Error(ErrorCode::kMissingDemographic,
                  r.utt_id + " has NA " + std::string(to_token(config.attribute)));
    }
    pools[{static_cast<int>(r.split), single[i], g}].push_back(r.utt_id);
  }

  std::set<std::pair<int, int>> split_classes;
  for (const auto& [key, ids] : pools) {
    split_classes.insert({std::get<0>(key), std::get<1>(key)});
  }
  for (const auto& [split, cls] : split_classes) {
    const auto it = config.majority_map.find(cls);
    if (it == config.majority_map.end()) {
      throw Error(ErrorCode::kMissingMajority,
                  "no majority group for class " + std::to_string(cls));
    }
    const int major = it->second;
    const auto major_pool = pools.find({split, cls, major});
    if (major_pool == pools.end() || major_pool->second.empty()) {
      throw Error(ErrorCode::kZeroMajority,
                  "class " + std::to_string(cls) + " has no majority-group " +
                      "samples in split " +
                      std::string(to_token(static_cast<Split>(split))));
    }
    const std::size_t n_major = major_pool->second.size();
    retained.insert(retained.end(), major_pool->second.begin(),
                    major_pool->second.end());
    const std::size_t quota = n_major / static_cast<std::size_t>(config.ratio);
    for (int g = 0; g < groups; ++g) {
      if (g == major) continue;
      const auto pool_it = pools.find({split, cls, g});
      if (pool_it == pools.end()) continue;
      std::vector<std::string> minority = pool_it->second;
      std::sort(minority.begin(), minority.end());
      Rng rng(derive_seed(config.seed,
                          {static_cast<std::uint64_t>(split),
                           static_cast<std::uint64_t>(cls),
                           static_cast<std::uint64_t>(g)}));
      rng.shuffle(std::span<std::string>(minority));
      const std::size_t keep = std::min(quota, minority.size());
      retained.insert(retained.end(), minority.begin(),
                      minority.begin() + static_cast<std::ptrdiff_t>(keep));
    }
  }
  std::sort(retained.begin(), retained.end());
  return retained;
}

void write_id_set(const std::filesystem::path& path,
                  std::span<const std::string> ids) {
  std::vector<std::string> sorted(ids.begin(), ids.end());
  std::sort(sorted.begin(), sorted.end());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  for (const auto& id : sorted) out << id << '\n';
}

std::vector<std::string> read_id_set(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) ids.push_back(line);
  }
  return ids;
}

}  // namespace idifair
