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

// Data model, manifest/embedding file formats, hard-label derivation and the
// class-conditional bias-injection protocol.

#ifndef IDIFAIR_DATASET_HPP_
#define IDIFAIR_DATASET_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace idifair {

/// n x |Y| matrix of 0/1 entries.
using BinaryMatrix = Eigen::MatrixXi;

/// Row-major single-precision storage, matching the on-disk layout.
using EmbeddingMatrix =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Ordered set of emotion classes. The order is fixed for an experiment.
class LabelSpace {
 public:
  /// angry, disgust, fear, happy, neutral, sad.
  LabelSpace();
  explicit LabelSpace(std::vector<std::string> classes);

  std::size_t size() const { return classes_.size(); }
  const std::string& name(std::size_t c) const { return classes_[c]; }
  const std::vector<std::string>& classes() const { return classes_; }
  std::optional<std::size_t> index_of(std::string_view name) const;

  /// 1 / |Y|, the binarization threshold used everywhere.
  double threshold() const { return 1.0 / static_cast<double>(size()); }

  bool operator==(const LabelSpace&) const = default;

 private:
  std::vector<std::string> classes_;
};

enum class Split { kTrain, kDev, kTest };
enum class Gender { kMale, kFemale, kNA };
enum class Race { kCaucasian, kAfricanAmerican, kAsian, kNA };
enum class AgeGroup { kYoung, kMiddle, kElderly, kNA };

std::string_view to_token(Split v);
std::string_view to_token(Gender v);
std::string_view to_token(Race v);
std::string_view to_token(AgeGroup v);

Split parse_split(std::string_view token);
Gender parse_gender(std::string_view token);
Race parse_race(std::string_view token);
AgeGroup parse_age_group(std::string_view token);

struct UtteranceRecord {
  std::string utt_id;
  Split split = Split::kTrain;
  Gender gender = Gender::kNA;
  Race race = Race::kNA;
  AgeGroup age_group = AgeGroup::kNA;
  Gender pseudo_gender = Gender::kNA;
  Eigen::VectorXd label_dist;

  bool operator==(const UtteranceRecord&) const = default;
};

/// A demographic column of the manifest.
enum class Attribute { kGender, kRace, kAge, kPseudoGender };

std::string_view to_token(Attribute a);
Attribute parse_attribute(std::string_view token);

/// Number of non-NA values the attribute can take (2 or 3).
int attribute_cardinality(Attribute a);

/// Integer id of the record's attribute value in enum order, -1 for NA.
int attribute_value(const UtteranceRecord& record, Attribute a);

/// Parses a value token of the given attribute ("male", "asian", ...).
int parse_attribute_value(Attribute a, std::string_view token);

struct EmbeddingSet {
  EmbeddingMatrix values;

  std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(values.cols()); }

  /// Rows at the given indices, widened to double.
  Eigen::MatrixXd gather(std::span<const std::size_t> rows) const;
};

/// Exact manifest header for a label space.
std::string manifest_header(const LabelSpace& label_space);

std::vector<UtteranceRecord> parse_manifest(std::istream& in,
                                            const LabelSpace& label_space);
std::vector<UtteranceRecord> load_manifest(const std::filesystem::path& path,
                                           const LabelSpace& label_space);
void write_manifest(const std::filesystem::path& path,
                    std::span<const UtteranceRecord> records,
                    const LabelSpace& label_space);

/// Reads an EMB1 file. The row count must equal `expected_n`.
EmbeddingSet load_embeddings(const std::filesystem::path& path,
                             std::size_t expected_n);
void write_embeddings(const std::filesystem::path& path,
                      const EmbeddingSet& embeddings);

/// multi(i, c) = 1 iff label_dist[i][c] >= threshold.
BinaryMatrix threshold_labels(std::span<const UtteranceRecord> records,
                              double threshold);

/// Argmax of each distribution; ties go to the lowest class index.
std::vector<int> majority_vote(std::span<const UtteranceRecord> records);

struct BiasInjectionConfig {
  Attribute attribute = Attribute::kGender;
  int ratio = 20;
  /// class index -> majority attribute value.
  std::map<int, int> majority_map;
  std::uint64_t seed = 42;
};

/// Majority map observed in CREMA-D fold 1 (male: angry, disgust, neutral;
/// female: fear, happy, sad), keyed by the given label space's indices.
std::map<int, int> crema_d_fold1_gender_majority(const LabelSpace& label_space);

/// Applies the 1:ratio protocol to the train and dev splits. Within each
/// split and class every majority-group sample is kept and each other group
/// is cut to floor(n_majority / ratio) by a seeded shuffle. Test records are
/// always retained. Returns the retained utt_ids, sorted.
std::vector<std::string> inject_bias(std::span<const UtteranceRecord> records,
                                     std::span<const int> single,
                                     const BiasInjectionConfig& config);

void write_id_set(const std::filesystem::path& path,
                  std::span<const std::string> ids);
std::vector<std::string> read_id_set(const std::filesystem::path& path);

}  // namespace idifair

#endif  // IDIFAIR_DATASET_HPP_
