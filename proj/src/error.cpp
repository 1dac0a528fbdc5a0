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

#include "idifair/error.hpp"

namespace idifair {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMalformedLine: return "MalformedLine";
    case ErrorCode::kNegativeProbability: return "NegativeProbability";
    case ErrorCode::kUnknownEnumToken: return "UnknownEnumToken";
    case ErrorCode::kBadDistributionSum: return "BadDistributionSum";
    case ErrorCode::kBadMagic: return "BadMagic";
    case ErrorCode::kCountMismatch: return "CountMismatch";
    case ErrorCode::kNonFinite: return "NonFinite";
    case ErrorCode::kTruncated: return "Truncated";
    case ErrorCode::kEmptyLabelRow: return "EmptyLabelRow";
    case ErrorCode::kMissingMajority: return "MissingMajority";
    case ErrorCode::kZeroMajority: return "ZeroMajority";
    case ErrorCode::kMissingDemographic: return "MissingDemographic";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kUnseenGroupCell: return "UnseenGroupCell";
    case ErrorCode::kEmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kIo: return "Io";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kMissingClusterModel: return "MissingClusterModel";
  }
  return "Unknown";
}

bool is_config_error(ErrorCode code) {
  return code == ErrorCode::kInvalidConfig ||
         code == ErrorCode::kMissingClusterModel ||
         code == ErrorCode::kMissingMajority;
}

}  // namespace idifair
