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

#ifndef IDIFAIR_ERROR_HPP_
#define IDIFAIR_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace idifair {

enum class ErrorCode {
  // Data errors.
  kMalformedLine,
  kNegativeProbability,
  kUnknownEnumToken,
  kBadDistributionSum,
  kBadMagic,
  kCountMismatch,
  kNonFinite,
  kTruncated,
  kEmptyLabelRow,
  kMissingMajority,
  kZeroMajority,
  kMissingDemographic,
  kDimensionMismatch,
  kUnseenGroupCell,
  kEmptyTrainingSet,
  kNonFiniteLoss,
  kIo,
  // Configuration errors.
  kInvalidConfig,
  kMissingClusterModel,
};

std::string_view error_code_name(ErrorCode code);

/// True for codes that describe a bad configuration rather than bad data.
bool is_config_error(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI exit status) can branch on the category.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code),
        message_(message) {}

  ErrorCode code() const noexcept { return code_; }
  /// The message without the code prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

}  // namespace idifair

#endif  // IDIFAIR_ERROR_HPP_
