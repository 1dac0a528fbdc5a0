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

// JSON emission with binary64 values written at 17 significant digits.

#ifndef IDIFAIR_JSON_FORMAT_HPP_
#define IDIFAIR_JSON_FORMAT_HPP_

#include <cstdint>
#include <string>

#include <json.hpp>

namespace idifair {

/// Pretty-printed (2-space) dump; floats as %.17g, non-finite floats as null.
std::string dump_json(const nlohmann::ordered_json& value);

/// 64-bit FNV-1a of a byte string, as 16 lowercase hex digits.
std::string fnv1a_hex(const std::string& bytes);

}  // namespace idifair

#endif  // IDIFAIR_JSON_FORMAT_HPP_
