// Copyright 2026 The gpmia Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef GPMIA_SERDE_HPP_
#define GPMIA_SERDE_HPP_

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace gpmia::serde {

// Decimal with 17 significant digits; parses back to the identical double.
std::string real17(double v);
std::string json_array17(const std::vector<double>& v);

// FNV-1a 64-bit as 16 hex chars, used for config fingerprints.
std::string fnv1a_hex(std::string_view s);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path,
                     const std::string& content);

nlohmann::json load_json_file(const std::filesystem::path& path);
void save_json_file(const std::filesystem::path& path,
                    const nlohmann::json& doc);

// Throws ConfigError naming any key of `obj` not listed in `allowed`.
void reject_unknown_keys(const nlohmann::json& obj,
                         const std::vector<std::string>& allowed,
                         const std::string& context);

}  // namespace gpmia::serde

#endif  // GPMIA_SERDE_HPP_
