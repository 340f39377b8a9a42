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

#include "gpmia/serde.hpp"

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "gpmia/errors.hpp"

namespace gpmia::serde {

std::string real17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string json_array17(const std::vector<double>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i > 0) out += ",";
    out += real17(v[i]);
  }
  out += "]";
  return out;
}

std::string fnv1a_hex(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return buf;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path,
                     const std::string& content) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << content;
  if (!out) throw IoError("write failed: " + path.string());
}

nlohmann::json load_json_file(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  nlohmann::json doc = nlohmann::json::parse(text, nullptr, false);
  if (doc.is_discarded()) {
    throw IoError("invalid JSON in " + path.string());
  }
  return doc;
}

void save_json_file(const std::filesystem::path& path,
                    const nlohmann::json& doc) {
  write_text_file(path, doc.dump(2) + "\n");
}

void reject_unknown_keys(const nlohmann::json& obj,
                         const std::vector<std::string>& allowed,
                         const std::string& context) {
  if (!obj.is_object()) {
    throw ConfigError(context + ": expected an object");
  }
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const auto& key : allowed) {
      if (item.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw ConfigError(context + ": unknown key \"" + item.key() + "\"");
    }
  }
}

}  // namespace gpmia::serde
