// Copyright 2026 The cmbert Authors
// SPDX-License-Identifier: Apache-2.0
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

#include "cmbert/kvconfig.hpp"

#include "cmbert/common.hpp"

namespace cmbert {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

}  // namespace

KvConfig KvConfig::parse(std::string_view text) {
  KvConfig cfg;
  std::string current;
  size_t line_no = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("line " + std::to_string(line_no) +
                          ": malformed section header");
      }
      current = std::string(trim(line.substr(1, line.size() - 2)));
      cfg.sections_[current];
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    std::string key(trim(line.substr(0, eq)));
    if (key.empty()) {
      throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    }
    cfg.sections_[current][key] = std::string(trim(line.substr(eq + 1)));
  }
  return cfg;
}

KvConfig KvConfig::load(const std::string& path) { return parse(read_file(path)); }

std::string KvConfig::serialize() const {
  std::string out;
  bool first = true;
  for (const auto& [name, section] : sections_) {
    if (!name.empty()) {
      if (!first) out += "\n";
      out += "[" + name + "]\n";
    }
    for (const auto& [k, v] : section) out += k + " = " + v + "\n";
    first = false;
  }
  return out;
}

void KvConfig::set(const std::string& section, const std::string& key,
                   const std::string& value) {
  sections_[section][key] = value;
}

void KvConfig::merge(const KvConfig& other) {
  for (const auto& [name, section] : other.sections_) {
    for (const auto& [k, v] : section) sections_[name][k] = v;
  }
}

bool KvConfig::has_section(const std::string& section) const {
  return sections_.count(section) != 0;
}

const KvSection& KvConfig::section(const std::string& name) const {
  static const KvSection kEmpty;
  auto it = sections_.find(name);
  return it == sections_.end() ? kEmpty : it->second;
}

std::vector<std::string> KvConfig::section_names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : sections_) out.push_back(name);
  return out;
}

KvReader::KvReader(const KvSection& section, std::string name)
    : section_(section), name_(std::move(name)) {}

const std::string* KvReader::find(const std::string& key) {
  seen_.insert(key);
  auto it = section_.find(key);
  return it == section_.end() ? nullptr : &it->second;
}

std::string KvReader::get_string(const std::string& key, const std::string& dflt) {
  const std::string* v = find(key);
  return v ? *v : dflt;
}

double KvReader::get_double(const std::string& key, double dflt) {
  const std::string* v = find(key);
  if (!v) return dflt;
  try {
    return parse_double(*v);
  } catch (const ConfigError&) {
    throw ConfigError(name_ + "." + key + ": expected a number, got '" + *v + "'");
  }
}

int64_t KvReader::get_int(const std::string& key, int64_t dflt) {
  const std::string* v = find(key);
  if (!v) return dflt;
  try {
    return parse_int(*v);
  } catch (const ConfigError&) {
    throw ConfigError(name_ + "." + key + ": expected an integer, got '" + *v + "'");
  }
}

bool KvReader::get_bool(const std::string& key, bool dflt) {
  const std::string* v = find(key);
  if (!v) return dflt;
  if (*v == "true" || *v == "1") return true;
  if (*v == "false" || *v == "0") return false;
  throw ConfigError(name_ + "." + key + ": expected true/false, got '" + *v + "'");
}

void KvReader::finish() const {
  for (const auto& [k, _] : section_) {
    if (!seen_.count(k)) {
      throw ConfigError("unknown key '" + k + "' in section [" + name_ + "]");
    }
  }
}

}  // namespace cmbert
