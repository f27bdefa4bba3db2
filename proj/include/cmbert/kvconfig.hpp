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

#ifndef CMBERT_KVCONFIG_HPP_
#define CMBERT_KVCONFIG_HPP_

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace cmbert {

using KvSection = std::map<std::string, std::string>;

// Sectioned key-value text:
//
//   # comment
//   [encoder]
//   hidden = 1024
//
// Keys before the first header belong to the unnamed section "".
// Repeated keys override earlier ones, which is how flag overrides are
// layered on top of a config file.
class KvConfig {
 public:
  static KvConfig parse(std::string_view text);
  static KvConfig load(const std::string& path);

  std::string serialize() const;

  void set(const std::string& section, const std::string& key,
           const std::string& value);
  void merge(const KvConfig& other);

  bool has_section(const std::string& section) const;
  const KvSection& section(const std::string& name) const;
  std::vector<std::string> section_names() const;

 private:
  std::map<std::string, KvSection> sections_;
};

// Typed access to one section; every key read is recorded so `finish()` can
// reject keys nobody asked for.
class KvReader {
 public:
  KvReader(const KvSection& section, std::string name);

  std::string get_string(const std::string& key, const std::string& dflt);
  double get_double(const std::string& key, double dflt);
  int64_t get_int(const std::string& key, int64_t dflt);
  bool get_bool(const std::string& key, bool dflt);

  // Throws ConfigError naming the first unknown key.
  void finish() const;

 private:
  const std::string* find(const std::string& key);

  const KvSection& section_;
  std::string name_;
  std::set<std::string> seen_;
};

}  // namespace cmbert

#endif  // CMBERT_KVCONFIG_HPP_
