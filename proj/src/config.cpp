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

#include "cmbert/config.hpp"

#include <set>

#include "cmbert/common.hpp"

namespace cmbert {

std::vector<size_t> parse_size_list(std::string_view text) {
  std::vector<size_t> out;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t end = text.find(',', pos);
    if (end == std::string_view::npos) end = text.size();
    const int64_t v = parse_int(text.substr(pos, end - pos));
    if (v < 1) throw ConfigError("list values must be >= 1");
    out.push_back(static_cast<size_t>(v));
    pos = end + 1;
  }
  return out;
}

namespace {

std::string join(const std::vector<size_t>& xs) {
  std::string s;
  for (size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + std::to_string(xs[i]);
  return s;
}

size_t get_count(KvReader& r, const std::string& section, const char* key, size_t dflt) {
  const int64_t v = r.get_int(key, static_cast<int64_t>(dflt));
  if (v < 0) throw ConfigError(section + "." + key + " must be >= 0");
  return static_cast<size_t>(v);
}

const std::set<std::string>& known_sections() {
  static const std::set<std::string> s = {"",      "global", "paths",     "tokenizer",
                                          "encoder", "schedule", "mask",  "optimizer",
                                          "plan",  "dedup",  "pppl",      "bench", "synth"};
  return s;
}

}  // namespace

RunConfig RunConfig::parse(std::string_view text) {
  const KvConfig kv = KvConfig::parse(text);
  for (const auto& name : kv.section_names()) {
    if (!known_sections().count(name)) throw ConfigError("unknown config section [" + name + "]");
  }
  if (kv.has_section("") && !kv.section("").empty()) {
    throw ConfigError("config key '" + kv.section("").begin()->first +
                      "' appears before any [section] header");
  }
  const KvSection empty;
  auto section = [&](const char* name) -> const KvSection& {
    return kv.has_section(name) ? kv.section(name) : empty;
  };

  RunConfig c;
  {
    KvReader r(section("global"), "global");
    const int64_t seed = r.get_int("seed", 0);
    if (seed < 0) throw ConfigError("global.seed must be >= 0");
    c.global.seed = static_cast<uint64_t>(seed);
    const std::string p = r.get_string("precision", "full");
    if (p == "full") {
      c.global.precision = Precision::kFull;
    } else if (p == "reduced") {
      c.global.precision = Precision::kReduced;
    } else {
      throw ConfigError("global.precision must be full or reduced");
    }
    r.finish();
  }
  c.paths = section("paths");
  {
    KvReader r(section("tokenizer"), "tokenizer");
    c.tokenizer.target_size = get_count(r, "tokenizer", "target_size", c.tokenizer.target_size);
    c.tokenizer.size_policy =
        tok::parse_size_policy(r.get_string("size_policy", std::string(tok::to_string(c.tokenizer.size_policy))));
    c.tokenizer.max_merges = get_count(r, "tokenizer", "max_merges", c.tokenizer.max_merges);
    r.finish();
  }
  c.encoder = EncoderConfig::from_kv(section("encoder"));

  if (kv.has_section("plan")) {
    KvConfig pk;
    for (const char* name : {"plan", "schedule", "mask", "optimizer"}) {
      for (const auto& [k, v] : section(name)) pk.set(name, k, v);
    }
    if (!section("plan").count("seed")) pk.set("plan", "seed", std::to_string(c.global.seed));
    c.plan = train::StagePlan::from_kv(pk);
    c.schedule = c.plan->schedule;
    c.schedule.total_steps = c.plan->steps;
    c.mask = c.plan->curriculum;
    c.optimizer = c.plan->optimizer;
  } else {
    if (kv.has_section("schedule")) c.schedule = optim::ScheduleConfig::from_kv(section("schedule"));
    if (kv.has_section("mask")) c.mask = mask::MaskingCurriculum::from_kv(section("mask"));
    c.optimizer = optim::AdamWConfig::from_kv(section("optimizer"));
  }
  {
    KvReader r(section("dedup"), "dedup");
    c.dedup.threshold = r.get_double("threshold", c.dedup.threshold);
    c.dedup.k = get_count(r, "dedup", "k", c.dedup.k);
    c.dedup.shingle_size = get_count(r, "dedup", "shingle_size", c.dedup.shingle_size);
    c.dedup.bands = get_count(r, "dedup", "bands", c.dedup.bands);
    c.dedup.rows = get_count(r, "dedup", "rows", c.dedup.rows);
    c.dedup.near_miss_margin = r.get_double("near_miss_margin", c.dedup.near_miss_margin);
    r.finish();
    c.dedup.seed = c.global.seed;
    c.dedup.validate();
  }
  {
    KvReader r(section("pppl"), "pppl");
    c.pppl.buckets = parse_size_list(r.get_string("buckets", join(c.pppl.buckets)));
    c.pppl.positions_per_seq = get_count(r, "pppl", "positions_per_seq", c.pppl.positions_per_seq);
    r.finish();
    if (c.pppl.positions_per_seq == 0) throw ConfigError("pppl.positions_per_seq must be >= 1");
  }
  {
    KvReader r(section("bench"), "bench");
    c.bench.bucket = r.get_string("bucket", c.bench.bucket);
    c.bench.runs = get_count(r, "bench", "runs", c.bench.runs);
    c.bench.warmup = get_count(r, "bench", "warmup", c.bench.warmup);
    c.bench.memory_budget_bytes = get_count(r, "bench", "memory_budget_bytes", c.bench.memory_budget_bytes);
    c.bench.pooling = r.get_string("pooling", c.bench.pooling);
    r.finish();
    if (c.bench.runs < 3) throw ConfigError("bench.runs must be >= 3");
    if (c.bench.pooling != "mean" && c.bench.pooling != "cls") {
      throw ConfigError("bench.pooling must be mean or cls");
    }
  }
  {
    KvReader r(section("synth"), "synth");
    c.synth.docs_per_source = get_count(r, "synth", "docs_per_source", c.synth.docs_per_source);
    c.synth.min_chars = get_count(r, "synth", "min_chars", c.synth.min_chars);
    c.synth.max_chars = get_count(r, "synth", "max_chars", c.synth.max_chars);
    c.synth.heldout_docs = get_count(r, "synth", "heldout_docs", c.synth.heldout_docs);
    r.finish();
    if (c.synth.min_chars == 0 || c.synth.max_chars < c.synth.min_chars) {
      throw ConfigError("synth: need 0 < min_chars <= max_chars");
    }
  }
  return c;
}

KvConfig RunConfig::to_kv() const {
  KvConfig kv;
  kv.set("global", "seed", std::to_string(global.seed));
  kv.set("global", "precision", global.precision == Precision::kFull ? "full" : "reduced");
  for (const auto& [k, v] : paths) kv.set("paths", k, v);
  kv.set("tokenizer", "target_size", std::to_string(tokenizer.target_size));
  kv.set("tokenizer", "size_policy", std::string(tok::to_string(tokenizer.size_policy)));
  kv.set("tokenizer", "max_merges", std::to_string(tokenizer.max_merges));
  for (const auto& [k, v] : encoder.to_kv()) kv.set("encoder", k, v);
  if (plan) {
    kv.merge(plan->to_kv());
  } else {
    for (const auto& [k, v] : schedule.to_kv()) kv.set("schedule", k, v);
    for (const auto& [k, v] : mask.to_kv()) kv.set("mask", k, v);
    for (const auto& [k, v] : optimizer.to_kv()) kv.set("optimizer", k, v);
  }
  kv.set("dedup", "threshold", format_double(dedup.threshold));
  kv.set("dedup", "k", std::to_string(dedup.k));
  kv.set("dedup", "shingle_size", std::to_string(dedup.shingle_size));
  kv.set("dedup", "bands", std::to_string(dedup.bands));
  kv.set("dedup", "rows", std::to_string(dedup.rows));
  kv.set("dedup", "near_miss_margin", format_double(dedup.near_miss_margin));
  kv.set("pppl", "buckets", join(pppl.buckets));
  kv.set("pppl", "positions_per_seq", std::to_string(pppl.positions_per_seq));
  kv.set("bench", "bucket", bench.bucket);
  kv.set("bench", "runs", std::to_string(bench.runs));
  kv.set("bench", "warmup", std::to_string(bench.warmup));
  kv.set("bench", "memory_budget_bytes", std::to_string(bench.memory_budget_bytes));
  kv.set("bench", "pooling", bench.pooling);
  kv.set("synth", "docs_per_source", std::to_string(synth.docs_per_source));
  kv.set("synth", "min_chars", std::to_string(synth.min_chars));
  kv.set("synth", "max_chars", std::to_string(synth.max_chars));
  kv.set("synth", "heldout_docs", std::to_string(synth.heldout_docs));
  return kv;
}

std::string RunConfig::path(const std::string& key) const {
  auto it = paths.find(key);
  return it == paths.end() ? std::string() : it->second;
}

}  // namespace cmbert
