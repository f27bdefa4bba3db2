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

#ifndef CMBERT_CONFIG_HPP_
#define CMBERT_CONFIG_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cmbert/corpus.hpp"
#include "cmbert/encoder.hpp"
#include "cmbert/kvconfig.hpp"
#include "cmbert/optim.hpp"
#include "cmbert/tokenizer.hpp"
#include "cmbert/train.hpp"
#include "cmbert/wordmask.hpp"

namespace cmbert {

// Bumped whenever a section or key changes meaning.
inline constexpr std::string_view kConfigSchemaVersion = "1";

enum class Precision { kFull, kReduced };

struct GlobalSettings {
  uint64_t seed = 0;
  Precision precision = Precision::kFull;
};

struct TokenizerSettings {
  size_t target_size = 32000;
  tok::SizePolicy size_policy = tok::SizePolicy::kRoundTo64;
  size_t max_merges = 0;
};

struct PpplSettings {
  std::vector<size_t> buckets{128, 512, 1024};
  size_t positions_per_seq = 32;
};

struct BenchSettings {
  std::string bucket = "512x4";
  size_t runs = 10;
  size_t warmup = 1;
  uint64_t memory_budget_bytes = 0;
  std::string pooling = "mean";
};

struct SynthSettings {
  size_t docs_per_source = 40;
  size_t min_chars = 200;
  size_t max_chars = 2000;
  size_t heldout_docs = 20;
};

// Every section a run may carry. Parsing fills defaults, validates each
// section and rejects unknown sections and keys; `to_kv` writes the fully
// resolved form, which parses back to the same settings. [paths] is
// free-form and copied verbatim.
//
// When [plan] is present, [schedule], [mask] and [optimizer] are resolved
// as part of the stage plan (their step counts follow plan.steps).
struct RunConfig {
  GlobalSettings global;
  KvSection paths;
  TokenizerSettings tokenizer;
  EncoderConfig encoder;
  optim::ScheduleConfig schedule;
  mask::MaskingCurriculum mask;
  optim::AdamWConfig optimizer;
  std::optional<train::StagePlan> plan;
  corpus::DedupOptions dedup;
  PpplSettings pppl;
  BenchSettings bench;
  SynthSettings synth;

  static RunConfig parse(std::string_view text);
  KvConfig to_kv() const;
  std::string path(const std::string& key) const;  // "" when unset
};

std::vector<size_t> parse_size_list(std::string_view text);

}  // namespace cmbert

#endif  // CMBERT_CONFIG_HPP_
