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

#ifndef CMBERT_WORDMASK_HPP_
#define CMBERT_WORDMASK_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "cmbert/kvconfig.hpp"

namespace cmbert::tok {
class TokenizerModel;
}

namespace cmbert::mask {

enum class TokenKind : uint8_t { kSpecial, kInitial, kContinuation };

// Inclusive token-index range forming one whole word.
struct Span {
  size_t first = 0;
  size_t last = 0;
  size_t size() const { return last - first + 1; }
  bool operator==(const Span&) const = default;
};

struct WordGrouping {
  std::vector<Span> groups;
  // Continuation tokens that opened a span (no preceding word-initial token).
  size_t orphan_continuations = 0;

  size_t maskable_positions() const;
};

std::vector<TokenKind> token_kinds(std::span<const int32_t> tokens,
                                   const tok::TokenizerModel& model);

// A span starts at every word-initial token and extends over the following
// continuation tokens; specials are never covered and always end a span.
WordGrouping group_words(std::span<const TokenKind> kinds);
WordGrouping group_words(std::span<const int32_t> tokens, const tok::TokenizerModel& model);

// Every maskable token as its own span (token-level masking ablation).
WordGrouping split_to_tokens(const WordGrouping& grouping);

enum class DecayShape { kLinear, kCosine };

struct MaskingCurriculum {
  double warmup_fraction = 0.04;
  double r_start = 0.15;
  double r_peak = 0.30;
  double r_end = 0.15;
  uint64_t total_steps = 1;
  DecayShape decay_shape = DecayShape::kLinear;

  // Step at which the rate peaks: round(warmup_fraction * total_steps),
  // clamped into [1, total_steps - 1] when total_steps >= 2.
  uint64_t warmup_steps() const;

  void validate() const;
  KvSection to_kv() const;
  static MaskingCurriculum from_kv(const KvSection& section);
};

// r_start -> r_peak over the warmup steps, then r_peak -> r_end.
double curriculum_rate(const MaskingCurriculum& c, uint64_t step);

enum class Replacement : uint8_t { kMaskToken, kRandomToken, kKeep };

struct ReplacementPolicy {
  double mask_token = 0.8;
  double random_token = 0.1;
  double keep = 0.1;
};

struct MaskingPlan {
  std::vector<size_t> masked_positions;   // ascending
  std::vector<Replacement> replacement;   // parallel to masked_positions
  double realized_rate = 0.0;
};

// Spans are drawn in seeded random order, without replacement, until the
// masked share of maskable positions first reaches `rate`.
MaskingPlan realize_mask(const WordGrouping& grouping, double rate, uint64_t seed,
                         const ReplacementPolicy& policy = {});

// True iff every span is either fully masked or untouched.
bool respects_words(const MaskingPlan& plan, const WordGrouping& grouping);

struct MaskedInputs {
  std::vector<int32_t> input_ids;
  std::vector<int32_t> labels;  // original id at masked positions, else kIgnoreLabel
};

// Applies a plan: [MASK], a uniformly drawn id from `random_pool`, or the
// original token, per the plan's replacement kind.
MaskedInputs apply_mask(std::span<const int32_t> tokens, const MaskingPlan& plan,
                        std::span<const int32_t> random_pool, int32_t mask_id, uint64_t seed);

}  // namespace cmbert::mask

#endif  // CMBERT_WORDMASK_HPP_
