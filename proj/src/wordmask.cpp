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

#include "cmbert/wordmask.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cmbert/common.hpp"
#include "cmbert/encoder.hpp"
#include "cmbert/rng.hpp"
#include "cmbert/tokenizer.hpp"

namespace cmbert::mask {

size_t WordGrouping::maskable_positions() const {
  size_t n = 0;
  for (const auto& s : groups) n += s.size();
  return n;
}

std::vector<TokenKind> token_kinds(std::span<const int32_t> tokens,
                                   const tok::TokenizerModel& model) {
  std::vector<TokenKind> kinds;
  kinds.reserve(tokens.size());
  for (int32_t id : tokens) {
    if (model.is_special(id)) {
      kinds.push_back(TokenKind::kSpecial);
    } else if (model.is_continuation(id)) {
      kinds.push_back(TokenKind::kContinuation);
    } else {
      kinds.push_back(TokenKind::kInitial);
    }
  }
  return kinds;
}

WordGrouping group_words(std::span<const TokenKind> kinds) {
  WordGrouping g;
  bool open = false;
  for (size_t i = 0; i < kinds.size(); ++i) {
    switch (kinds[i]) {
      case TokenKind::kSpecial:
        open = false;
        break;
      case TokenKind::kInitial:
        g.groups.push_back({i, i});
        open = true;
        break;
      case TokenKind::kContinuation:
        if (open) {
          g.groups.back().last = i;
        } else {
          ++g.orphan_continuations;
          g.groups.push_back({i, i});
          open = true;
        }
        break;
    }
  }
  return g;
}

WordGrouping group_words(std::span<const int32_t> tokens, const tok::TokenizerModel& model) {
  const auto kinds = token_kinds(tokens, model);
  return group_words(kinds);
}

WordGrouping split_to_tokens(const WordGrouping& grouping) {
  WordGrouping out;
  out.orphan_continuations = grouping.orphan_continuations;
  for (const auto& s : grouping.groups) {
    for (size_t i = s.first; i <= s.last; ++i) out.groups.push_back({i, i});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Curriculum

uint64_t MaskingCurriculum::warmup_steps() const {
  auto w = static_cast<uint64_t>(std::llround(warmup_fraction * static_cast<double>(total_steps)));
  if (total_steps >= 2) w = std::clamp<uint64_t>(w, 1, total_steps - 1);
  return w;
}

void MaskingCurriculum::validate() const {
  if (!(warmup_fraction > 0 && warmup_fraction < 1)) {
    throw ConfigError("mask.warmup_fraction must be in (0, 1)");
  }
  if (!(r_start > 0 && r_start <= r_peak && r_peak <= 1)) {
    throw ConfigError("mask rates must satisfy 0 < r_start <= r_peak <= 1");
  }
  if (!(r_end > 0 && r_end <= 1)) throw ConfigError("mask.r_end must be in (0, 1]");
  if (total_steps == 0) throw ConfigError("mask.total_steps must be >= 1");
}

KvSection MaskingCurriculum::to_kv() const {
  KvSection s;
  s["warmup_fraction"] = format_double(warmup_fraction);
  s["r_start"] = format_double(r_start);
  s["r_peak"] = format_double(r_peak);
  s["r_end"] = format_double(r_end);
  s["total_steps"] = std::to_string(total_steps);
  s["decay_shape"] = decay_shape == DecayShape::kLinear ? "linear" : "cosine";
  return s;
}

MaskingCurriculum MaskingCurriculum::from_kv(const KvSection& section) {
  MaskingCurriculum c;
  KvReader r(section, "mask");
  c.warmup_fraction = r.get_double("warmup_fraction", c.warmup_fraction);
  c.r_start = r.get_double("r_start", c.r_start);
  c.r_peak = r.get_double("r_peak", c.r_peak);
  c.r_end = r.get_double("r_end", c.r_end);
  const int64_t total = r.get_int("total_steps", static_cast<int64_t>(c.total_steps));
  if (total < 1) throw ConfigError("mask.total_steps must be >= 1");
  c.total_steps = static_cast<uint64_t>(total);
  const std::string shape = r.get_string("decay_shape", "linear");
  if (shape == "linear") {
    c.decay_shape = DecayShape::kLinear;
  } else if (shape == "cosine") {
    c.decay_shape = DecayShape::kCosine;
  } else {
    throw ConfigError("mask.decay_shape must be linear or cosine");
  }
  r.finish();
  c.validate();
  return c;
}

double curriculum_rate(const MaskingCurriculum& c, uint64_t step) {
  if (step > c.total_steps) {
    throw ContractError("curriculum_rate: step " + std::to_string(step) + " beyond total " +
                        std::to_string(c.total_steps));
  }
  const uint64_t w = c.warmup_steps();
  if (step <= w) {
    if (w == 0) return c.r_peak;
    return std::lerp(c.r_start, c.r_peak, static_cast<double>(step) / static_cast<double>(w));
  }
  const double q =
      static_cast<double>(step - w) / static_cast<double>(c.total_steps - w);
  if (c.decay_shape == DecayShape::kLinear) return std::lerp(c.r_peak, c.r_end, q);
  if (step == c.total_steps) return c.r_end;
  return c.r_end + (c.r_peak - c.r_end) * 0.5 * (1.0 + std::cos(std::numbers::pi * q));
}

// ---------------------------------------------------------------------------
// Realization

MaskingPlan realize_mask(const WordGrouping& grouping, double rate, uint64_t seed,
                         const ReplacementPolicy& policy) {
  if (!(rate > 0 && rate <= 1)) {
    throw ContractError("realize_mask: rate must be in (0, 1]");
  }
  MaskingPlan plan;
  const size_t maskable = grouping.maskable_positions();
  if (maskable == 0) return plan;

  Rng rng(derive_seed(seed, "mask.order"));
  std::vector<size_t> order(grouping.groups.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);

  const double target = rate * static_cast<double>(maskable);
  size_t masked = 0;
  std::vector<size_t> chosen;
  for (size_t idx : order) {
    if (static_cast<double>(masked) >= target) break;
    chosen.push_back(idx);
    masked += grouping.groups[idx].size();
  }
  std::sort(chosen.begin(), chosen.end());

  Rng repl(derive_seed(seed, "mask.replacement"));
  const double total = policy.mask_token + policy.random_token + policy.keep;
  for (size_t idx : chosen) {
    const Span& s = grouping.groups[idx];
    for (size_t p = s.first; p <= s.last; ++p) {
      plan.masked_positions.push_back(p);
      const double u = repl.uniform() * total;
      if (u < policy.mask_token) {
        plan.replacement.push_back(Replacement::kMaskToken);
      } else if (u < policy.mask_token + policy.random_token) {
        plan.replacement.push_back(Replacement::kRandomToken);
      } else {
        plan.replacement.push_back(Replacement::kKeep);
      }
    }
  }
  plan.realized_rate = static_cast<double>(masked) / static_cast<double>(maskable);
  return plan;
}

bool respects_words(const MaskingPlan& plan, const WordGrouping& grouping) {
  if (!std::is_sorted(plan.masked_positions.begin(), plan.masked_positions.end())) return false;
  auto is_masked = [&](size_t p) {
    return std::binary_search(plan.masked_positions.begin(), plan.masked_positions.end(), p);
  };
  size_t covered = 0;
  for (const auto& s : grouping.groups) {
    const bool head = is_masked(s.first);
    for (size_t p = s.first; p <= s.last; ++p) {
      if (is_masked(p) != head) return false;
    }
    if (head) covered += s.size();
  }
  // Nothing outside the spans (e.g. a special token) may be masked.
  return covered == plan.masked_positions.size();
}

MaskedInputs apply_mask(std::span<const int32_t> tokens, const MaskingPlan& plan,
                        std::span<const int32_t> random_pool, int32_t mask_id, uint64_t seed) {
  MaskedInputs out;
  out.input_ids.assign(tokens.begin(), tokens.end());
  out.labels.assign(tokens.size(), kIgnoreLabel);
  Rng rng(derive_seed(seed, "mask.random_token"));
  for (size_t i = 0; i < plan.masked_positions.size(); ++i) {
    const size_t p = plan.masked_positions[i];
    if (p >= tokens.size()) throw ContractError("masking plan position outside the sequence");
    out.labels[p] = tokens[p];
    switch (plan.replacement[i]) {
      case Replacement::kMaskToken:
        out.input_ids[p] = mask_id;
        break;
      case Replacement::kRandomToken:
        if (!random_pool.empty()) out.input_ids[p] = random_pool[rng.below(random_pool.size())];
        break;
      case Replacement::kKeep:
        break;
    }
  }
  return out;
}

}  // namespace cmbert::mask
