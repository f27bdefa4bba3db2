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

// Deterministic fixtures shared by the unit and acceptance tests.
#ifndef CMBERT_TEST_FIXTURES_HPP_
#define CMBERT_TEST_FIXTURES_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "cmbert/rng.hpp"
#include "cmbert/utf8.hpp"

namespace fixture {

inline std::u32string random_cjk(cmbert::Rng& rng, size_t n) {
  std::u32string s(n, U' ');
  for (auto& c : s) c = static_cast<char32_t>(0x4E00 + rng.below(3000));
  return s;
}

// Rewrites a contiguous block of `fraction` of the characters.
inline std::u32string perturb(cmbert::Rng& rng, std::u32string s, double fraction) {
  const size_t m = static_cast<size_t>(fraction * static_cast<double>(s.size()));
  const size_t at = rng.below(s.size() - m + 1);
  for (size_t i = at; i < at + m; ++i) s[i] = static_cast<char32_t>(0x4E00 + rng.below(3000));
  return s;
}

struct DedupFixture {
  std::vector<std::string> docs;
  size_t planted = 0;  // near-duplicate copies (Jaccard about 0.9)
  size_t exact = 0;    // verbatim copies
  size_t decoys = 0;   // related pairs well below the threshold
};

// `n` documents of random CJK text. Copies always come after their source;
// everything else is unrelated.
inline DedupFixture dedup_fixture(size_t n, uint64_t seed) {
  cmbert::Rng rng(seed);
  DedupFixture f;
  std::vector<std::u32string> docs;
  const size_t base = n * 7 / 10;
  for (size_t i = 0; i < base; ++i) docs.push_back(random_cjk(rng, 300 + rng.below(200)));
  while (docs.size() < n) {
    const auto& src = docs[rng.below(base)];
    const double u = rng.uniform();
    if (u < 0.6) {
      docs.push_back(perturb(rng, src, 0.04));
      ++f.planted;
    } else if (u < 0.75) {
      docs.push_back(src);
      ++f.exact;
    } else {
      docs.push_back(perturb(rng, src, 0.2));
      ++f.decoys;
    }
  }
  for (const auto& d : docs) f.docs.push_back(cmbert::utf8::encode(d));
  return f;
}

}  // namespace fixture

#endif  // CMBERT_TEST_FIXTURES_HPP_
