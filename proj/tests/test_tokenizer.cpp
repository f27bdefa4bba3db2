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

// BPE trainer, encoder/decoder, size policy, compression and budget.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "cmbert/common.hpp"
#include "cmbert/corpus.hpp"
#include "cmbert/encoder.hpp"
#include "cmbert/rng.hpp"
#include "cmbert/tokenizer.hpp"
#include "cmbert/utf8.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cmbert;

namespace {

using Merge = std::pair<std::string, std::string>;

// Textbook BPE over whole words given as symbol lists: count every adjacent
// pair weighted by word frequency, take the most frequent (ties to the
// smallest pair), merge left to right, repeat.
std::vector<Merge> naive_bpe(const std::map<std::string, int>& words, size_t merges) {
  std::vector<std::pair<std::vector<std::string>, int>> ws;
  for (const auto& [w, f] : words) ws.push_back({utf8::split_chars(w), f});
  std::vector<Merge> out;
  while (out.size() < merges) {
    std::map<Merge, long> counts;
    for (const auto& [syms, f] : ws) {
      for (size_t i = 0; i + 1 < syms.size(); ++i) counts[{syms[i], syms[i + 1]}] += f;
    }
    if (counts.empty()) break;
    Merge best;
    long best_count = 0;
    for (const auto& [pair, c] : counts) {
      if (c > best_count) {
        best = pair;
        best_count = c;
      }
    }
    out.push_back(best);
    for (auto& [syms, f] : ws) {
      std::vector<std::string> next;
      for (size_t i = 0; i < syms.size();) {
        if (i + 1 < syms.size() && syms[i] == best.first && syms[i + 1] == best.second) {
          next.push_back(best.first + best.second);
          i += 2;
        } else {
          next.push_back(syms[i++]);
        }
      }
      syms = std::move(next);
    }
  }
  return out;
}

tok::TokenizerModel fixture_model() {
  auto docs = corpus::synthetic_documents(120, 100, 600, 21);
  docs.push_back("ASCII text, with #tags and digits 0123456789! (parens) a-b_c");
  tok::TrainOptions opt;
  opt.target_size = 1024;
  opt.dictionary = corpus::synthetic_lexicon();
  return tok::train_bpe(docs, opt);
}

}  // namespace

TEST_CASE("round_to_64 gives the next multiple of 64") {
  Rng rng(17);
  for (int i = 0; i < 100; ++i) {
    const size_t target = 1 + rng.below(100000);
    const size_t size = tok::policy_size(target, tok::SizePolicy::kRoundTo64);
    CHECK(size % 64 == 0);
    CHECK(size >= target);
    CHECK(size < target + 64);
    CHECK(tok::policy_size(target, tok::SizePolicy::kExact) == target);
  }
  CHECK(tok::policy_size(33000, tok::SizePolicy::kRoundTo64) == 33024);
  CHECK(tok::policy_size(32960, tok::SizePolicy::kRoundTo64) == 32960);
}

TEST_CASE("merge sequence matches a brute-force BPE") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::string> corpus;
    std::map<std::string, int> words;
    for (int d = 0; d < 30; ++d) {
      std::string w;
      const size_t n = 1 + rng.below(8);
      for (size_t k = 0; k < n; ++k) w += static_cast<char>('a' + rng.below(4));
      corpus.push_back(w);
      ++words[w];
    }
    tok::TrainOptions opt;
    opt.target_size = 5000;
    opt.policy = tok::SizePolicy::kExact;
    opt.max_merges = 12;
    const auto model = tok::train_bpe(corpus, opt);
    const auto want = naive_bpe(words, 12);
    REQUIRE(model.merges().size() == want.size());
    for (size_t i = 0; i < want.size(); ++i) CHECK(model.merges()[i] == want[i]);
  }
}

TEST_CASE("most frequent raw pair is merged first") {
  tok::TrainOptions opt;
  opt.target_size = 10;
  opt.policy = tok::SizePolicy::kExact;
  const auto model = tok::train_bpe({"aaab", "aaab"}, opt);
  CHECK(model.vocab_size() == 10);
  REQUIRE_FALSE(model.merges().empty());
  CHECK(model.merges()[0] == Merge{"a", "a"});
  CHECK(model.find("aa").has_value());
  CHECK(model.find("##a").has_value());
  CHECK(model.find("##b").has_value());
}

TEST_CASE("pair count ties go to the lexicographically smallest pair") {
  tok::TrainOptions opt;
  opt.target_size = 64;
  opt.policy = tok::SizePolicy::kExact;
  opt.max_merges = 1;
  const auto model = tok::train_bpe({"cd", "ab", "xy"}, opt);
  REQUIRE(model.merges().size() == 1);
  CHECK(model.merges()[0] == Merge{"a", "b"});
}

TEST_CASE("vocab layout: specials first, padded to the policy size") {
  tok::TrainOptions opt;
  opt.target_size = 100;
  const auto model = tok::train_bpe({"ab ab ba"}, opt);
  CHECK(model.vocab_size() == 128);
  CHECK(model.token(tok::kPadId) == "[PAD]");
  CHECK(model.token(tok::kUnkId) == "[UNK]");
  CHECK(model.token(tok::kClsId) == "[CLS]");
  CHECK(model.token(tok::kSepId) == "[SEP]");
  CHECK(model.token(tok::kMaskId) == "[MASK]");
  CHECK(model.token(127).rfind("[unused", 0) == 0);
  CHECK(model.is_special(127));
  std::set<std::string> uniq(model.vocab().begin(), model.vocab().end());
  CHECK(uniq.size() == model.vocab_size());
  CHECK_NOTHROW(model.validate());
}

TEST_CASE("target below specials plus alphabet is a config error") {
  tok::TrainOptions opt;
  opt.target_size = 8;
  opt.policy = tok::SizePolicy::kExact;
  CHECK_THROWS_AS(tok::train_bpe({"abc"}, opt), ConfigError);
  CHECK_THROWS_AS(tok::train_bpe({}, opt), InputError);
}

TEST_CASE("pre-tokenization covers the text exactly") {
  const tok::DictionarySegmenter seg({"中文", "模型"});
  const std::string text = "我们的中文模型 runs, fast!  ok";
  const auto words = tok::pre_tokenize(text, seg);
  std::string joined;
  for (const auto& w : words) joined += w;
  CHECK(joined == text);
  CHECK(std::find(words.begin(), words.end(), "中文") != words.end());
  CHECK(std::find(words.begin(), words.end(), "模型") != words.end());
  CHECK(std::find(words.begin(), words.end(), ",") != words.end());
}

TEST_CASE("decode(encode(s)) == s on a 10k-string fuzz corpus") {
  const auto model = fixture_model();
  // Training alphabet: every string built below encodes without [UNK].
  std::vector<std::string> chars;
  for (const auto& t : model.vocab()) {
    if (!model.find(t) || model.is_special(*model.find(t)) || model.is_continuation(*model.find(t))) {
      continue;
    }
    if (utf8::length(t) == 1) chars.push_back(t);
  }
  REQUIRE(chars.size() > 50);
  const auto lexicon = corpus::synthetic_lexicon();
  Rng rng(99);
  size_t failures = 0;
  for (int i = 0; i < 10000; ++i) {
    std::string s;
    const size_t parts = rng.below(12);
    for (size_t p = 0; p < parts; ++p) {
      if (rng.uniform() < 0.5) {
        s += lexicon[rng.below(lexicon.size())];
      } else {
        s += chars[rng.below(chars.size())];
      }
    }
    tok::EncodeStats st;
    const auto ids = model.encode(s, &st);
    if (model.decode(ids) != s || st.unknown != 0) ++failures;
  }
  CHECK(failures == 0);
}

TEST_CASE("unseen characters map to [UNK]") {
  const auto model = fixture_model();
  tok::EncodeStats st;
  const auto ids = model.encode("龘", &st);
  REQUIRE(ids.size() == 1);
  CHECK(ids[0] == tok::kUnkId);
  CHECK(st.unknown == 1);
  const auto seq = model.encode_sequence("数据");
  CHECK(seq.front() == tok::kClsId);
  CHECK(seq.back() == tok::kSepId);
}

TEST_CASE("save and load reproduce the model") {
  testutil::ScratchDir dir("tok_io");
  const auto model = fixture_model();
  model.save(dir.str());
  const auto back = tok::TokenizerModel::load(dir.str());
  CHECK(back.vocab() == model.vocab());
  CHECK(back.merges() == model.merges());
  CHECK(back.dictionary() == model.dictionary());
  for (const auto& doc : corpus::synthetic_documents(10, 50, 300, 4)) {
    CHECK(back.encode(doc) == model.encode(doc));
  }
}

TEST_CASE("token escaping round-trips whitespace and backslashes") {
  for (const std::string t : {" ", "\t", "a b", "\\", "\\s", "\n", "##x"}) {
    CHECK(tok::unescape_token(tok::escape_token(t)) == t);
    CHECK(tok::escape_token(t).find_first_of(" \n\t") == std::string::npos);
  }
}

TEST_CASE("chars per token is total chars over total tokens after clipping") {
  const auto model = fixture_model();
  const auto texts = corpus::synthetic_documents(8, 400, 900, 8);
  uint64_t chars = 0, tokens = 0;
  for (const auto& t : texts) {
    auto cps = utf8::decode(t);
    if (cps.size() > 512) cps.resize(512);
    chars += cps.size();
    tokens += model.encode(utf8::encode(cps)).size();
  }
  const auto r = tok::compression_stats(model, texts, tok::Bucket::kShort512);
  CHECK(r.char_count == chars);
  CHECK(r.token_count == tokens);
  CHECK(r.chars_per_token == doctest::Approx(static_cast<double>(chars) / tokens).epsilon(1e-15));
  CHECK(r.chars_per_token > 1.0);
}

TEST_CASE("budget reproduces the 377.0M model and 9.0% embedding share") {
  EncoderConfig c;  // 28 layers, hidden 1024
  const size_t V = 32979, H = 1024, L = 28;
  const size_t F = 2624;  // 2.6 * 1024 floored to a multiple of 64
  const uint64_t per_layer = 2 * H + 3 * H * H + H * H + 2 * F * H + F * H;
  const uint64_t oracle = V * H + L * per_layer + H;
  const auto r = tok::budget_report(V, c);
  CHECK(c.ffn_width() == F);
  CHECK(r.total_params == oracle);
  CHECK(r.embedding_params == V * H);
  CHECK(std::round(r.total_params / 1e5) / 10.0 == 377.0);
  CHECK(std::fabs(100.0 * r.embedding_share - 9.0) <= 0.1);
  CHECK(r.tied_embeddings);
}
