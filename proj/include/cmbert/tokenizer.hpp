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

#ifndef CMBERT_TOKENIZER_HPP_
#define CMBERT_TOKENIZER_HPP_

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace cmbert {
struct EncoderConfig;
}

namespace cmbert::tok {

inline constexpr std::string_view kContinuationPrefix = "##";

// Fixed ids of the reserved tokens; they always occupy the first slots.
inline constexpr int32_t kPadId = 0;
inline constexpr int32_t kUnkId = 1;
inline constexpr int32_t kClsId = 2;
inline constexpr int32_t kSepId = 3;
inline constexpr int32_t kMaskId = 4;
inline constexpr int32_t kNumSpecials = 5;

enum class SizePolicy { kExact, kRoundTo64 };

std::string_view to_string(SizePolicy policy);
SizePolicy parse_size_policy(std::string_view text);

// Final vocabulary size for a requested target under `policy`.
size_t policy_size(size_t target, SizePolicy policy);

// Splits a maximal run of CJK code points into words.
class Segmenter {
 public:
  virtual ~Segmenter() = default;
  virtual std::vector<std::u32string> segment(std::u32string_view run) const = 0;
};

// Forward longest-match over a word list; code points not covered by any
// entry become single-character words.
class DictionarySegmenter : public Segmenter {
 public:
  DictionarySegmenter() = default;
  explicit DictionarySegmenter(const std::vector<std::string>& words);

  std::vector<std::u32string> segment(std::u32string_view run) const override;

 private:
  std::unordered_map<std::u32string, bool> words_;
  size_t max_len_ = 1;
};

// Word boundaries: whitespace runs, single punctuation characters, other
// non-CJK runs, and segmenter-provided words inside CJK runs. Concatenating
// the result reproduces `text`.
std::vector<std::string> pre_tokenize(std::string_view text,
                                      const Segmenter& segmenter);

struct EncodeStats {
  size_t unknown = 0;  // symbols mapped to [UNK]
};

class TokenizerModel {
 public:
  TokenizerModel() = default;

  size_t vocab_size() const { return vocab_.size(); }
  const std::string& token(int32_t id) const;
  std::optional<int32_t> find(std::string_view token) const;

  bool is_special(int32_t id) const;
  bool is_continuation(int32_t id) const;

  const std::vector<std::string>& vocab() const { return vocab_; }
  const std::vector<std::pair<std::string, std::string>>& merges() const {
    return merges_;
  }
  const std::vector<std::string>& dictionary() const { return dictionary_; }
  SizePolicy size_policy() const { return policy_; }
  size_t target_size() const { return target_; }

  std::vector<int32_t> encode(std::string_view text,
                              EncodeStats* stats = nullptr) const;
  // Encodes and wraps with [CLS] ... [SEP].
  std::vector<int32_t> encode_sequence(std::string_view text) const;
  std::string decode(std::span<const int32_t> ids) const;

  // vocab.txt, merges.txt, words.txt, tokenizer.meta inside `dir`.
  void save(const std::string& dir) const;
  static TokenizerModel load(const std::string& dir);

  // Throws RuntimeError if any structural invariant is broken.
  void validate() const;

 private:
  friend TokenizerModel build_model(std::vector<std::string> vocab,
                                    std::vector<std::pair<std::string, std::string>> merges,
                                    std::vector<std::string> dictionary,
                                    size_t unused_begin, size_t target,
                                    SizePolicy policy);

  void index();
  void encode_word(std::string_view word, std::vector<int32_t>& out,
                   EncodeStats* stats) const;

  std::vector<std::string> vocab_;
  std::vector<std::pair<std::string, std::string>> merges_;
  std::vector<std::string> dictionary_;
  size_t unused_begin_ = 0;
  size_t target_ = 0;
  SizePolicy policy_ = SizePolicy::kExact;

  std::unordered_map<std::string, int32_t> ids_;
  std::unordered_map<std::string, size_t> merge_rank_;
  std::shared_ptr<const DictionarySegmenter> segmenter_;
};

TokenizerModel build_model(std::vector<std::string> vocab,
                           std::vector<std::pair<std::string, std::string>> merges,
                           std::vector<std::string> dictionary,
                           size_t unused_begin, size_t target, SizePolicy policy);

struct TrainOptions {
  size_t target_size = 32000;
  SizePolicy policy = SizePolicy::kRoundTo64;
  // CJK word list for the pre-tokenizer; stored with the model.
  std::vector<std::string> dictionary;
  // Stop after this many merges even if the vocab has room (0 = no cap).
  size_t max_merges = 0;
};

// Deterministic BPE training. Merges are learned over raw symbol strings;
// ties on pair count go to the lexicographically smallest (left, right)
// pair. The vocab holds [PAD] [UNK] [CLS] [SEP] [MASK], then both the
// word-initial and "##" form of every training character, then the forms
// produced by each merge, then [unusedN] padding up to the policy size.
TokenizerModel train_bpe(const std::vector<std::string>& corpus,
                         const TrainOptions& options);

enum class Bucket { kShort512, kLong8192 };

std::string_view to_string(Bucket bucket);
Bucket parse_bucket(std::string_view text);
size_t bucket_chars(Bucket bucket);

struct CompressionReport {
  uint64_t char_count = 0;
  uint64_t token_count = 0;
  double chars_per_token = 0.0;
  Bucket bucket = Bucket::kShort512;
};

// Each text is clipped to the bucket's character bound, then
// chars_per_token = total chars / total tokens.
CompressionReport compression_stats(const TokenizerModel& model,
                                    const std::vector<std::string>& texts,
                                    Bucket bucket);

struct BudgetReport {
  uint64_t total_params = 0;
  uint64_t embedding_params = 0;
  double embedding_share = 0.0;
  bool tied_embeddings = true;
};

BudgetReport budget_report(size_t vocab_size, const EncoderConfig& config);

// Token-string escaping used by the vocab and merges files.
std::string escape_token(std::string_view token);
std::string unescape_token(std::string_view line);

}  // namespace cmbert::tok

#endif  // CMBERT_TOKENIZER_HPP_
