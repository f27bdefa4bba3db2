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

#include "cmbert/tokenizer.hpp"

#include <algorithm>
#include <filesystem>
#include <limits>
#include <map>
#include <set>

#include "cmbert/common.hpp"
#include "cmbert/kvconfig.hpp"
#include "cmbert/utf8.hpp"

namespace cmbert::tok {

namespace {

const std::vector<std::string>& special_tokens() {
  static const std::vector<std::string> kSpecials = {"[PAD]", "[UNK]", "[CLS]",
                                                     "[SEP]", "[MASK]"};
  return kSpecials;
}

std::string cont(std::string_view raw) {
  return std::string(kContinuationPrefix) + std::string(raw);
}

std::string pair_key(std::string_view a, std::string_view b) {
  std::string key;
  key.reserve(a.size() + b.size() + 1);
  key.append(a);
  key.push_back('\0');
  key.append(b);
  return key;
}

enum class CharClass { kSpace, kPunct, kCjk, kOther };

CharClass classify(char32_t cp) {
  if (utf8::is_space(cp)) return CharClass::kSpace;
  if (utf8::is_punct(cp)) return CharClass::kPunct;
  if (utf8::is_cjk(cp)) return CharClass::kCjk;
  return CharClass::kOther;
}

}  // namespace

std::string_view to_string(SizePolicy policy) {
  return policy == SizePolicy::kExact ? "exact" : "round_to_64";
}

SizePolicy parse_size_policy(std::string_view text) {
  if (text == "exact") return SizePolicy::kExact;
  if (text == "round_to_64" || text == "round64") return SizePolicy::kRoundTo64;
  throw ConfigError("unknown size policy '" + std::string(text) + "'");
}

size_t policy_size(size_t target, SizePolicy policy) {
  if (policy == SizePolicy::kExact) return target;
  return (target + 63) / 64 * 64;
}

DictionarySegmenter::DictionarySegmenter(const std::vector<std::string>& words) {
  for (const auto& w : words) {
    std::u32string cps = utf8::decode(w);
    if (cps.empty()) continue;
    max_len_ = std::max(max_len_, cps.size());
    words_.emplace(std::move(cps), true);
  }
}

std::vector<std::u32string> DictionarySegmenter::segment(std::u32string_view run) const {
  std::vector<std::u32string> out;
  size_t i = 0;
  while (i < run.size()) {
    size_t take = 1;
    for (size_t len = std::min(max_len_, run.size() - i); len > 1; --len) {
      if (words_.count(std::u32string(run.substr(i, len)))) {
        take = len;
        break;
      }
    }
    out.emplace_back(run.substr(i, take));
    i += take;
  }
  return out;
}

std::vector<std::string> pre_tokenize(std::string_view text,
                                      const Segmenter& segmenter) {
  const std::u32string cps = utf8::decode(text);
  std::vector<std::string> words;
  size_t i = 0;
  while (i < cps.size()) {
    const CharClass cls = classify(cps[i]);
    if (cls == CharClass::kPunct) {
      words.push_back(utf8::encode(cps[i]));
      ++i;
      continue;
    }
    size_t j = i + 1;
    while (j < cps.size() && classify(cps[j]) == cls) ++j;
    std::u32string_view run(cps.data() + i, j - i);
    if (cls == CharClass::kCjk) {
      for (const auto& w : segmenter.segment(run)) words.push_back(utf8::encode(w));
    } else {
      words.push_back(utf8::encode(run));
    }
    i = j;
  }
  return words;
}

// ---------------------------------------------------------------------------
// TokenizerModel

const std::string& TokenizerModel::token(int32_t id) const {
  if (id < 0 || static_cast<size_t>(id) >= vocab_.size()) {
    throw InputError("token id out of range: " + std::to_string(id));
  }
  return vocab_[static_cast<size_t>(id)];
}

std::optional<int32_t> TokenizerModel::find(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

bool TokenizerModel::is_special(int32_t id) const {
  return id < kNumSpecials || static_cast<size_t>(id) >= unused_begin_;
}

bool TokenizerModel::is_continuation(int32_t id) const {
  if (is_special(id)) return false;
  const std::string& t = token(id);
  return t.size() > kContinuationPrefix.size() &&
         std::string_view(t).substr(0, kContinuationPrefix.size()) == kContinuationPrefix;
}

void TokenizerModel::index() {
  ids_.clear();
  ids_.reserve(vocab_.size());
  for (size_t i = 0; i < vocab_.size(); ++i) {
    ids_.emplace(vocab_[i], static_cast<int32_t>(i));
  }
  merge_rank_.clear();
  for (size_t r = 0; r < merges_.size(); ++r) {
    merge_rank_.emplace(pair_key(merges_[r].first, merges_[r].second), r);
  }
  segmenter_ = std::make_shared<DictionarySegmenter>(dictionary_);
}

void TokenizerModel::encode_word(std::string_view word, std::vector<int32_t>& out,
                                 EncodeStats* stats) const {
  std::vector<std::string> syms = utf8::split_chars(word);
  auto form_exists = [&](size_t pos, const std::string& raw) {
    return ids_.count(pos == 0 ? raw : cont(raw)) != 0;
  };
  while (syms.size() > 1) {
    size_t best_rank = std::numeric_limits<size_t>::max();
    for (size_t i = 0; i + 1 < syms.size(); ++i) {
      auto it = merge_rank_.find(pair_key(syms[i], syms[i + 1]));
      if (it == merge_rank_.end() || it->second >= best_rank) continue;
      if (!form_exists(i, syms[i] + syms[i + 1])) continue;
      best_rank = it->second;
    }
    if (best_rank == std::numeric_limits<size_t>::max()) break;
    const auto& [left, right] = merges_[best_rank];
    std::vector<std::string> next;
    next.reserve(syms.size());
    size_t i = 0;
    while (i < syms.size()) {
      if (i + 1 < syms.size() && syms[i] == left && syms[i + 1] == right &&
          form_exists(next.size(), left + right)) {
        next.push_back(left + right);
        i += 2;
      } else {
        next.push_back(std::move(syms[i]));
        ++i;
      }
    }
    syms = std::move(next);
  }
  for (size_t i = 0; i < syms.size(); ++i) {
    auto it = ids_.find(i == 0 ? syms[i] : cont(syms[i]));
    if (it == ids_.end()) {
      out.push_back(kUnkId);
      if (stats) ++stats->unknown;
    } else {
      out.push_back(it->second);
    }
  }
}

std::vector<int32_t> TokenizerModel::encode(std::string_view text,
                                            EncodeStats* stats) const {
  std::vector<int32_t> out;
  if (text.empty()) return out;
  for (const auto& word : pre_tokenize(text, *segmenter_)) {
    encode_word(word, out, stats);
  }
  return out;
}

std::vector<int32_t> TokenizerModel::encode_sequence(std::string_view text) const {
  std::vector<int32_t> out{kClsId};
  const auto body = encode(text);
  out.insert(out.end(), body.begin(), body.end());
  out.push_back(kSepId);
  return out;
}

std::string TokenizerModel::decode(std::span<const int32_t> ids) const {
  std::string out;
  for (int32_t id : ids) {
    if (id == kPadId || id == kClsId || id == kSepId) continue;
    if (is_special(id) && id != kUnkId && id != kMaskId) continue;
    const std::string& t = token(id);
    if (is_continuation(id)) {
      out.append(t, kContinuationPrefix.size());
    } else {
      out.append(t);
    }
  }
  return out;
}

void TokenizerModel::validate() const {
  if (vocab_.size() < static_cast<size_t>(kNumSpecials)) {
    throw RuntimeError("vocab smaller than the reserved specials");
  }
  for (int32_t i = 0; i < kNumSpecials; ++i) {
    if (vocab_[static_cast<size_t>(i)] != special_tokens()[static_cast<size_t>(i)]) {
      throw RuntimeError("special token mismatch at id " + std::to_string(i));
    }
  }
  if (ids_.size() != vocab_.size()) throw RuntimeError("duplicate vocab entries");
  for (size_t i = 0; i < vocab_.size(); ++i) {
    const auto id = static_cast<int32_t>(i);
    if (is_special(id) &&
        vocab_[i].compare(0, kContinuationPrefix.size(), kContinuationPrefix) == 0) {
      throw RuntimeError("special token carries continuation prefix: " + vocab_[i]);
    }
  }
  for (const auto& [a, b] : merges_) {
    const std::string raw = a + b;
    if (!ids_.count(raw) && !ids_.count(cont(raw))) {
      throw RuntimeError("merge output missing from vocab: " + raw);
    }
  }
  if (policy_ == SizePolicy::kRoundTo64 && vocab_.size() % 64 != 0) {
    throw RuntimeError("vocab size violates round_to_64 policy");
  }
}

TokenizerModel build_model(std::vector<std::string> vocab,
                           std::vector<std::pair<std::string, std::string>> merges,
                           std::vector<std::string> dictionary, size_t unused_begin,
                           size_t target, SizePolicy policy) {
  TokenizerModel m;
  m.vocab_ = std::move(vocab);
  m.merges_ = std::move(merges);
  m.dictionary_ = std::move(dictionary);
  m.unused_begin_ = unused_begin;
  m.target_ = target;
  m.policy_ = policy;
  m.index();
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------
// Serialization

std::string escape_token(std::string_view token) {
  std::string out;
  for (char c : token) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      case ' ': out += "\\s"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string unescape_token(std::string_view line) {
  std::string out;
  for (size_t i = 0; i < line.size(); ++i) {
    if (line[i] != '\\') {
      out.push_back(line[i]);
      continue;
    }
    if (++i >= line.size()) throw InputError("dangling escape in token file");
    switch (line[i]) {
      case '\\': out.push_back('\\'); break;
      case 'n': out.push_back('\n'); break;
      case 'r': out.push_back('\r'); break;
      case 't': out.push_back('\t'); break;
      case 's': out.push_back(' '); break;
      default: throw InputError("unknown escape in token file");
    }
  }
  return out;
}

namespace {

std::vector<std::string> read_lines(const std::string& path) {
  const std::string text = read_file(path);
  std::vector<std::string> lines;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    lines.emplace_back(text.substr(pos, end - pos));
    pos = end + 1;
  }
  return lines;
}

}  // namespace

void TokenizerModel::save(const std::string& dir) const {
  std::filesystem::create_directories(dir);
  std::string vocab;
  for (const auto& t : vocab_) vocab += escape_token(t) + "\n";
  write_file(dir + "/vocab.txt", vocab);
  std::string merges;
  for (const auto& [a, b] : merges_) {
    merges += escape_token(a) + " " + escape_token(b) + "\n";
  }
  write_file(dir + "/merges.txt", merges);
  std::string words;
  for (const auto& w : dictionary_) words += escape_token(w) + "\n";
  write_file(dir + "/words.txt", words);

  KvConfig meta;
  meta.set("", "format_version", "1");
  meta.set("", "continuation_prefix", std::string(kContinuationPrefix));
  meta.set("", "size_policy", std::string(to_string(policy_)));
  meta.set("", "target_size", std::to_string(target_));
  meta.set("", "vocab_size", std::to_string(vocab_.size()));
  meta.set("", "unused_begin", std::to_string(unused_begin_));
  meta.set("", "merges", std::to_string(merges_.size()));
  write_file(dir + "/tokenizer.meta", meta.serialize());
}

TokenizerModel TokenizerModel::load(const std::string& dir) {
  KvConfig meta = KvConfig::load(dir + "/tokenizer.meta");
  KvReader r(meta.section(""), "tokenizer.meta");
  if (r.get_int("format_version", 0) != 1) {
    throw InputError("unsupported tokenizer format in " + dir);
  }
  if (r.get_string("continuation_prefix", "") != kContinuationPrefix) {
    throw InputError("unsupported continuation prefix in " + dir);
  }
  const SizePolicy policy = parse_size_policy(r.get_string("size_policy", "exact"));
  const auto target = static_cast<size_t>(r.get_int("target_size", 0));
  const auto vocab_size = static_cast<size_t>(r.get_int("vocab_size", 0));
  const auto unused_begin = static_cast<size_t>(r.get_int("unused_begin", 0));
  const auto n_merges = static_cast<size_t>(r.get_int("merges", 0));
  r.finish();

  std::vector<std::string> vocab;
  for (const auto& line : read_lines(dir + "/vocab.txt")) {
    vocab.push_back(unescape_token(line));
  }
  std::vector<std::pair<std::string, std::string>> merges;
  for (const auto& line : read_lines(dir + "/merges.txt")) {
    const size_t sp = line.find(' ');
    if (sp == std::string::npos) throw InputError("malformed merge line: " + line);
    merges.emplace_back(unescape_token(line.substr(0, sp)),
                        unescape_token(line.substr(sp + 1)));
  }
  std::vector<std::string> words;
  if (std::filesystem::exists(dir + "/words.txt")) {
    for (const auto& line : read_lines(dir + "/words.txt")) {
      words.push_back(unescape_token(line));
    }
  }
  if (vocab.size() != vocab_size || merges.size() != n_merges) {
    throw InputError("tokenizer files disagree with tokenizer.meta in " + dir);
  }
  try {
    return build_model(std::move(vocab), std::move(merges), std::move(words),
                       unused_begin, target, policy);
  } catch (const RuntimeError& e) {
    throw InputError(std::string("invalid tokenizer: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Training

namespace {

class BpeTrainer {
 public:
  BpeTrainer(const std::map<std::string, uint64_t>& word_counts) {
    for (const auto& [word, freq] : word_counts) {
      Word w;
      w.freq = freq;
      for (auto& ch : utf8::split_chars(word)) w.syms.push_back(symbol(ch));
      words_.push_back(std::move(w));
    }
    for (size_t wi = 0; wi < words_.size(); ++wi) add_pairs(wi, +1);
  }

  const std::string& raw(int sym) const { return symbols_[static_cast<size_t>(sym)]; }

  bool empty() const { return queue_.empty(); }

  std::pair<int, int> best() const {
    const auto& e = *queue_.begin();
    return {e.a, e.b};
  }

  // Forms (initial / continuation) the merge would create.
  std::pair<bool, bool> dry_run(int a, int b) const {
    bool initial = false, continuation = false;
    auto it = where_.find(key(a, b));
    if (it == where_.end()) return {false, false};
    for (size_t wi : it->second) {
      const auto& s = words_[wi].syms;
      size_t i = 0;
      size_t out_pos = 0;
      while (i < s.size()) {
        if (i + 1 < s.size() && s[i] == a && s[i + 1] == b) {
          (out_pos == 0 ? initial : continuation) = true;
          i += 2;
        } else {
          ++i;
        }
        ++out_pos;
      }
    }
    return {initial, continuation};
  }

  void merge(int a, int b) {
    const int merged = symbol(raw(a) + raw(b));
    auto it = where_.find(key(a, b));
    if (it == where_.end()) return;
    std::vector<size_t> targets(it->second.begin(), it->second.end());
    for (size_t wi : targets) {
      auto& s = words_[wi].syms;
      bool hit = false;
      for (size_t i = 0; i + 1 < s.size(); ++i) {
        if (s[i] == a && s[i + 1] == b) {
          hit = true;
          break;
        }
      }
      if (!hit) continue;
      add_pairs(wi, -1);
      std::vector<int> next;
      next.reserve(s.size());
      size_t i = 0;
      while (i < s.size()) {
        if (i + 1 < s.size() && s[i] == a && s[i + 1] == b) {
          next.push_back(merged);
          i += 2;
        } else {
          next.push_back(s[i]);
          ++i;
        }
      }
      s = std::move(next);
      add_pairs(wi, +1);
    }
  }

 private:
  struct Word {
    std::vector<int> syms;
    uint64_t freq = 0;
  };
  struct Entry {
    int64_t count;
    int a;
    int b;
  };
  struct EntryLess {
    const BpeTrainer* t;
    bool operator()(const Entry& x, const Entry& y) const {
      if (x.count != y.count) return x.count > y.count;
      const int ca = t->raw(x.a).compare(t->raw(y.a));
      if (ca != 0) return ca < 0;
      return t->raw(x.b) < t->raw(y.b);
    }
  };

  static uint64_t key(int a, int b) {
    return (static_cast<uint64_t>(static_cast<uint32_t>(a)) << 32) |
           static_cast<uint32_t>(b);
  }

  int symbol(const std::string& s) {
    auto it = symbol_ids_.find(s);
    if (it != symbol_ids_.end()) return it->second;
    const int id = static_cast<int>(symbols_.size());
    symbols_.push_back(s);
    symbol_ids_.emplace(s, id);
    return id;
  }

  void adjust(int a, int b, int64_t delta, size_t wi) {
    const uint64_t k = key(a, b);
    int64_t& count = counts_[k];
    if (count > 0) queue_.erase(Entry{count, a, b});
    count += delta;
    if (count > 0) {
      queue_.insert(Entry{count, a, b});
      where_[k].insert(wi);
    } else {
      counts_.erase(k);
      where_.erase(k);
    }
  }

  void add_pairs(size_t wi, int sign) {
    const auto& w = words_[wi];
    for (size_t i = 0; i + 1 < w.syms.size(); ++i) {
      adjust(w.syms[i], w.syms[i + 1], sign * static_cast<int64_t>(w.freq), wi);
    }
  }

  std::vector<std::string> symbols_;
  std::unordered_map<std::string, int> symbol_ids_;
  std::vector<Word> words_;
  std::unordered_map<uint64_t, int64_t> counts_;
  std::unordered_map<uint64_t, std::set<size_t>> where_;
  std::set<Entry, EntryLess> queue_{EntryLess{this}};
};

}  // namespace

TokenizerModel train_bpe(const std::vector<std::string>& corpus,
                         const TrainOptions& options) {
  if (corpus.empty()) throw InputError("tokenizer corpus is empty");
  DictionarySegmenter segmenter(options.dictionary);
  std::map<std::string, uint64_t> word_counts;
  std::set<std::string> alphabet;
  for (const auto& doc : corpus) {
    for (auto& w : pre_tokenize(doc, segmenter)) {
      for (auto& ch : utf8::split_chars(w)) alphabet.insert(ch);
      ++word_counts[std::move(w)];
    }
  }
  if (alphabet.empty()) throw InputError("tokenizer corpus has no characters");

  const size_t size = policy_size(options.target_size, options.policy);
  const size_t base = special_tokens().size() + 2 * alphabet.size();
  if (size < base) {
    throw ConfigError("target vocab size " + std::to_string(size) +
                      " is below specials + alphabet (" + std::to_string(base) + ")");
  }

  std::vector<std::string> vocab = special_tokens();
  std::set<std::string> present;
  for (const auto& ch : alphabet) {
    vocab.push_back(ch);
    vocab.push_back(cont(ch));
  }
  present.insert(vocab.begin(), vocab.end());

  std::vector<std::pair<std::string, std::string>> merges;
  BpeTrainer trainer(word_counts);
  while (!trainer.empty() && vocab.size() < size) {
    if (options.max_merges != 0 && merges.size() >= options.max_merges) break;
    const auto [a, b] = trainer.best();
    const std::string merged = trainer.raw(a) + trainer.raw(b);
    const auto [initial, continuation] = trainer.dry_run(a, b);
    std::vector<std::string> fresh;
    if (initial && !present.count(merged)) fresh.push_back(merged);
    if (continuation && !present.count(cont(merged))) fresh.push_back(cont(merged));
    if (vocab.size() + fresh.size() > size) break;
    merges.emplace_back(trainer.raw(a), trainer.raw(b));
    for (auto& f : fresh) {
      present.insert(f);
      vocab.push_back(std::move(f));
    }
    trainer.merge(a, b);
  }

  const size_t unused_begin = vocab.size();
  for (size_t k = 0; vocab.size() < size; ++k) {
    vocab.push_back("[unused" + std::to_string(k) + "]");
  }
  return build_model(std::move(vocab), std::move(merges), options.dictionary,
                     unused_begin, options.target_size, options.policy);
}

// ---------------------------------------------------------------------------
// Statistics

std::string_view to_string(Bucket bucket) {
  return bucket == Bucket::kShort512 ? "512" : "8192";
}

Bucket parse_bucket(std::string_view text) {
  if (text == "512" || text == "short_512") return Bucket::kShort512;
  if (text == "8192" || text == "long_8192") return Bucket::kLong8192;
  throw ConfigError("unknown bucket '" + std::string(text) + "' (expected 512 or 8192)");
}

size_t bucket_chars(Bucket bucket) {
  return bucket == Bucket::kShort512 ? 512 : 8192;
}

CompressionReport compression_stats(const TokenizerModel& model,
                                    const std::vector<std::string>& texts,
                                    Bucket bucket) {
  if (texts.empty()) throw InputError("compression_stats needs at least one text");
  CompressionReport report;
  report.bucket = bucket;
  const size_t limit = bucket_chars(bucket);
  for (const auto& text : texts) {
    std::u32string cps = utf8::decode(text);
    if (cps.size() > limit) cps.resize(limit);
    report.char_count += cps.size();
    report.token_count += model.encode(utf8::encode(cps)).size();
  }
  if (report.char_count == 0) throw InputError("all texts are empty");
  report.chars_per_token =
      static_cast<double>(report.char_count) / static_cast<double>(report.token_count);
  return report;
}

}  // namespace cmbert::tok
