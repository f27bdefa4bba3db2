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

#include "cmbert/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <set>
#include <unordered_map>

#include "cmbert/common.hpp"
#include "cmbert/kvconfig.hpp"
#include "cmbert/rng.hpp"
#include "cmbert/utf8.hpp"

namespace cmbert::corpus {

std::string encode_records(const std::vector<std::string>& docs) {
  std::string out;
  for (const auto& d : docs) {
    out += std::to_string(d.size());
    out += '\n';
    out += d;
    out += '\n';
  }
  return out;
}

std::vector<std::string> decode_records(std::string_view data) {
  std::vector<std::string> docs;
  size_t pos = 0;
  while (pos < data.size()) {
    const size_t nl = data.find('\n', pos);
    if (nl == std::string_view::npos) throw InputError("record header without newline");
    int64_t len = 0;
    try {
      len = parse_int(data.substr(pos, nl - pos));
    } catch (const ConfigError&) {
      throw InputError("bad record length at byte " + std::to_string(pos));
    }
    if (len < 0 || nl + 1 + static_cast<size_t>(len) + 1 > data.size() ||
        data[nl + 1 + static_cast<size_t>(len)] != '\n') {
      throw InputError("truncated record at byte " + std::to_string(pos));
    }
    docs.emplace_back(data.substr(nl + 1, static_cast<size_t>(len)));
    pos = nl + 1 + static_cast<size_t>(len) + 1;
  }
  return docs;
}

std::vector<std::string> read_records(const std::string& path) {
  return decode_records(read_file(path));
}

void write_records(const std::string& path, const std::vector<std::string>& docs) {
  write_file(path, encode_records(docs));
}

std::vector<LoadedDocument> load_directory(const std::string& dir) {
  std::vector<LoadedDocument> out;
  for (const auto& path : list_files(dir)) {
    const std::string name = std::filesystem::path(path).filename().string();
    if (std::filesystem::path(path).extension() == ".rec") {
      for (auto& d : read_records(path)) out.push_back({name, std::move(d)});
    } else {
      out.push_back({name, read_file(path)});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifest

void CorpusManifest::validate() const {
  if (sources.empty()) throw ConfigError("manifest: no sources");
  std::set<std::string> names;
  double sum = 0.0;
  for (const auto& s : sources) {
    if (s.name.empty()) throw ConfigError("manifest: source with empty name");
    if (!names.insert(s.name).second) {
      throw ConfigError("manifest: duplicate source name '" + s.name + "'");
    }
    if (s.path.empty()) throw ConfigError("manifest: source." + s.name + ".path is empty");
    if (!(s.ratio >= 0) || !std::isfinite(s.ratio)) {
      throw ConfigError("manifest: source." + s.name + ".ratio must be >= 0");
    }
    sum += s.ratio;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ConfigError("manifest: ratio values sum to " + format_double(sum) +
                      ", expected 1");
  }
}

std::string CorpusManifest::serialize() const {
  KvConfig kv;
  for (const auto& s : sources) {
    kv.set("source." + s.name, "path", s.path);
    kv.set("source." + s.name, "ratio", format_double(s.ratio));
  }
  return kv.serialize();
}

CorpusManifest CorpusManifest::parse(std::string_view text, const std::string& base_dir) {
  const KvConfig kv = KvConfig::parse(text);
  CorpusManifest m;
  for (const auto& name : kv.section_names()) {
    if (name.empty()) {
      if (!kv.section(name).empty()) {
        throw ConfigError("manifest: key '" + kv.section(name).begin()->first +
                          "' outside a [source.<name>] section");
      }
      continue;
    }
    if (name.rfind("source.", 0) != 0) {
      throw ConfigError("manifest: unknown section [" + name + "]");
    }
    Source s;
    s.name = name.substr(7);
    KvReader r(kv.section(name), name);
    s.path = r.get_string("path", "");
    s.ratio = r.get_double("ratio", -1.0);
    r.finish();
    if (!s.path.empty() && !base_dir.empty() && std::filesystem::path(s.path).is_relative()) {
      s.path = (std::filesystem::path(base_dir) / s.path).string();
    }
    m.sources.push_back(std::move(s));
  }
  m.validate();
  return m;
}

CorpusManifest CorpusManifest::load(const std::string& path) {
  const std::string base = std::filesystem::path(path).parent_path().string();
  return parse(read_file(path), base);
}

CorpusManifest reference_mixture() {
  CorpusManifest m;
  m.sources = {
      {"baike", "sources/baike.rec", 0.03},
      {"cci3_hq", "sources/cci3_hq.rec", 0.57},
      {"cci4_34", "sources/cci4_34.rec", 0.10},
      {"cci4_45", "sources/cci4_45.rec", 0.10},
      {"cosmopedia_zh", "sources/cosmopedia_zh.rec", 0.20},
  };
  return m;
}

// ---------------------------------------------------------------------------
// MinHash

std::vector<std::string> shingles(std::string_view doc, size_t shingle_size) {
  if (shingle_size == 0) throw ContractError("shingle size must be >= 1");
  const auto chars = utf8::split_chars(doc);
  std::vector<std::string> out;
  if (chars.size() < shingle_size) {
    out.emplace_back(doc);
    return out;
  }
  for (size_t i = 0; i + shingle_size <= chars.size(); ++i) {
    std::string s;
    for (size_t j = 0; j < shingle_size; ++j) s += chars[i + j];
    out.push_back(std::move(s));
  }
  return out;
}

MinHashSignature minhash_signature(std::string_view doc, size_t k, size_t shingle_size,
                                   uint64_t seed) {
  if (k == 0) throw ContractError("minhash: k must be >= 1");
  std::vector<uint64_t> hashes;
  for (const auto& s : shingles(doc, shingle_size)) hashes.push_back(fnv1a64(s));
  std::sort(hashes.begin(), hashes.end());
  hashes.erase(std::unique(hashes.begin(), hashes.end()), hashes.end());

  MinHashSignature sig;
  sig.shingle_size = shingle_size;
  sig.values.assign(k, std::numeric_limits<uint64_t>::max());
  for (size_t i = 0; i < k; ++i) {
    const uint64_t salt = derive_seed(seed, "minhash.permutation", i);
    uint64_t best = std::numeric_limits<uint64_t>::max();
    // x -> mix64(x ^ salt) is a bijection on 64-bit values.
    for (uint64_t h : hashes) best = std::min(best, mix64(h ^ salt));
    sig.values[i] = best;
  }
  return sig;
}

double estimate_jaccard(const MinHashSignature& a, const MinHashSignature& b) {
  if (a.values.size() != b.values.size() || a.values.empty()) {
    throw ContractError("estimate_jaccard: signatures differ in length");
  }
  size_t same = 0;
  for (size_t i = 0; i < a.values.size(); ++i) same += a.values[i] == b.values[i];
  return static_cast<double>(same) / static_cast<double>(a.values.size());
}

void DedupOptions::validate() const {
  if (!(threshold > 0 && threshold <= 1)) throw ConfigError("dedup.threshold must be in (0, 1]");
  if (k == 0 || shingle_size == 0) throw ConfigError("dedup.k and dedup.shingle_size must be >= 1");
  if (bands == 0 || rows == 0 || bands * rows > k) {
    throw ConfigError("dedup: bands * rows must be in [1, k]");
  }
}

DedupResult dedup(const std::vector<std::string>& docs, const DedupOptions& options) {
  options.validate();
  DedupResult result;
  std::vector<MinHashSignature> sigs;
  sigs.reserve(docs.size());
  for (const auto& d : docs) {
    sigs.push_back(minhash_signature(d, options.k, options.shingle_size, options.seed));
  }

  std::vector<std::unordered_map<uint64_t, std::vector<size_t>>> buckets(options.bands);
  auto band_key = [&](const MinHashSignature& s, size_t band) {
    uint64_t h = 0x84222325cbf29ce4ULL;
    for (size_t r = 0; r < options.rows; ++r) h = mix64(h ^ s.values[band * options.rows + r]);
    return h;
  };

  for (size_t i = 0; i < docs.size(); ++i) {
    std::vector<size_t> candidates;
    for (size_t b = 0; b < options.bands; ++b) {
      auto it = buckets[b].find(band_key(sigs[i], b));
      if (it != buckets[b].end()) {
        candidates.insert(candidates.end(), it->second.begin(), it->second.end());
      }
    }
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    double best = -1.0;
    size_t best_doc = 0;
    for (size_t c : candidates) {
      const double sim = estimate_jaccard(sigs[i], sigs[c]);
      if (sim > best) {
        best = sim;
        best_doc = c;
      }
    }
    if (best >= options.threshold) {
      result.dropped.push_back({i, best_doc, best});
      continue;
    }
    if (best >= options.threshold - options.near_miss_margin) {
      result.near_misses.push_back({i, best_doc, best});
    }
    result.kept.push_back(i);
    for (size_t b = 0; b < options.bands; ++b) buckets[b][band_key(sigs[i], b)].push_back(i);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Mixture sampling

std::vector<double> draw_probabilities(const std::vector<double>& ratios,
                                       const std::vector<std::vector<size_t>>& doc_lengths) {
  if (ratios.empty() || ratios.size() != doc_lengths.size()) {
    throw ContractError("mixture: ratios and sources disagree");
  }
  std::vector<double> w(ratios.size());
  double total = 0.0;
  for (size_t s = 0; s < ratios.size(); ++s) {
    if (doc_lengths[s].empty()) {
      throw ConfigError("mixture: source " + std::to_string(s) + " has no documents");
    }
    double sum = 0.0;
    for (size_t n : doc_lengths[s]) sum += static_cast<double>(n);
    if (sum <= 0) throw ConfigError("mixture: source " + std::to_string(s) + " has no tokens");
    w[s] = ratios[s] / (sum / static_cast<double>(doc_lengths[s].size()));
    total += w[s];
  }
  if (!(total > 0)) throw ConfigError("mixture: all ratios are zero");
  for (double& x : w) x /= total;
  return w;
}

std::vector<DocDraw> mixture_sampler(const std::vector<double>& ratios,
                                     const std::vector<std::vector<size_t>>& doc_lengths,
                                     size_t batch_tokens, uint64_t seed, uint64_t step) {
  const auto probs = draw_probabilities(ratios, doc_lengths);
  Rng rng(derive_seed(seed, "mixture.step", step));
  std::vector<DocDraw> out;
  size_t filled = 0;
  while (filled < batch_tokens) {
    const size_t s = rng.categorical(probs);
    const size_t d = static_cast<size_t>(rng.below(doc_lengths[s].size()));
    const size_t n = doc_lengths[s][d];
    if (n == 0) continue;
    const size_t take = std::min(n, batch_tokens - filled);
    out.push_back({s, d, take});
    filled += take;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic text

namespace {

const char* const kTopicNouns[5][10] = {
    {"经济", "市场", "企业", "公司", "产品", "价格", "投资", "银行", "贸易", "消费"},
    {"科学", "技术", "数据", "系统", "网络", "计算机", "人工智能", "实验", "模型", "算法"},
    {"自然", "森林", "河流", "海洋", "山脉", "动物", "植物", "天气", "长江", "黄河"},
    {"教育", "学校", "学生", "老师", "课程", "知识", "考试", "大学", "图书馆", "作业"},
    {"文化", "历史", "艺术", "音乐", "电影", "书籍", "作者", "读者", "传统", "节日"},
};
const char* const kCommonNouns[] = {"中国", "社会", "城市", "农村", "政府", "国家", "世界",
                                    "人民", "我们", "他们", "大家", "朋友", "家庭", "孩子",
                                    "问题", "方法", "生活", "工作", "时间", "环境"};
const char* const kVerbs[] = {"发展", "研究", "提高", "改善", "促进", "保护", "建设", "管理",
                              "使用", "发现", "认为", "表示", "进行", "开始", "需要", "学习"};
const char* const kAdjectives[] = {"重要", "主要", "不同", "美丽", "快速", "现代", "新",
                                   "传统", "复杂", "简单"};
const char* const kAdverbs[] = {"很", "非常", "已经", "正在", "也", "都", "可以", "应该"};
const char* const kConnectives[] = {"因为", "所以", "但是", "如果", "通过", "关于", "对于"};
const char* const kParticles[] = {"的", "了", "是", "在", "和", "有"};

template <size_t N>
const char* pick(Rng& rng, const char* const (&words)[N]) {
  return words[rng.below(N)];
}

}  // namespace

std::vector<std::string> synthetic_lexicon() {
  std::set<std::string> words;
  for (const auto& topic : kTopicNouns) words.insert(std::begin(topic), std::end(topic));
  words.insert(std::begin(kCommonNouns), std::end(kCommonNouns));
  words.insert(std::begin(kVerbs), std::end(kVerbs));
  words.insert(std::begin(kAdjectives), std::end(kAdjectives));
  words.insert(std::begin(kAdverbs), std::end(kAdverbs));
  words.insert(std::begin(kConnectives), std::end(kConnectives));
  words.insert(std::begin(kParticles), std::end(kParticles));
  return {words.begin(), words.end()};
}

std::vector<std::string> synthetic_documents(size_t count, size_t min_chars, size_t max_chars,
                                             uint64_t seed, size_t topic_bias) {
  if (min_chars == 0 || max_chars < min_chars) {
    throw ContractError("synthetic_documents: need 0 < min_chars <= max_chars");
  }
  std::vector<std::string> docs;
  docs.reserve(count);
  std::vector<double> topic_weights(5, 1.0);
  topic_weights[topic_bias % 5] = 4.0;
  for (size_t n = 0; n < count; ++n) {
    Rng rng(derive_seed(seed, "synthetic.document", n));
    const size_t topic = rng.categorical(topic_weights);
    // A document-level subject recurs throughout, giving long-range context.
    const std::string subject = kTopicNouns[topic][rng.below(10)];
    auto noun = [&]() -> std::string {
      const double u = rng.uniform();
      if (u < 0.25) return subject;
      if (u < 0.75) return kTopicNouns[topic][rng.below(10)];
      return pick(rng, kCommonNouns);
    };
    const size_t target = min_chars + static_cast<size_t>(rng.below(max_chars - min_chars + 1));
    std::string doc;
    size_t chars = 0;
    while (chars < target) {
      std::string s;
      switch (rng.below(4)) {
        case 0:
          s = noun() + "的" + noun() + pick(rng, kVerbs) + noun() + "。";
          break;
        case 1:
          s = noun() + pick(rng, kAdverbs) + pick(rng, kVerbs) + pick(rng, kAdjectives) + "的" +
              noun() + "，" + noun() + "也" + pick(rng, kVerbs) + noun() + "。";
          break;
        case 2:
          s = std::string(pick(rng, kConnectives)) + noun() + pick(rng, kVerbs) + noun() +
              "，所以" + subject + pick(rng, kAdverbs) + pick(rng, kVerbs) + "。";
          break;
        default:
          s = subject + "是" + pick(rng, kAdjectives) + "的" + noun() + "，" + noun() +
              pick(rng, kParticles) + noun() + "。";
          break;
      }
      chars += utf8::length(s);
      doc += s;
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

}  // namespace cmbert::corpus
