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

#include "cmbert/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <new>
#include <numeric>

#include "cmbert/common.hpp"
#include "cmbert/rng.hpp"

namespace cmbert::bench {

BucketSpec parse_bucket(std::string_view text) {
  if (text == "len512_b32") return {"len512_b32", 512, 32};
  if (text == "len8192_b8") return {"len8192_b8", 8192, 8};
  const size_t x = text.find('x');
  if (x == std::string_view::npos) {
    throw ConfigError("bucket must look like <length>x<batch>, got '" + std::string(text) + "'");
  }
  const int64_t len = parse_int(text.substr(0, x));
  const int64_t batch = parse_int(text.substr(x + 1));
  if (len < 1 || batch < 1) throw ConfigError("bucket length and batch must be >= 1");
  BucketSpec b{"custom", static_cast<size_t>(len), static_cast<size_t>(batch)};
  if (b.length == 512 && b.batch == 32) b.name = "len512_b32";
  if (b.length == 8192 && b.batch == 8) b.name = "len8192_b8";
  return b;
}

std::vector<BucketSpec> desk_buckets() {
  return {{"custom", 512, 4}, {"custom", 2048, 2}};
}

std::vector<BucketSpec> reference_buckets() {
  return {{"len512_b32", 512, 32}, {"len8192_b8", 8192, 8}};
}

uint64_t analytic_scores(size_t length, size_t radius, bool global) {
  const uint64_t L = length;
  if (global || radius >= length) return L * L;
  const uint64_t r = radius;
  return L * (2 * r + 1) - r * (r + 1);
}

std::vector<uint64_t> analytic_attention_scores(const EncoderConfig& config,
                                                const std::vector<size_t>& seq_lengths) {
  std::vector<uint64_t> out(config.layers, 0);
  for (size_t l = 0; l < config.layers; ++l) {
    const bool g = config.is_global_layer(l);
    for (size_t n : seq_lengths) out[l] += analytic_scores(n, config.local_window_radius, g);
    out[l] *= config.heads;
  }
  return out;
}

uint64_t estimate_forward_bytes(const EncoderConfig& config, size_t length, size_t batch) {
  const uint64_t T = static_cast<uint64_t>(length) * batch;
  // Residual stream, qkv, context and the GeGLU buffers, plus one row of
  // attention scores per query.
  const uint64_t per_token = 8 * config.hidden + 3 * config.ffn_width() + length;
  return T * per_token * sizeof(double);
}

BenchReport throughput(const Checkpoint& ckpt, const ThroughputOptions& options) {
  const EncoderConfig& c = ckpt.config;
  const BucketSpec& bucket = options.bucket;
  if (options.runs < 3) throw ConfigError("bench.runs must be >= 3");
  if (bucket.length == 0 || bucket.batch == 0) throw ConfigError("bench bucket is empty");
  if (bucket.length > c.max_context) {
    throw ConfigError("bench bucket length " + std::to_string(bucket.length) +
                      " exceeds encoder.max_context " + std::to_string(c.max_context));
  }
  if (c.vocab_size <= static_cast<size_t>(tok::kNumSpecials)) {
    throw ConfigError("bench needs a vocabulary beyond the special tokens");
  }

  BenchReport rep;
  rep.bucket = bucket;
  size_t batch = bucket.batch;
  if (options.memory_budget_bytes > 0) {
    while (batch > 1 && estimate_forward_bytes(c, bucket.length, batch) > options.memory_budget_bytes) {
      batch /= 2;
    }
    if (estimate_forward_bytes(c, bucket.length, batch) > options.memory_budget_bytes) {
      throw RuntimeError("bench: a single sequence of " + std::to_string(bucket.length) +
                         " tokens exceeds the memory budget");
    }
  }

  auto make_batch = [&](size_t n) {
    Rng rng(derive_seed(options.seed, "bench.tokens"));
    std::vector<std::vector<int32_t>> seqs(n, std::vector<int32_t>(bucket.length));
    const uint64_t span = c.vocab_size - tok::kNumSpecials;
    for (auto& s : seqs) {
      for (auto& id : s) id = static_cast<int32_t>(tok::kNumSpecials + rng.below(span));
    }
    return PackedBatch::pack(seqs);
  };

  ForwardOptions fo;
  fo.compute_logits = false;
  PackedBatch packed;
  while (true) {
    try {
      packed = make_batch(batch);
      for (size_t w = 0; w < options.warmup; ++w) (void)forward(ckpt, packed, fo);
      break;
    } catch (const std::bad_alloc&) {
      if (batch == 1) throw RuntimeError("bench: allocation failed at batch 1");
      batch /= 2;
    }
  }
  if (batch != bucket.batch) {
    rep.notes.push_back("batch reduced from " + std::to_string(bucket.batch) + " to " +
                        std::to_string(batch) + " to fit memory");
  }
  rep.batch = batch;

  const double tokens = static_cast<double>(bucket.length * batch);
  for (size_t r = 0; r < options.runs; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    const ForwardResult fr = forward(ckpt, packed, fo);
    const auto t1 = std::chrono::steady_clock::now();
    const double secs = std::max(std::chrono::duration<double>(t1 - t0).count(), 1e-9);
    rep.per_run_tokens_per_second.push_back(tokens / secs);
    if (r == 0) rep.instrumented_scores_per_layer = fr.stats.scores_per_layer;
  }
  rep.mean_tokens_per_second =
      std::accumulate(rep.per_run_tokens_per_second.begin(), rep.per_run_tokens_per_second.end(),
                      0.0) /
      static_cast<double>(rep.per_run_tokens_per_second.size());
  rep.analytic_scores_per_layer =
      analytic_attention_scores(c, std::vector<size_t>(batch, bucket.length));
  for (size_t l = 0; l < c.layers; ++l) rep.global_layer.push_back(c.is_global_layer(l));
  return rep;
}

std::string scores_csv(const BenchReport& report) {
  std::string out = "bucket,length,batch,layer,kind,analytic_scores,instrumented_scores\n";
  for (size_t l = 0; l < report.analytic_scores_per_layer.size(); ++l) {
    out += report.bucket.name + "," + std::to_string(report.bucket.length) + "," +
           std::to_string(report.batch) + "," + std::to_string(l) + "," +
           (report.global_layer[l] ? "global" : "local") + "," +
           std::to_string(report.analytic_scores_per_layer[l]) + "," +
           std::to_string(l < report.instrumented_scores_per_layer.size()
                              ? report.instrumented_scores_per_layer[l]
                              : 0) +
           "\n";
  }
  return out;
}

std::string timing_csv(const BenchReport& report) {
  std::string out = "bucket,length,batch,run,tokens_per_second\n";
  const std::string prefix = report.bucket.name + "," + std::to_string(report.bucket.length) +
                             "," + std::to_string(report.batch) + ",";
  for (size_t r = 0; r < report.per_run_tokens_per_second.size(); ++r) {
    out += prefix + std::to_string(r) + "," + format_double(report.per_run_tokens_per_second[r]) +
           "\n";
  }
  out += prefix + "mean," + format_double(report.mean_tokens_per_second) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Correlation

double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw ContractError("pearson: inputs differ in length");
  if (xs.size() < 2) throw ContractError("pearson: need at least two pairs");
  const double n = static_cast<double>(xs.size());
  double mx = 0.0;
  double my = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw InputError("correlation undefined: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> fractional_ranks(const std::vector<double>& xs) {
  std::vector<size_t> idx(xs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  size_t i = 0;
  while (i < idx.size()) {
    size_t j = i;
    while (j + 1 < idx.size() && xs[idx[j + 1]] == xs[idx[i]]) ++j;
    const double r = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw ContractError("spearman: inputs differ in length");
  return pearson(fractional_ranks(xs), fractional_ranks(ys));
}

Pooling parse_pooling(std::string_view text) {
  if (text == "mean") return Pooling::kMean;
  if (text == "cls" || text == "cls-position") return Pooling::kCls;
  throw ConfigError("pooling must be mean or cls, got '" + std::string(text) + "'");
}

std::vector<double> embed_text(const Checkpoint& ckpt, const tok::TokenizerModel& tokenizer,
                               std::string_view text, Pooling pooling) {
  auto ids = tokenizer.encode_sequence(text);
  if (ids.size() > ckpt.config.max_context) {
    ids.resize(ckpt.config.max_context - 1);
    ids.push_back(tok::kSepId);
  }
  const PackedBatch batch = PackedBatch::pack({ids});
  ForwardOptions fo;
  fo.compute_logits = false;
  const ForwardResult fr = forward(ckpt, batch, fo);
  const size_t H = ckpt.config.hidden;
  std::vector<double> out(H, 0.0);
  size_t count = 0;
  if (pooling == Pooling::kMean) {
    for (size_t t = 0; t < ids.size(); ++t) {
      if (tokenizer.is_special(ids[t])) continue;
      const double* r = fr.hidden.row(t);
      for (size_t h = 0; h < H; ++h) out[h] += r[h];
      ++count;
    }
  }
  if (count == 0) {
    const double* r = fr.hidden.row(0);
    std::copy(r, r + H, out.begin());
    return out;
  }
  for (double& v : out) v /= static_cast<double>(count);
  return out;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ContractError("cosine: vectors differ in length");
  double ab = 0.0;
  double aa = 0.0;
  double bb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
}

std::vector<StsPair> parse_pairs_tsv(std::string_view text) {
  std::vector<StsPair> pairs;
  size_t pos = 0;
  size_t line_no = 0;
  while (pos < text.size()) {
    size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const size_t t1 = line.find('\t');
    const size_t t2 = t1 == std::string_view::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string_view::npos || line.find('\t', t2 + 1) != std::string_view::npos) {
      throw InputError("pairs line " + std::to_string(line_no) + ": expected 3 tab-separated fields");
    }
    StsPair p;
    p.a = std::string(line.substr(0, t1));
    p.b = std::string(line.substr(t1 + 1, t2 - t1 - 1));
    try {
      p.gold = parse_double(line.substr(t2 + 1));
    } catch (const ConfigError&) {
      throw InputError("pairs line " + std::to_string(line_no) + ": gold score is not a number");
    }
    pairs.push_back(std::move(p));
  }
  return pairs;
}

CorrelationReport sts_score(const Checkpoint& ckpt, const tok::TokenizerModel& tokenizer,
                            const std::vector<StsPair>& pairs, Pooling pooling) {
  if (pairs.size() < 2) throw InputError("sts needs at least two pairs");
  CorrelationReport rep;
  std::vector<double> gold;
  for (const auto& p : pairs) {
    rep.predictions.push_back(cosine(embed_text(ckpt, tokenizer, p.a, pooling),
                                     embed_text(ckpt, tokenizer, p.b, pooling)));
    gold.push_back(p.gold);
  }
  rep.n_pairs = pairs.size();
  rep.pearson_r = pearson(rep.predictions, gold);
  rep.spearman_rho = spearman(rep.predictions, gold);
  return rep;
}

}  // namespace cmbert::bench
