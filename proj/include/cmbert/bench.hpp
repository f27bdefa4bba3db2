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

#ifndef CMBERT_BENCH_HPP_
#define CMBERT_BENCH_HPP_

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cmbert/encoder.hpp"
#include "cmbert/tokenizer.hpp"

namespace cmbert::bench {

struct BucketSpec {
  std::string name;  // len512_b32, len8192_b8 or custom
  size_t length = 0;
  size_t batch = 0;
};

// "512x32", or one of the named buckets.
BucketSpec parse_bucket(std::string_view text);
std::vector<BucketSpec> desk_buckets();   // 512x4, 2048x2
std::vector<BucketSpec> reference_buckets();  // 512x32, 8192x8

// Query-key pairs of one sequence of `length` tokens for one head:
// length^2 on a global layer, length(2r+1) - r(r+1) on a local layer with
// radius r < length (length^2 once the window covers the sequence).
uint64_t analytic_scores(size_t length, size_t radius, bool global);

// Per layer, summed over heads and sequences.
std::vector<uint64_t> analytic_attention_scores(const EncoderConfig& config,
                                                const std::vector<size_t>& seq_lengths);

struct ThroughputOptions {
  BucketSpec bucket;
  size_t runs = 10;
  size_t warmup = 1;
  uint64_t seed = 0;
  // Estimated activation bytes allowed for one forward; 0 = unlimited.
  // Batches that do not fit are halved, as is an allocation failure.
  uint64_t memory_budget_bytes = 0;
};

struct BenchReport {
  BucketSpec bucket;
  size_t batch = 0;  // batch actually used
  std::vector<std::string> notes;
  std::vector<double> per_run_tokens_per_second;
  double mean_tokens_per_second = 0.0;
  std::vector<uint64_t> analytic_scores_per_layer;
  std::vector<uint64_t> instrumented_scores_per_layer;
  std::vector<bool> global_layer;
};

// Rough peak bytes of one forward without a cache.
uint64_t estimate_forward_bytes(const EncoderConfig& config, size_t length, size_t batch);

BenchReport throughput(const Checkpoint& ckpt, const ThroughputOptions& options);

// Attention accounting per layer; identical across repeated runs.
std::string scores_csv(const BenchReport& report);
// Wall-clock timings, one row per run plus the mean.
std::string timing_csv(const BenchReport& report);

struct CorrelationReport {
  double pearson_r = 0.0;
  double spearman_rho = 0.0;
  size_t n_pairs = 0;
  std::vector<double> predictions;
};

// Throws ContractError on length mismatch or fewer than two pairs and
// InputError when either input has zero variance.
double pearson(const std::vector<double>& xs, const std::vector<double>& ys);
// Pearson over 1-based fractional ranks; ties share their average rank.
double spearman(const std::vector<double>& xs, const std::vector<double>& ys);
std::vector<double> fractional_ranks(const std::vector<double>& xs);

enum class Pooling { kMean, kCls };
Pooling parse_pooling(std::string_view text);

// Final hidden states pooled over non-special positions (mean) or taken at
// the [CLS] position.
std::vector<double> embed_text(const Checkpoint& ckpt, const tok::TokenizerModel& tokenizer,
                               std::string_view text, Pooling pooling = Pooling::kMean);
double cosine(const std::vector<double>& a, const std::vector<double>& b);

struct StsPair {
  std::string a;
  std::string b;
  double gold = 0.0;
};

// Tab-separated textA, textB, gold; blank lines are skipped.
std::vector<StsPair> parse_pairs_tsv(std::string_view text);

CorrelationReport sts_score(const Checkpoint& ckpt, const tok::TokenizerModel& tokenizer,
                            const std::vector<StsPair>& pairs, Pooling pooling = Pooling::kMean);

}  // namespace cmbert::bench

#endif  // CMBERT_BENCH_HPP_
