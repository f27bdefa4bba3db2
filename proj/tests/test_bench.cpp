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

// Attention accounting, correlation metrics and the STS harness.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "cmbert/bench.hpp"
#include "cmbert/common.hpp"
#include "cmbert/encoder.hpp"
#include "cmbert/rng.hpp"
#include "doctest.h"
#include "oracles.hpp"
#include "toy_setup.hpp"

using namespace cmbert;

namespace {

// Counts |i - j| <= r pairs directly.
uint64_t count_pairs(size_t n, size_t r, bool global) {
  uint64_t c = 0;
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < n; ++j) {
      const size_t d = i > j ? i - j : j - i;
      if (global || d <= r) ++c;
    }
  }
  return c;
}

EncoderConfig small_config() {
  EncoderConfig c;
  c.layers = 3;
  c.hidden = 8;
  c.heads = 2;
  c.intermediate = 12;
  c.vocab_size = 16;
  c.max_context = 512;
  c.local_window_radius = 4;
  c.global_layer_interval = 3;
  return c;
}

}  // namespace

TEST_CASE("analytic score formula matches direct pair counting") {
  for (size_t n : {1, 2, 5, 9, 10, 33}) {
    for (size_t r : {0, 1, 4, 8, 40}) {
      CHECK(bench::analytic_scores(n, r, false) == count_pairs(n, r, false));
      CHECK(bench::analytic_scores(n, r, true) == count_pairs(n, r, true));
    }
  }
}

TEST_CASE("instrumented score counts equal the analytic counts") {
  const auto c = small_config();
  const auto ck = init_checkpoint(c, 1);
  Rng rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<std::vector<int32_t>> seqs;
    std::vector<size_t> lens;
    const size_t k = 1 + rng.below(4);
    for (size_t s = 0; s < k; ++s) {
      const size_t n = 1 + rng.below(40);
      std::vector<int32_t> ids(n);
      for (auto& id : ids) id = static_cast<int32_t>(5 + rng.below(11));
      seqs.push_back(ids);
      lens.push_back(n);
    }
    ForwardOptions fo;
    fo.compute_logits = false;
    const auto fr = forward(ck, PackedBatch::pack(seqs), fo);
    CHECK(fr.stats.scores_per_layer == bench::analytic_attention_scores(c, lens));
  }
}

TEST_CASE("doubling the length doubles local and quadruples global counts") {
  const size_t r = 4;
  for (size_t n : {16, 64, 200}) {
    const auto g1 = bench::analytic_scores(n, r, true);
    const auto g2 = bench::analytic_scores(2 * n, r, true);
    CHECK(g2 == 4 * g1);
    const auto l1 = bench::analytic_scores(n, r, false);
    const auto l2 = bench::analytic_scores(2 * n, r, false);
    CHECK(l2 - 2 * l1 == r * (r + 1));
  }
}

TEST_CASE("throughput report carries both count columns") {
  const auto ck = init_checkpoint(small_config(), 3);
  bench::ThroughputOptions opt;
  opt.bucket = bench::parse_bucket("64x2");
  opt.runs = 3;
  const auto rep = bench::throughput(ck, opt);
  CHECK(rep.analytic_scores_per_layer == rep.instrumented_scores_per_layer);
  CHECK(rep.per_run_tokens_per_second.size() == 3);
  CHECK(rep.global_layer == std::vector<bool>{true, false, false});
  const auto csv = bench::scores_csv(rep);
  CHECK(csv.find("custom,64,2,0,global,") != std::string::npos);
  CHECK(bench::scores_csv(bench::throughput(ck, opt)) == csv);

  opt.memory_budget_bytes = bench::estimate_forward_bytes(ck.config, 64, 1);
  const auto small = bench::throughput(ck, opt);
  CHECK(small.batch == 1);
  CHECK(small.notes.size() == 1);
  opt.bucket.length = 1024;
  CHECK_THROWS_AS(bench::throughput(ck, opt), ConfigError);
}

TEST_CASE("bucket parsing") {
  CHECK(bench::parse_bucket("512x32").name == "len512_b32");
  CHECK(bench::parse_bucket("len8192_b8").length == 8192);
  CHECK(bench::parse_bucket("100x3").batch == 3);
  CHECK_THROWS_AS(bench::parse_bucket("100"), ConfigError);
  CHECK_THROWS_AS(bench::parse_bucket("0x3"), ConfigError);
}

TEST_CASE("pearson and spearman agree with the oracles") {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const size_t n = 2 + rng.below(60);
    std::vector<double> x(n), y(n);
    const bool ties = trial % 2 == 0;
    for (size_t i = 0; i < n; ++i) {
      x[i] = ties ? static_cast<double>(rng.below(5)) : rng.normal();
      y[i] = ties ? static_cast<double>(rng.below(4)) + 0.5 * x[i] : rng.normal() + x[i];
    }
    const auto var = [](const std::vector<double>& v) {
      return std::any_of(v.begin(), v.end(), [&](double a) { return a != v[0]; });
    };
    if (!var(x) || !var(y)) continue;
    CHECK(std::fabs(bench::pearson(x, y) - oracle::pearson(x, y)) <= 1e-12);
    CHECK(std::fabs(bench::spearman(x, y) - oracle::spearman(x, y)) <= 1e-12);
    CHECK(bench::fractional_ranks(x) == oracle::ranks(x));
  }
  CHECK(bench::fractional_ranks({3, 1, 3, 2}) == std::vector<double>{3.5, 1, 3.5, 2});
}

TEST_CASE("correlations are invariant under positive affine maps") {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    // Small integers and n = 64 keep every intermediate exact.
    std::vector<double> x(64), y(64);
    for (size_t i = 0; i < 64; ++i) {
      x[i] = static_cast<double>(rng.below(100));
      y[i] = static_cast<double>(rng.below(100));
    }
    // Power-of-two scales and integer shifts are exact in floating point.
    const double a = std::ldexp(1.0, static_cast<int>(rng.below(9)) - 4);
    const double b = static_cast<double>(rng.below(64)) - 32.0;
    std::vector<double> ax(64), ay(64);
    for (size_t i = 0; i < 64; ++i) {
      ax[i] = a * x[i] + b;
      ay[i] = 3.0 * y[i] - 7.0;
    }
    CHECK(bench::pearson(ax, y) == bench::pearson(x, y));
    CHECK(bench::pearson(x, ax) == bench::pearson(x, x));
    // Ranks are unchanged by any increasing map.
    CHECK(bench::spearman(ax, ay) == bench::spearman(x, y));
    CHECK(bench::spearman(x, ay) == bench::spearman(x, y));
  }
}

TEST_CASE("degenerate correlation inputs") {
  CHECK_THROWS_AS(bench::pearson({1, 2}, {1, 2, 3}), ContractError);
  CHECK_THROWS_AS(bench::pearson({1}, {1}), ContractError);
  CHECK_THROWS_AS(bench::pearson({1, 1, 1}, {1, 2, 3}), InputError);
  CHECK(bench::pearson({1, 2, 3}, {3, 2, 1}) == -1.0);
  CHECK(bench::pearson({1, 2, 3, 4}, {5, 7, 9, 11}) == 1.0);
}

TEST_CASE("STS harness") {
  const auto docs = toy::documents(30, 5);
  const auto model = toy::tokenizer(docs);
  const auto ck = init_checkpoint(toy::encoder(model.vocab_size()), 2);
  const auto pairs = bench::parse_pairs_tsv(docs[0] + "\t" + docs[0] + "\t5\n\n" + docs[1] + "\t" +
                                            docs[2] + "\t1\r\n" + docs[3] + "\t" + docs[4] + "\t2\n");
  REQUIRE(pairs.size() == 3);
  const auto rep = bench::sts_score(ck, model, pairs);
  CHECK(rep.n_pairs == 3);
  CHECK(std::fabs(rep.predictions[0] - 1.0) <= 1e-12);
  CHECK(std::fabs(rep.pearson_r) <= 1.0);
  const auto cls = bench::sts_score(ck, model, pairs, bench::Pooling::kCls);
  CHECK(std::fabs(cls.predictions[0] - 1.0) <= 1e-12);
  CHECK_THROWS_AS(bench::parse_pairs_tsv("a\tb\n"), InputError);
  CHECK_THROWS_AS(bench::parse_pairs_tsv("a\tb\tx\n"), InputError);
  CHECK_THROWS_AS(bench::sts_score(ck, model, {pairs[0]}), InputError);
  CHECK_THROWS_AS(bench::parse_pooling("max"), ConfigError);
}
