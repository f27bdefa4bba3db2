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

// Stage plans, batch composition, the training loop and pseudo-perplexity.

#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "cmbert/common.hpp"
#include "cmbert/encoder.hpp"
#include "cmbert/train.hpp"
#include "doctest.h"
#include "oracles.hpp"
#include "test_util.hpp"
#include "toy_setup.hpp"

using namespace cmbert;
using train::StagePlan;

namespace {

struct Toy {
  std::vector<std::string> docs = toy::documents(120, 7);
  tok::TokenizerModel model = toy::tokenizer(docs);
  train::TrainData data = toy::data(model, docs);
  EncoderConfig config = toy::encoder(model.vocab_size());
};

const Toy& toy_setup() {
  static const Toy t;
  return t;
}

StagePlan small_stage1(uint64_t steps) {
  auto p = StagePlan::stage1_default(steps);
  p.max_len = 64;
  p.batch_sequences = 4;
  p.seed = 11;
  return p;
}

bool same_weights(const Checkpoint& a, const Checkpoint& b) {
  if (a.weights.size() != b.weights.size()) return false;
  for (size_t i = 0; i < a.weights.size(); ++i) {
    if (a.weights[i].data != b.weights[i].data) return false;
  }
  return true;
}

Checkpoint zero_model(const EncoderConfig& c) {
  auto ck = init_checkpoint(c, 0);
  for (auto& t : ck.weights) std::fill(t.data.begin(), t.data.end(), 0.0);
  return ck;
}

}  // namespace

TEST_CASE("stage plans validate their protocol") {
  auto p1 = StagePlan::stage1_default(200);
  CHECK_NOTHROW(p1.validate());
  CHECK(p1.tokens_per_update() == 1024);
  auto p2 = StagePlan::stage2_default(50, p1.tokens_per_update());
  CHECK_NOTHROW(p2.validate());
  CHECK(p2.max_len == 1024);

  auto bad = p2;
  bad.batch_sequences = 2;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = p1;
  bad.curriculum.total_steps = 100;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = p1;
  bad.schedule.phase = optim::Phase::kStage2Linear;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = p2;
  bad.schedule.phase = optim::Phase::kDampedCosine;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  const auto back = StagePlan::from_kv(p2.to_kv());
  CHECK(back.to_kv().serialize() == p2.to_kv().serialize());
  KvConfig kv;
  kv.set("plan", "steps", "30");
  const auto p = StagePlan::from_kv(kv);
  CHECK(p.curriculum.total_steps == 30);
  CHECK(p.schedule.total_steps == 30);
  kv.set("plan", "stpes", "30");
  CHECK_THROWS_AS(StagePlan::from_kv(kv), ConfigError);
}

TEST_CASE("stage I learning rate: warmup ramp then damped cosine") {
  const auto p = StagePlan::stage1_default(1000);
  const uint64_t w = p.curriculum.warmup_steps();
  CHECK(w == 40);
  CHECK(train::stage_eta(p, 0) == 5e-5);
  CHECK(train::stage_eta(p, w) == 8e-4);
  CHECK(testutil::rel_err(train::stage_eta(p, w / 2), 4.25e-4) <= 1e-12);
  CHECK(testutil::rel_err(train::stage_eta(p, 1000), 5e-5) <= 1e-12);
  optim::ScheduleConfig main = p.schedule;
  main.total_steps = 1000 - w;
  for (uint64_t s = w; s <= 1000; s += 37) {
    CHECK(train::stage_eta(p, s) == optim::damped_cosine_eta(main, s - w));
  }
  const auto p2 = StagePlan::stage2_default(100, 1024);
  CHECK(train::stage_eta(p2, 0) == 1e-4);
  CHECK(testutil::rel_err(train::stage_eta(p2, 50), 7.5e-5) <= 1e-12);
  CHECK(train::stage_eta(p2, 100) == 5e-5);
}

TEST_CASE("batches are [CLS] window [SEP] and fill the token budget") {
  const auto& t = toy_setup();
  const auto plan = small_stage1(10);
  train::BatchComposer a(t.data, plan);
  train::BatchComposer b(t.data, plan);
  for (int step = 0; step < 10; ++step) {
    const auto seqs = a.next();
    CHECK(seqs == b.next());
    size_t total = 0;
    for (const auto& s : seqs) {
      CHECK(s.size() <= plan.max_len);
      CHECK(s.front() == tok::kClsId);
      total += s.size();
      for (size_t i = 1; i + 1 < s.size(); ++i) CHECK(s[i] >= tok::kNumSpecials);
    }
    CHECK(total == plan.tokens_per_update());
  }
}

TEST_CASE("zero learning rate leaves the weights unchanged") {
  const auto& t = toy_setup();
  auto plan = StagePlan::stage2_default(4, 256);
  plan.max_len = 64;
  plan.batch_sequences = 4;
  plan.schedule.stage2_start = 0.0;
  plan.schedule.stage2_end = 0.0;
  const auto ck = init_checkpoint(t.config, 1);
  const auto res = train::run_stage(plan, t.data, ck);
  CHECK(same_weights(res.checkpoint, ck));
  REQUIRE(res.trace.size() == 4);
  for (const auto& r : res.trace) CHECK(r.loss > 0);
  REQUIRE(res.checkpoint.training.has_value());
  CHECK(res.checkpoint.training->step == 4);
  CHECK(res.checkpoint.training->stage == "II");
}

TEST_CASE("trace records the scheduled eta and mask rate") {
  const auto& t = toy_setup();
  const auto plan = small_stage1(12);
  const auto res = train::run_stage(plan, t.data, init_checkpoint(t.config, 2));
  REQUIRE(res.trace.size() == 12);
  for (const auto& r : res.trace) {
    CHECK(r.eta == train::stage_eta(plan, r.step));
    CHECK(r.mask_rate == mask::curriculum_rate(plan.curriculum, r.step));
    CHECK(r.tokens == plan.tokens_per_update());
    CHECK(r.masked > 0);
  }
  const std::string csv = train::trace_csv(res.trace);
  CHECK(csv.rfind("step,loss,eta,mask_rate\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 13);
}

TEST_CASE("training lowers the smoothed loss and is bit-reproducible") {
  const auto& t = toy_setup();
  const auto plan = small_stage1(80);
  const auto init = init_checkpoint(t.config, 3);
  const auto a = train::run_stage(plan, t.data, init);
  const auto b = train::run_stage(plan, t.data, init);
  auto mean = [&](size_t from, size_t to) {
    double s = 0;
    for (size_t i = from; i < to; ++i) s += a.trace[i].loss;
    return s / static_cast<double>(to - from);
  };
  CHECK(mean(70, 80) < mean(0, 10));
  CHECK(same_weights(a.checkpoint, b.checkpoint));
  CHECK(train::trace_csv(a.trace) == train::trace_csv(b.trace));

  // A trained model beats its initialization on held-out text.
  const auto held = toy::documents(20, 99);
  const auto before = train::pseudo_perplexity(init, t.model, held, {64}, 8, 1);
  const auto after = train::pseudo_perplexity(a.checkpoint, t.model, held, {64}, 8, 1);
  REQUIRE(before.buckets.size() == 1);
  CHECK(after.buckets[0].pppl < before.buckets[0].pppl);
}

TEST_CASE("an interrupted run resumes to the same result") {
  const auto& t = toy_setup();
  testutil::ScratchDir dir("resume");
  auto plan = small_stage1(16);
  plan.checkpoint_every = 5;
  const auto init = init_checkpoint(t.config, 4);
  const auto full = train::run_stage(plan, t.data, init);

  train::RunOptions stop;
  stop.out_dir = dir.str();
  stop.stop_after = 12;
  const auto partial = train::run_stage(plan, t.data, init, stop);
  CHECK(partial.trace.size() == 12);
  CHECK(std::filesystem::exists(dir / "step_10"));
  CHECK_FALSE(std::filesystem::exists(dir / "checkpoint"));

  const auto snap = Checkpoint::load(dir / "step_10");
  REQUIRE(snap.training.has_value());
  CHECK(snap.training->stage_step == 10);
  train::RunOptions rest;
  rest.out_dir = dir.str();
  const auto resumed = train::run_stage(plan, t.data, snap, rest);
  REQUIRE(resumed.trace.size() == 6);
  CHECK(resumed.trace.front().step == 10);
  for (size_t i = 0; i < 6; ++i) CHECK(resumed.trace[i].loss == full.trace[10 + i].loss);
  CHECK(same_weights(resumed.checkpoint, full.checkpoint));
  CHECK(std::filesystem::exists(dir / "checkpoint"));
  const auto final_ck = Checkpoint::load(dir / "checkpoint");
  CHECK(same_weights(final_ck, full.checkpoint));
  CHECK(final_ck.training->second_moment[3].data == full.checkpoint.training->second_moment[3].data);
}

TEST_CASE("non-finite loss stops the run and dumps state") {
  const auto& t = toy_setup();
  testutil::ScratchDir dir("diverge");
  auto ck = init_checkpoint(t.config, 5);
  std::fill(ck.weights[0].data.begin(), ck.weights[0].data.end(),
            std::numeric_limits<double>::quiet_NaN());
  train::RunOptions opt;
  opt.out_dir = dir.str();
  CHECK_THROWS_AS(train::run_stage(small_stage1(4), t.data, ck, opt), RuntimeError);
  CHECK(std::filesystem::exists(dir / "dump/tensors.bin"));
  CHECK(std::filesystem::exists(dir / "dump/trace.csv"));
}

TEST_CASE("tokenizer and encoder must agree on the vocab") {
  const auto& t = toy_setup();
  auto c = t.config;
  c.vocab_size += 1;
  CHECK_THROWS_AS(train::run_stage(small_stage1(2), t.data, init_checkpoint(c, 1)), ConfigError);
}

TEST_CASE("uniform model has pseudo-perplexity equal to the vocab size") {
  const auto& t = toy_setup();
  const auto ck = zero_model(t.config);
  const auto r = train::pseudo_perplexity(ck, t.model, toy::documents(10, 3), {16, 128}, 4, 2);
  REQUIRE(r.buckets.size() == 2);
  for (const auto& b : r.buckets) {
    CHECK(testutil::rel_err(b.pppl, static_cast<double>(t.model.vocab_size())) <= 1e-12);
    CHECK(b.positions == 4 * b.sequences);
  }
}

TEST_CASE("a model certain of the right token has pseudo-perplexity 1") {
  auto c = toy::encoder(12);
  c.tie_embeddings = false;
  c.layers = 1;
  auto ck = zero_model(c);
  // Residual stream is the [MASK] embedding; the decoder row of token 9
  // points along it.
  auto& embed = ck.weight("embed.weight");
  auto& dec = ck.weight("decoder.weight");
  for (size_t k = 0; k < c.hidden; ++k) {
    embed.data[tok::kMaskId * c.hidden + k] = 1.0;
    dec.data[9 * c.hidden + k] = 100.0;
  }
  for (auto& x : ck.weight("final_norm.weight").data) x = 1.0;
  const std::vector<std::vector<int32_t>> seqs{{tok::kClsId, 9, 9, 9, 9, tok::kSepId}};
  const auto r = train::pseudo_perplexity_ids(ck, seqs, {6}, 8, 0);
  REQUIRE(r.buckets.size() == 1);
  CHECK(r.buckets[0].positions == 4);
  CHECK(std::fabs(r.buckets[0].pppl - 1.0) <= 1e-12);
}

TEST_CASE("pseudo-perplexity matches a one-position-at-a-time oracle") {
  const auto& t = toy_setup();
  const auto ck = init_checkpoint(t.config, 8);
  std::vector<std::vector<int32_t>> seqs;
  for (const auto& d : toy::documents(6, 12)) seqs.push_back(t.model.encode_sequence(d));
  const size_t L = 24;
  const auto r = train::pseudo_perplexity_ids(ck, seqs, {L}, L, 0);
  double sum = 0;
  size_t n = 0;
  for (const auto& s : seqs) {
    if (s.size() < L) continue;
    const std::vector<int32_t> crop(s.begin(), s.begin() + L);
    for (size_t p = 0; p < L; ++p) {
      if (crop[p] < tok::kNumSpecials) continue;
      auto masked = crop;
      masked[p] = tok::kMaskId;
      const auto out = oracle::padded_forward(ck, {masked});
      sum += oracle::nll(out.logits[0][p].data(), t.model.vocab_size(), static_cast<size_t>(crop[p]));
      ++n;
    }
  }
  REQUIRE(r.buckets.size() == 1);
  CHECK(r.buckets[0].positions == n);
  CHECK(testutil::rel_err(r.buckets[0].pppl, std::exp(sum / static_cast<double>(n))) <= 1e-9);
}

TEST_CASE("buckets longer than every text are omitted with a warning") {
  const auto& t = toy_setup();
  const auto ck = init_checkpoint(t.config, 1);
  const auto r = train::pseudo_perplexity_ids(ck, {{2, 10, 11, 3}}, {4, 1000}, 2, 0);
  REQUIRE(r.buckets.size() == 1);
  CHECK(r.buckets[0].length == 4);
  REQUIRE(r.warnings.size() == 1);
  CHECK(r.warnings[0].find("1000") != std::string::npos);
  CHECK_THROWS_AS(train::pseudo_perplexity_ids(ck, {{2, 10, 3}}, {4096}, 2, 0), ConfigError);
  CHECK(train::pppl_csv(r).rfind("length,sequences,positions,mean_nll,pppl\n", 0) == 0);
}
