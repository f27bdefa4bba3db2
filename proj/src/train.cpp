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

#include "cmbert/train.hpp"

#include <algorithm>
#include <cmath>

#include "cmbert/common.hpp"
#include "cmbert/rng.hpp"

namespace cmbert::train {

std::string_view to_string(Stage stage) { return stage == Stage::kI ? "I" : "II"; }

Stage parse_stage(std::string_view text) {
  if (text == "I" || text == "1") return Stage::kI;
  if (text == "II" || text == "2") return Stage::kII;
  throw ConfigError("plan.stage must be I or II, got '" + std::string(text) + "'");
}

void StagePlan::validate() const {
  if (max_len < 3) throw ConfigError("plan.max_len must be >= 3");
  if (batch_sequences == 0) throw ConfigError("plan.batch_sequences must be >= 1");
  if (steps == 0) throw ConfigError("plan.steps must be >= 1");
  if (stage == Stage::kI) {
    if (steps < 2) throw ConfigError("plan.steps must be >= 2 for stage I");
    if (schedule.phase != optim::Phase::kDampedCosine &&
        schedule.phase != optim::Phase::kTrapezoid) {
      throw ConfigError("schedule.kind for stage I must be damped_cosine or trapezoid");
    }
  } else if (schedule.phase != optim::Phase::kStage2Linear) {
    throw ConfigError("schedule.kind for stage II must be stage2_linear");
  }
  if (curriculum.total_steps != steps) {
    throw ConfigError("mask.total_steps must equal plan.steps");
  }
  if (reference_tokens_per_update > 0) {
    const double ref = static_cast<double>(reference_tokens_per_update);
    const double tpu = static_cast<double>(tokens_per_update());
    if (std::abs(tpu - ref) > 0.1 * ref) {
      throw ConfigError("plan.batch_sequences: tokens per update " + std::to_string(tokens_per_update()) +
                        " is not within 10% of " + std::to_string(reference_tokens_per_update));
    }
  }
  curriculum.validate();
  optimizer.validate();
  optim::ScheduleConfig s = schedule;
  s.total_steps = steps;
  s.validate();
}

KvConfig StagePlan::to_kv() const {
  KvConfig kv;
  kv.set("plan", "stage", std::string(to_string(stage)));
  kv.set("plan", "max_len", std::to_string(max_len));
  kv.set("plan", "batch_sequences", std::to_string(batch_sequences));
  kv.set("plan", "steps", std::to_string(steps));
  kv.set("plan", "seed", std::to_string(seed));
  kv.set("plan", "checkpoint_every", std::to_string(checkpoint_every));
  kv.set("plan", "reference_tokens_per_update", std::to_string(reference_tokens_per_update));
  kv.set("plan", "whole_word", whole_word ? "true" : "false");
  optim::ScheduleConfig s = schedule;
  s.total_steps = steps;
  for (const auto& [k, v] : s.to_kv()) kv.set("schedule", k, v);
  for (const auto& [k, v] : curriculum.to_kv()) kv.set("mask", k, v);
  for (const auto& [k, v] : optimizer.to_kv()) kv.set("optimizer", k, v);
  return kv;
}

StagePlan StagePlan::from_kv(const KvConfig& kv) {
  for (const auto& name : kv.section_names()) {
    if (name != "plan" && name != "schedule" && name != "mask" && name != "optimizer" &&
        !(name.empty() && kv.section(name).empty())) {
      throw ConfigError("plan: unknown section [" + name + "]");
    }
  }
  const KvSection empty;
  auto section = [&](const char* name) -> const KvSection& {
    return kv.has_section(name) ? kv.section(name) : empty;
  };
  KvReader r(section("plan"), "plan");
  const Stage stage = parse_stage(r.get_string("stage", "I"));
  StagePlan p = stage == Stage::kI ? stage1_default(200) : stage2_default(50, 0);
  auto count = [&](const char* key, uint64_t dflt) {
    const int64_t v = r.get_int(key, static_cast<int64_t>(dflt));
    if (v < 0) throw ConfigError(std::string("plan.") + key + " must be >= 0");
    return static_cast<uint64_t>(v);
  };
  p.max_len = count("max_len", p.max_len);
  p.batch_sequences = count("batch_sequences", p.batch_sequences);
  p.steps = count("steps", p.steps);
  p.seed = count("seed", p.seed);
  p.checkpoint_every = count("checkpoint_every", p.checkpoint_every);
  p.reference_tokens_per_update =
      count("reference_tokens_per_update", p.reference_tokens_per_update);
  p.whole_word = r.get_bool("whole_word", p.whole_word);
  r.finish();

  // The plan's step count governs the schedule and curriculum lengths.
  KvSection sched = p.schedule.to_kv();
  for (const auto& [k, v] : section("schedule")) sched[k] = v;
  sched["total_steps"] = std::to_string(std::max<uint64_t>(p.steps, 1));
  p.schedule = optim::ScheduleConfig::from_kv(sched);
  KvSection cur = p.curriculum.to_kv();
  for (const auto& [k, v] : section("mask")) cur[k] = v;
  cur["total_steps"] = std::to_string(std::max<uint64_t>(p.steps, 1));
  p.curriculum = mask::MaskingCurriculum::from_kv(cur);
  p.optimizer = optim::AdamWConfig::from_kv(section("optimizer"));
  p.validate();
  return p;
}

StagePlan StagePlan::stage1_default(uint64_t steps) {
  StagePlan p;
  p.stage = Stage::kI;
  p.max_len = 128;
  p.batch_sequences = 8;
  p.steps = steps;
  p.schedule.phase = optim::Phase::kDampedCosine;
  p.schedule.total_steps = steps;
  p.curriculum.total_steps = steps;
  return p;
}

StagePlan StagePlan::stage2_default(uint64_t steps, size_t stage1_tokens_per_update) {
  StagePlan p;
  p.stage = Stage::kII;
  p.max_len = 1024;
  p.batch_sequences = 1;
  p.steps = steps;
  p.reference_tokens_per_update = stage1_tokens_per_update;
  p.schedule.phase = optim::Phase::kStage2Linear;
  p.schedule.total_steps = steps;
  p.curriculum.total_steps = steps;
  p.curriculum.r_start = p.curriculum.r_end;
  p.curriculum.r_peak = p.curriculum.r_end;
  return p;
}

double stage_eta(const StagePlan& plan, uint64_t step) {
  optim::ScheduleConfig c = plan.schedule;
  if (plan.stage == Stage::kII) {
    c.total_steps = plan.steps;
    return optim::stage2_eta(c, step);
  }
  if (c.phase == optim::Phase::kTrapezoid) {
    c.total_steps = plan.steps;
    return optim::trapezoid_eta(c, step);
  }
  mask::MaskingCurriculum cur = plan.curriculum;
  cur.total_steps = plan.steps;
  const uint64_t w = cur.warmup_steps();
  if (step <= w) {
    c.total_steps = w;
    return optim::warmup_eta(c, step);
  }
  if (step > plan.steps) {
    throw ContractError("stage_eta: step " + std::to_string(step) + " beyond " +
                        std::to_string(plan.steps));
  }
  c.total_steps = plan.steps - w;
  return optim::damped_cosine_eta(c, step - w);
}

// ---------------------------------------------------------------------------
// Data

TrainData load_train_data(const corpus::CorpusManifest& manifest,
                          const tok::TokenizerModel& tokenizer) {
  manifest.validate();
  TrainData data;
  data.tokenizer = &tokenizer;
  for (const auto& src : manifest.sources) {
    SourceData sd;
    sd.name = src.name;
    sd.ratio = src.ratio;
    for (const auto& doc : corpus::read_records(src.path)) {
      auto ids = tokenizer.encode(doc);
      if (!ids.empty()) sd.docs.push_back(std::move(ids));
    }
    if (sd.docs.empty()) {
      throw ConfigError("manifest: source." + src.name + " has no non-empty documents");
    }
    data.sources.push_back(std::move(sd));
  }
  return data;
}

BatchComposer::BatchComposer(const TrainData& data, const StagePlan& plan)
    : data_(data), plan_(plan) {
  std::vector<double> ratios;
  std::vector<std::vector<size_t>> lengths;
  for (const auto& s : data.sources) {
    ratios.push_back(s.ratio);
    auto& l = lengths.emplace_back();
    for (const auto& d : s.docs) l.push_back(std::min(d.size(), plan.max_len - 2));
  }
  probs_ = corpus::draw_probabilities(ratios, lengths);
  cursor_.assign(data.sources.size(), 0);
  epochs_.assign(data.sources.size(), 0);
  order_.resize(data.sources.size());
}

size_t BatchComposer::next_doc(size_t source) {
  const size_t n = data_.sources[source].docs.size();
  const uint64_t k = cursor_[source]++;
  const uint64_t epoch = k / n;
  if (order_[source].empty() || epoch != epochs_[source]) {
    epochs_[source] = epoch;
    order_[source].resize(n);
    for (size_t i = 0; i < n; ++i) order_[source][i] = i;
    Rng rng(derive_seed(derive_seed(plan_.seed, "train.epoch", source), "order", epoch));
    rng.shuffle(order_[source]);
  }
  return order_[source][k % n];
}

std::vector<std::vector<int32_t>> BatchComposer::next() {
  const std::string label = "train.batch." + std::string(to_string(plan_.stage));
  Rng rng(derive_seed(plan_.seed, label, step_));
  ++step_;
  const size_t budget = plan_.tokens_per_update();
  std::vector<std::vector<int32_t>> seqs;
  size_t filled = 0;
  while (budget - filled >= 3) {
    const size_t s = rng.categorical(probs_);
    const auto& doc = data_.sources[s].docs[next_doc(s)];
    const size_t room = std::min(plan_.max_len, budget - filled) - 2;
    const size_t n = std::min(room, doc.size());
    const size_t offset = doc.size() > n ? static_cast<size_t>(rng.below(doc.size() - n + 1)) : 0;
    std::vector<int32_t> seq;
    seq.reserve(n + 2);
    seq.push_back(tok::kClsId);
    seq.insert(seq.end(), doc.begin() + static_cast<std::ptrdiff_t>(offset),
               doc.begin() + static_cast<std::ptrdiff_t>(offset + n));
    seq.push_back(tok::kSepId);
    filled += seq.size();
    seqs.push_back(std::move(seq));
  }
  return seqs;
}

std::string trace_csv(const std::vector<TraceRow>& rows) {
  std::string out = "step,loss,eta,mask_rate\n";
  for (const auto& r : rows) {
    out += std::to_string(r.step) + "," + format_double(r.loss) + "," + format_double(r.eta) +
           "," + format_double(r.mask_rate) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stage driver

namespace {

void store_state(Checkpoint& ckpt, const optim::OptimizerState& opt, const StagePlan& plan,
                 uint64_t stage_step) {
  opt.store(ckpt);
  ckpt.training->stage = std::string(to_string(plan.stage));
  ckpt.training->stage_step = stage_step;
}

}  // namespace

StageResult run_stage(const StagePlan& plan, const TrainData& data, Checkpoint ckpt,
                      const RunOptions& options) {
  plan.validate();
  if (data.tokenizer == nullptr) throw ContractError("run_stage: data has no tokenizer");
  const tok::TokenizerModel& tokenizer = *data.tokenizer;
  if (ckpt.config.vocab_size != tokenizer.vocab_size()) {
    throw ConfigError("encoder.vocab_size " + std::to_string(ckpt.config.vocab_size) +
                      " does not match tokenizer size " + std::to_string(tokenizer.vocab_size()));
  }
  if (plan.max_len > ckpt.config.max_context) {
    throw ConfigError("plan.max_len exceeds encoder.max_context");
  }

  optim::OptimizerState opt = optim::OptimizerState::from_checkpoint(ckpt);
  uint64_t start = 0;
  if (ckpt.training && ckpt.training->stage == to_string(plan.stage)) {
    start = std::min(ckpt.training->stage_step, plan.steps);
  }
  BatchComposer composer(data, plan);
  for (uint64_t i = 0; i < start; ++i) composer.next();

  std::vector<int32_t> pool;
  for (size_t id = 0; id < tokenizer.vocab_size(); ++id) {
    if (!tokenizer.is_special(static_cast<int32_t>(id))) pool.push_back(static_cast<int32_t>(id));
  }
  const std::string mask_label = "train.mask." + std::string(to_string(plan.stage));

  auto fail = [&](const std::string& why, uint64_t step, const std::vector<TraceRow>& trace) {
    if (!options.out_dir.empty()) {
      Checkpoint dump = ckpt;
      store_state(dump, opt, plan, step);
      dump.save(options.out_dir + "/dump");
      write_file(options.out_dir + "/dump/trace.csv", trace_csv(trace));
    }
    throw RuntimeError("stage " + std::string(to_string(plan.stage)) + " step " +
                       std::to_string(step) + ": " + why);
  };

  StageResult result;
  uint64_t completed = start;
  for (uint64_t step = start; step < plan.steps; ++step) {
    if (options.stop_after > 0 && step - start >= options.stop_after) break;
    const auto seqs = composer.next();
    const double rate = mask::curriculum_rate(plan.curriculum, step);
    const double eta = stage_eta(plan, step);

    std::vector<std::vector<int32_t>> inputs;
    std::vector<int32_t> labels;
    std::vector<size_t> rows;
    size_t offset = 0;
    const uint64_t step_seed = derive_seed(plan.seed, mask_label, step);
    for (size_t j = 0; j < seqs.size(); ++j) {
      mask::WordGrouping g = mask::group_words(seqs[j], tokenizer);
      if (!plan.whole_word) g = mask::split_to_tokens(g);
      const uint64_t seq_seed = derive_seed(step_seed, "sequence", j);
      const auto mplan = mask::realize_mask(g, rate, seq_seed);
      auto masked = mask::apply_mask(seqs[j], mplan, pool, tok::kMaskId, seq_seed);
      for (size_t p : mplan.masked_positions) {
        rows.push_back(offset + p);
        labels.push_back(masked.labels[p]);
      }
      offset += seqs[j].size();
      inputs.push_back(std::move(masked.input_ids));
    }

    TraceRow row;
    row.step = step;
    row.eta = eta;
    row.mask_rate = rate;
    row.tokens = offset;
    row.masked = rows.size();
    if (!rows.empty()) {
      const PackedBatch batch = PackedBatch::pack(inputs);
      ForwardOptions fo;
      fo.logit_rows = rows;
      fo.keep_cache = true;
      const ForwardResult fr = forward(ckpt, batch, fo);
      const MlmLoss loss = mlm_loss(fr.logits, labels);
      row.loss = loss.loss;
      if (!std::isfinite(loss.loss)) fail("non-finite loss", step, result.trace);
      const auto grads = backward(ckpt, batch, fr, loss.dlogits);
      const auto rep = optim::stable_adamw_step(ckpt.weights, opt, grads, eta, plan.optimizer);
      if (!rep.applied) fail(rep.error, step, result.trace);
    }
    result.trace.push_back(row);
    if (options.on_step) options.on_step(row);
    completed = step + 1;

    if (!options.out_dir.empty() && plan.checkpoint_every > 0 &&
        completed % plan.checkpoint_every == 0 && completed < plan.steps) {
      Checkpoint snap = ckpt;
      store_state(snap, opt, plan, completed);
      snap.save(options.out_dir + "/step_" + std::to_string(completed));
    }
  }

  store_state(ckpt, opt, plan, completed);
  if (!options.out_dir.empty() && completed == plan.steps) {
    ckpt.save(options.out_dir + "/checkpoint");
  }
  result.checkpoint = std::move(ckpt);
  return result;
}

// ---------------------------------------------------------------------------
// Pseudo-perplexity

PpplReport pseudo_perplexity_ids(const Checkpoint& ckpt,
                                 const std::vector<std::vector<int32_t>>& sequences,
                                 const std::vector<size_t>& buckets,
                                 size_t positions_per_seq, uint64_t seed) {
  if (positions_per_seq == 0) throw ConfigError("pppl positions_per_seq must be >= 1");
  PpplReport report;
  report.positions_per_seq = positions_per_seq;
  report.seed = seed;
  constexpr size_t kTokensPerForward = 8192;

  for (size_t L : buckets) {
    if (L < 2 || L > ckpt.config.max_context) {
      throw ConfigError("pppl bucket " + std::to_string(L) + " outside [2, max_context]");
    }
    PpplBucket b;
    b.length = L;
    double nll_sum = 0.0;

    std::vector<std::vector<int32_t>> copies;
    std::vector<int32_t> targets;
    std::vector<size_t> rows;
    size_t flat = 0;
    auto flush = [&]() {
      if (copies.empty()) return;
      const PackedBatch batch = PackedBatch::pack(copies);
      ForwardOptions fo;
      fo.logit_rows = rows;
      const ForwardResult fr = forward(ckpt, batch, fo);
      for (size_t r = 0; r < rows.size(); ++r) {
        const double* z = fr.logits.row(r);
        double mx = z[0];
        for (size_t v = 1; v < fr.logits.cols; ++v) mx = std::max(mx, z[v]);
        double s = 0.0;
        for (size_t v = 0; v < fr.logits.cols; ++v) s += std::exp(z[v] - mx);
        nll_sum += mx + std::log(s) - z[targets[r]];
      }
      copies.clear();
      targets.clear();
      rows.clear();
      flat = 0;
    };

    for (size_t q = 0; q < sequences.size(); ++q) {
      if (sequences[q].size() < L) continue;
      const std::vector<int32_t> seq(sequences[q].begin(),
                                     sequences[q].begin() + static_cast<std::ptrdiff_t>(L));
      std::vector<size_t> cand;
      for (size_t p = 0; p < L; ++p) {
        if (seq[p] >= tok::kNumSpecials) cand.push_back(p);
      }
      if (cand.empty()) continue;
      ++b.sequences;
      Rng rng(derive_seed(derive_seed(seed, "pppl.positions", L), "sequence", q));
      rng.shuffle(cand);
      cand.resize(std::min(cand.size(), positions_per_seq));
      std::sort(cand.begin(), cand.end());
      for (size_t p : cand) {
        if (flat + L > kTokensPerForward) flush();
        std::vector<int32_t> c = seq;
        c[p] = tok::kMaskId;
        rows.push_back(flat + p);
        targets.push_back(seq[p]);
        flat += L;
        copies.push_back(std::move(c));
        ++b.positions;
      }
    }
    flush();
    if (b.sequences == 0) {
      report.warnings.push_back("pppl bucket " + std::to_string(L) +
                                ": no sequence has that many tokens; omitted");
      continue;
    }
    b.mean_nll = nll_sum / static_cast<double>(b.positions);
    b.pppl = std::exp(b.mean_nll);
    report.buckets.push_back(b);
  }
  return report;
}

PpplReport pseudo_perplexity(const Checkpoint& ckpt, const tok::TokenizerModel& tokenizer,
                             const std::vector<std::string>& texts,
                             const std::vector<size_t>& buckets, size_t positions_per_seq,
                             uint64_t seed) {
  std::vector<std::vector<int32_t>> seqs;
  seqs.reserve(texts.size());
  for (const auto& t : texts) seqs.push_back(tokenizer.encode_sequence(t));
  return pseudo_perplexity_ids(ckpt, seqs, buckets, positions_per_seq, seed);
}

std::string pppl_csv(const PpplReport& report) {
  std::string out = "length,sequences,positions,mean_nll,pppl\n";
  for (const auto& b : report.buckets) {
    out += std::to_string(b.length) + "," + std::to_string(b.sequences) + "," +
           std::to_string(b.positions) + "," + format_double(b.mean_nll) + "," +
           format_double(b.pppl) + "\n";
  }
  return out;
}

}  // namespace cmbert::train
