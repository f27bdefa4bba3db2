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

#ifndef CMBERT_TRAIN_HPP_
#define CMBERT_TRAIN_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cmbert/corpus.hpp"
#include "cmbert/encoder.hpp"
#include "cmbert/kvconfig.hpp"
#include "cmbert/optim.hpp"
#include "cmbert/tokenizer.hpp"
#include "cmbert/wordmask.hpp"

namespace cmbert::train {

enum class Stage { kI, kII };

std::string_view to_string(Stage stage);
Stage parse_stage(std::string_view text);

// One pre-training stage. `steps` governs the stage: the masking curriculum
// spans all of it, and the LR schedule is
//   Stage I:  warmup ramp over the curriculum's warmup steps, then the
//             damped cosine over the remaining steps;
//   Stage II: linear stage-2 decay over all steps.
struct StagePlan {
  Stage stage = Stage::kI;
  size_t max_len = 128;
  size_t batch_sequences = 8;
  uint64_t steps = 200;
  uint64_t seed = 0;
  uint64_t checkpoint_every = 0;  // 0 = only at the end
  // Stage I's tokens per update; Stage II must stay within 10% of it.
  size_t reference_tokens_per_update = 0;
  optim::ScheduleConfig schedule;
  mask::MaskingCurriculum curriculum;
  optim::AdamWConfig optimizer;
  bool whole_word = true;

  size_t tokens_per_update() const { return batch_sequences * max_len; }

  // Throws ConfigError.
  void validate() const;
  // Sections [plan], [schedule], [mask], [optimizer].
  KvConfig to_kv() const;
  static StagePlan from_kv(const KvConfig& kv);

  // Desk-scale defaults: 128-token Stage I, 1024-token Stage II.
  static StagePlan stage1_default(uint64_t steps);
  static StagePlan stage2_default(uint64_t steps, size_t stage1_tokens_per_update);
};

// Learning rate at stage-local step in [0, steps].
double stage_eta(const StagePlan& plan, uint64_t step);

struct SourceData {
  std::string name;
  double ratio = 0.0;
  std::vector<std::vector<int32_t>> docs;  // token ids, no [CLS]/[SEP]
};

struct TrainData {
  const tok::TokenizerModel* tokenizer = nullptr;
  std::vector<SourceData> sources;
};

// Reads every source of the manifest and tokenizes it.
TrainData load_train_data(const corpus::CorpusManifest& manifest,
                          const tok::TokenizerModel& tokenizer);

// Builds the sequences of one update. Each source is read as a stream in a
// seeded per-epoch order and wraps with a fresh shuffle when exhausted.
// Sequences are [CLS] window [SEP] and fill the buffer greedily up to
// tokens_per_update; the last one is cut to fit.
class BatchComposer {
 public:
  BatchComposer(const TrainData& data, const StagePlan& plan);

  std::vector<std::vector<int32_t>> next();
  uint64_t step() const { return step_; }
  // Epoch index each source is currently in.
  const std::vector<uint64_t>& epochs() const { return epochs_; }

 private:
  size_t next_doc(size_t source);

  const TrainData& data_;
  StagePlan plan_;
  std::vector<double> probs_;
  std::vector<uint64_t> cursor_;
  std::vector<uint64_t> epochs_;
  std::vector<std::vector<size_t>> order_;
  uint64_t step_ = 0;
};

struct TraceRow {
  uint64_t step = 0;
  double loss = 0.0;
  double eta = 0.0;
  double mask_rate = 0.0;
  size_t tokens = 0;
  size_t masked = 0;
};

std::string trace_csv(const std::vector<TraceRow>& rows);

struct RunOptions {
  // When set, checkpoints go to <out_dir>/step_<n> every checkpoint_every
  // steps and the final one to <out_dir>/checkpoint.
  std::string out_dir;
  // Stop after this many steps of the stage (0 = run to the end); used to
  // simulate an interrupted run.
  uint64_t stop_after = 0;
  std::function<void(const TraceRow&)> on_step;
};

struct StageResult {
  Checkpoint checkpoint;
  std::vector<TraceRow> trace;
};

// Runs (or resumes) one stage. A checkpoint whose training state was written
// by the same stage resumes at its stage step; anything else starts the
// stage from step 0 and keeps the optimizer moments. Non-finite loss throws
// RuntimeError after dumping the state to <out_dir>/dump when out_dir is set.
StageResult run_stage(const StagePlan& plan, const TrainData& data, Checkpoint ckpt,
                      const RunOptions& options = {});

struct PpplBucket {
  size_t length = 0;
  size_t sequences = 0;
  size_t positions = 0;
  double mean_nll = 0.0;
  double pppl = 0.0;
};

struct PpplReport {
  std::vector<PpplBucket> buckets;  // buckets with no sequences are omitted
  std::vector<std::string> warnings;
  size_t positions_per_seq = 0;
  uint64_t seed = 0;
};

// For bucket length L, every tokenized text with at least L tokens (with
// [CLS]/[SEP]) is cropped to L. Up to positions_per_seq non-special
// positions are sampled per sequence; each is replaced by [MASK] alone and
// scored by -log p(x_i | rest). PPPL = exp(mean).
PpplReport pseudo_perplexity(const Checkpoint& ckpt, const tok::TokenizerModel& tokenizer,
                             const std::vector<std::string>& texts,
                             const std::vector<size_t>& buckets, size_t positions_per_seq,
                             uint64_t seed);

// Same, on already tokenized sequences (with [CLS]/[SEP]); specials are
// never scored.
PpplReport pseudo_perplexity_ids(const Checkpoint& ckpt,
                                 const std::vector<std::vector<int32_t>>& sequences,
                                 const std::vector<size_t>& buckets,
                                 size_t positions_per_seq, uint64_t seed);

std::string pppl_csv(const PpplReport& report);

}  // namespace cmbert::train

#endif  // CMBERT_TRAIN_HPP_
