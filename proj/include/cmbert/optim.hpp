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

#ifndef CMBERT_OPTIM_HPP_
#define CMBERT_OPTIM_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "cmbert/encoder.hpp"
#include "cmbert/kvconfig.hpp"

namespace cmbert::optim {

enum class Phase { kWarmupRamp, kDampedCosine, kStage2Linear, kTrapezoid };

std::string_view to_string(Phase phase);
Phase parse_phase(std::string_view text);

// Learning-rate schedule parameters. `total_steps` is the length of the
// phase the config describes; steps are phase-local.
struct ScheduleConfig {
  Phase phase = Phase::kDampedCosine;
  double eta_max = 8e-4;
  double eta_min = 5e-5;
  uint64_t cycles = 3;    // N
  double gamma = 0.1;     // peak damping factor
  uint64_t total_steps = 1000;

  double warmup_start = 5e-5;
  double warmup_end = 8e-4;
  double stage2_start = 1e-4;
  double stage2_end = 5e-5;

  // Trapezoid (warmup-stable-decay) comparison schedule.
  double trapezoid_warmup_fraction = 0.04;
  double trapezoid_decay_fraction = 0.2;

  void validate() const;
  KvSection to_kv() const;
  static ScheduleConfig from_kv(const KvSection& section);
};

// Upper envelope eta_max * (1 - (1 - gamma) p).
double peak(const ScheduleConfig& cfg, double p);
// Lower line eta_max / 2 * (1 - p) + eta_min * p.
double valley(const ScheduleConfig& cfg, double p);

// (Peak + Valley) / 2 + (Peak - Valley) / 2 * cos(pi (2N - 1) p), p = step / S.
double damped_cosine_eta(const ScheduleConfig& cfg, uint64_t step);
double warmup_eta(const ScheduleConfig& cfg, uint64_t step);
double stage2_eta(const ScheduleConfig& cfg, uint64_t step);
double trapezoid_eta(const ScheduleConfig& cfg, uint64_t step);

// Dispatches on cfg.phase.
double schedule_eta(const ScheduleConfig& cfg, uint64_t step);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double weight_decay = 0.1;
  double grad_clip_norm = 1.0;  // <= 0 disables global-norm clipping
  double eps = 1e-8;
  bool rms_clip = true;         // StableAdamW per-tensor step cap

  void validate() const;
  KvSection to_kv() const;
  static AdamWConfig from_kv(const KvSection& section);
};

struct OptimizerState {
  uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  static OptimizerState zeros(const std::vector<Tensor>& weights);
  static OptimizerState from_checkpoint(const Checkpoint& ckpt);
  void store(Checkpoint& ckpt) const;
};

struct StepReport {
  bool applied = false;
  double grad_norm = 0.0;
  double clip_scale = 1.0;
  std::vector<double> effective_eta;  // per tensor
  std::string error;
};

// One StableAdamW update: global-norm clip, bias-corrected moments,
// per-tensor eta_eff = eta / max(1, RMS(m_hat / sqrt(v_hat + eps))), and
// decoupled weight decay eta * weight_decay * w. Non-finite gradients leave
// weights and state untouched and return applied = false.
StepReport stable_adamw_step(std::vector<Tensor>& weights, OptimizerState& state,
                             const std::vector<Tensor>& grads, double eta,
                             const AdamWConfig& cfg);

}  // namespace cmbert::optim

#endif  // CMBERT_OPTIM_HPP_
