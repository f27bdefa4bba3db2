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

#include "cmbert/optim.hpp"

#include <cmath>
#include <numbers>

#include "cmbert/common.hpp"

namespace cmbert::optim {

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::kWarmupRamp: return "warmup_ramp";
    case Phase::kDampedCosine: return "damped_cosine";
    case Phase::kStage2Linear: return "stage2_linear";
    case Phase::kTrapezoid: return "trapezoid";
  }
  return "damped_cosine";
}

Phase parse_phase(std::string_view text) {
  if (text == "warmup_ramp" || text == "warmup") return Phase::kWarmupRamp;
  if (text == "damped_cosine") return Phase::kDampedCosine;
  if (text == "stage2_linear" || text == "stage2") return Phase::kStage2Linear;
  if (text == "trapezoid" || text == "wsd") return Phase::kTrapezoid;
  throw ConfigError("unknown schedule kind '" + std::string(text) + "'");
}

void ScheduleConfig::validate() const {
  if (!(eta_min < eta_max)) throw ConfigError("schedule.eta_min must be < eta_max");
  if (cycles < 1) throw ConfigError("schedule.cycles must be >= 1");
  if (total_steps < 1) throw ConfigError("schedule.total_steps must be >= 1");
  if (!(gamma >= 0 && gamma <= 1)) throw ConfigError("schedule.gamma must be in [0, 1]");
  if (!(trapezoid_warmup_fraction >= 0 && trapezoid_decay_fraction >= 0 &&
        trapezoid_warmup_fraction + trapezoid_decay_fraction <= 1)) {
    throw ConfigError("schedule trapezoid fractions must be >= 0 and sum to <= 1");
  }
}

KvSection ScheduleConfig::to_kv() const {
  KvSection s;
  s["kind"] = std::string(to_string(phase));
  s["eta_max"] = format_double(eta_max);
  s["eta_min"] = format_double(eta_min);
  s["cycles"] = std::to_string(cycles);
  s["gamma"] = format_double(gamma);
  s["total_steps"] = std::to_string(total_steps);
  s["warmup_start"] = format_double(warmup_start);
  s["warmup_end"] = format_double(warmup_end);
  s["stage2_start"] = format_double(stage2_start);
  s["stage2_end"] = format_double(stage2_end);
  s["trapezoid_warmup_fraction"] = format_double(trapezoid_warmup_fraction);
  s["trapezoid_decay_fraction"] = format_double(trapezoid_decay_fraction);
  return s;
}

ScheduleConfig ScheduleConfig::from_kv(const KvSection& section) {
  ScheduleConfig c;
  KvReader r(section, "schedule");
  c.phase = parse_phase(r.get_string("kind", std::string(to_string(c.phase))));
  c.eta_max = r.get_double("eta_max", c.eta_max);
  c.eta_min = r.get_double("eta_min", c.eta_min);
  const int64_t cycles = r.get_int("cycles", static_cast<int64_t>(c.cycles));
  const int64_t total = r.get_int("total_steps", static_cast<int64_t>(c.total_steps));
  if (cycles < 1 || total < 1) throw ConfigError("schedule cycles/total_steps must be >= 1");
  c.cycles = static_cast<uint64_t>(cycles);
  c.total_steps = static_cast<uint64_t>(total);
  c.gamma = r.get_double("gamma", c.gamma);
  c.warmup_start = r.get_double("warmup_start", c.warmup_start);
  c.warmup_end = r.get_double("warmup_end", c.warmup_end);
  c.stage2_start = r.get_double("stage2_start", c.stage2_start);
  c.stage2_end = r.get_double("stage2_end", c.stage2_end);
  c.trapezoid_warmup_fraction =
      r.get_double("trapezoid_warmup_fraction", c.trapezoid_warmup_fraction);
  c.trapezoid_decay_fraction = r.get_double("trapezoid_decay_fraction", c.trapezoid_decay_fraction);
  r.finish();
  c.validate();
  return c;
}

namespace {

double progress(const ScheduleConfig& cfg, uint64_t step) {
  if (step > cfg.total_steps) {
    throw ContractError("schedule step " + std::to_string(step) + " beyond total " +
                        std::to_string(cfg.total_steps));
  }
  return static_cast<double>(step) / static_cast<double>(cfg.total_steps);
}

}  // namespace

double peak(const ScheduleConfig& cfg, double p) {
  return cfg.eta_max * (1.0 - (1.0 - cfg.gamma) * p);
}

double valley(const ScheduleConfig& cfg, double p) {
  return cfg.eta_max / 2.0 * (1.0 - p) + cfg.eta_min * p;
}

double damped_cosine_eta(const ScheduleConfig& cfg, uint64_t step) {
  const double p = progress(cfg, step);
  const double hi = peak(cfg, p);
  const double lo = valley(cfg, p);
  const double k = static_cast<double>(2 * cfg.cycles - 1);
  return (hi + lo) / 2.0 + (hi - lo) / 2.0 * std::cos(std::numbers::pi * k * p);
}

double warmup_eta(const ScheduleConfig& cfg, uint64_t step) {
  return std::lerp(cfg.warmup_start, cfg.warmup_end, progress(cfg, step));
}

double stage2_eta(const ScheduleConfig& cfg, uint64_t step) {
  return std::lerp(cfg.stage2_start, cfg.stage2_end, progress(cfg, step));
}

double trapezoid_eta(const ScheduleConfig& cfg, uint64_t step) {
  const double p = progress(cfg, step);
  const double w = cfg.trapezoid_warmup_fraction;
  const double d = cfg.trapezoid_decay_fraction;
  if (w > 0 && p < w) return std::lerp(cfg.eta_min, cfg.eta_max, p / w);
  if (p <= 1.0 - d || d == 0) return cfg.eta_max;
  return std::lerp(cfg.eta_max, cfg.eta_min, 1.0 - (1.0 - p) / d);
}

double schedule_eta(const ScheduleConfig& cfg, uint64_t step) {
  switch (cfg.phase) {
    case Phase::kWarmupRamp: return warmup_eta(cfg, step);
    case Phase::kDampedCosine: return damped_cosine_eta(cfg, step);
    case Phase::kStage2Linear: return stage2_eta(cfg, step);
    case Phase::kTrapezoid: return trapezoid_eta(cfg, step);
  }
  return damped_cosine_eta(cfg, step);
}

// ---------------------------------------------------------------------------
// StableAdamW

void AdamWConfig::validate() const {
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) {
    throw ConfigError("optimizer betas must be in [0, 1)");
  }
  if (!(weight_decay >= 0)) throw ConfigError("optimizer.weight_decay must be >= 0");
  if (!(eps > 0)) throw ConfigError("optimizer.eps must be > 0");
}

KvSection AdamWConfig::to_kv() const {
  KvSection s;
  s["beta1"] = format_double(beta1);
  s["beta2"] = format_double(beta2);
  s["weight_decay"] = format_double(weight_decay);
  s["grad_clip_norm"] = format_double(grad_clip_norm);
  s["eps"] = format_double(eps);
  s["rms_clip"] = rms_clip ? "true" : "false";
  return s;
}

AdamWConfig AdamWConfig::from_kv(const KvSection& section) {
  AdamWConfig c;
  KvReader r(section, "optimizer");
  c.beta1 = r.get_double("beta1", c.beta1);
  c.beta2 = r.get_double("beta2", c.beta2);
  c.weight_decay = r.get_double("weight_decay", c.weight_decay);
  c.grad_clip_norm = r.get_double("grad_clip_norm", c.grad_clip_norm);
  c.eps = r.get_double("eps", c.eps);
  c.rms_clip = r.get_bool("rms_clip", c.rms_clip);
  r.finish();
  c.validate();
  return c;
}

OptimizerState OptimizerState::zeros(const std::vector<Tensor>& weights) {
  OptimizerState s;
  for (const auto& w : weights) {
    s.m.emplace_back(w.numel(), 0.0);
    s.v.emplace_back(w.numel(), 0.0);
  }
  return s;
}

OptimizerState OptimizerState::from_checkpoint(const Checkpoint& ckpt) {
  if (!ckpt.training) return zeros(ckpt.weights);
  OptimizerState s;
  s.step = ckpt.training->step;
  for (const auto& t : ckpt.training->first_moment) s.m.push_back(t.data);
  for (const auto& t : ckpt.training->second_moment) s.v.push_back(t.data);
  if (s.m.size() != ckpt.weights.size() || s.v.size() != ckpt.weights.size()) {
    throw InputError("optimizer state does not match checkpoint weights");
  }
  return s;
}

void OptimizerState::store(Checkpoint& ckpt) const {
  TrainingState st;
  if (ckpt.training) st = *ckpt.training;
  st.first_moment.clear();
  st.second_moment.clear();
  st.step = step;
  for (size_t i = 0; i < ckpt.weights.size(); ++i) {
    const Tensor& w = ckpt.weights[i];
    st.first_moment.push_back(Tensor{"optim.m." + w.name, w.shape, m[i]});
    st.second_moment.push_back(Tensor{"optim.v." + w.name, w.shape, v[i]});
  }
  ckpt.training = std::move(st);
}

StepReport stable_adamw_step(std::vector<Tensor>& weights, OptimizerState& state,
                             const std::vector<Tensor>& grads, double eta,
                             const AdamWConfig& cfg) {
  StepReport rep;
  if (grads.size() != weights.size() || state.m.size() != weights.size() ||
      state.v.size() != weights.size()) {
    throw ContractError("stable_adamw_step: weights, grads and state disagree");
  }
  double sq = 0.0;
  for (size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].data.size() != weights[i].data.size()) {
      throw ContractError("gradient shape mismatch for " + weights[i].name);
    }
    for (double g : grads[i].data) {
      if (!std::isfinite(g)) {
        rep.error = "non-finite gradient in " + weights[i].name;
        return rep;
      }
      sq += g * g;
    }
  }
  rep.grad_norm = std::sqrt(sq);
  if (cfg.grad_clip_norm > 0 && rep.grad_norm > cfg.grad_clip_norm) {
    rep.clip_scale = cfg.grad_clip_norm / rep.grad_norm;
  }

  const uint64_t t = state.step + 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (size_t i = 0; i < weights.size(); ++i) {
    auto& w = weights[i].data;
    auto& m = state.m[i];
    auto& v = state.v[i];
    const auto& g = grads[i].data;
    double rms_acc = 0.0;
    for (size_t k = 0; k < w.size(); ++k) {
      const double gk = g[k] * rep.clip_scale;
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
      const double mh = m[k] / bc1;
      const double vh = v[k] / bc2;
      rms_acc += mh * mh / (vh + cfg.eps);
    }
    const double rms = w.empty() ? 0.0 : std::sqrt(rms_acc / static_cast<double>(w.size()));
    const double eta_eff = cfg.rms_clip ? eta / std::max(1.0, rms) : eta;
    rep.effective_eta.push_back(eta_eff);
    for (size_t k = 0; k < w.size(); ++k) {
      const double mh = m[k] / bc1;
      const double vh = v[k] / bc2;
      w[k] -= eta * cfg.weight_decay * w[k] + eta_eff * mh / (std::sqrt(vh) + cfg.eps);
    }
  }
  state.step = t;
  rep.applied = true;
  return rep;
}

}  // namespace cmbert::optim
