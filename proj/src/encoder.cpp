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

#include "cmbert/encoder.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <map>

#include "cmbert/common.hpp"
#include "cmbert/rng.hpp"

namespace cmbert {

// ---------------------------------------------------------------------------
// Config

size_t EncoderConfig::ffn_width() const {
  if (intermediate != 0) return intermediate;
  const auto raw = static_cast<size_t>(std::floor(ffn_expansion * static_cast<double>(hidden)));
  return std::max<size_t>(64, raw / 64 * 64);
}

bool EncoderConfig::is_global_layer(size_t layer) const {
  return layer % global_layer_interval == global_layer_offset % global_layer_interval;
}

void EncoderConfig::validate() const {
  if (layers == 0) throw ConfigError("encoder.layers must be >= 1");
  if (hidden == 0 || heads == 0) throw ConfigError("encoder.hidden and heads must be >= 1");
  if (hidden % heads != 0) throw ConfigError("encoder.hidden must be divisible by heads");
  if (head_dim() % 2 != 0) throw ConfigError("encoder head_dim must be even for RoPE");
  if (global_layer_interval == 0) throw ConfigError("encoder.global_layer_interval must be >= 1");
  if (local_window_radius == 0) throw ConfigError("encoder.local_window_radius must be >= 1");
  if (max_context == 0) throw ConfigError("encoder.max_context must be >= 1");
  if (!(rope_theta_global > 0) || !(rope_theta_local > 0)) {
    throw ConfigError("encoder RoPE bases must be positive");
  }
  if (!(norm_eps > 0)) throw ConfigError("encoder.norm_eps must be positive");
  if (!(init_std >= 0)) throw ConfigError("encoder.init_std must be >= 0");
  if (!(ffn_expansion > 0)) throw ConfigError("encoder.ffn_expansion must be positive");
}

KvSection EncoderConfig::to_kv() const {
  KvSection s;
  s["layers"] = std::to_string(layers);
  s["hidden"] = std::to_string(hidden);
  s["heads"] = std::to_string(heads);
  s["intermediate"] = std::to_string(intermediate);
  s["ffn_expansion"] = format_double(ffn_expansion);
  s["rope_theta_global"] = format_double(rope_theta_global);
  s["rope_theta_local"] = format_double(rope_theta_local);
  s["global_layer_interval"] = std::to_string(global_layer_interval);
  s["global_layer_offset"] = std::to_string(global_layer_offset);
  s["local_window_radius"] = std::to_string(local_window_radius);
  s["max_context"] = std::to_string(max_context);
  s["vocab_size"] = std::to_string(vocab_size);
  s["norm_eps"] = format_double(norm_eps);
  s["tie_embeddings"] = tie_embeddings ? "true" : "false";
  s["init_std"] = format_double(init_std);
  return s;
}

EncoderConfig EncoderConfig::from_kv(const KvSection& section) {
  EncoderConfig c;
  KvReader r(section, "encoder");
  auto count = [&](const char* key, size_t dflt) {
    const int64_t v = r.get_int(key, static_cast<int64_t>(dflt));
    if (v < 0) throw ConfigError(std::string("encoder.") + key + " must be >= 0");
    return static_cast<size_t>(v);
  };
  c.layers = count("layers", c.layers);
  c.hidden = count("hidden", c.hidden);
  c.heads = count("heads", c.heads);
  c.intermediate = count("intermediate", c.intermediate);
  c.ffn_expansion = r.get_double("ffn_expansion", c.ffn_expansion);
  c.rope_theta_global = r.get_double("rope_theta_global", c.rope_theta_global);
  c.rope_theta_local = r.get_double("rope_theta_local", c.rope_theta_local);
  c.global_layer_interval = count("global_layer_interval", c.global_layer_interval);
  c.global_layer_offset = count("global_layer_offset", c.global_layer_offset);
  c.local_window_radius = count("local_window_radius", c.local_window_radius);
  c.max_context = count("max_context", c.max_context);
  c.vocab_size = count("vocab_size", c.vocab_size);
  c.norm_eps = r.get_double("norm_eps", c.norm_eps);
  c.tie_embeddings = r.get_bool("tie_embeddings", c.tie_embeddings);
  c.init_std = r.get_double("init_std", c.init_std);
  r.finish();
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Tensors and checkpoints

size_t Tensor::numel() const {
  size_t n = 1;
  for (size_t d : shape) n *= d;
  return n;
}

std::string Tensor::shape_string() const {
  std::string s;
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s;
}

std::vector<TensorSpec> parameter_specs(const EncoderConfig& c) {
  const size_t h = c.hidden;
  const size_t f = c.ffn_width();
  std::vector<TensorSpec> specs;
  specs.push_back({"embed.weight", {c.vocab_size, h}, false});
  for (size_t l = 0; l < c.layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    specs.push_back({p + "attn_norm.weight", {h}, true});
    specs.push_back({p + "attn.wqkv", {3 * h, h}, false});
    specs.push_back({p + "attn.wo", {h, h}, false});
    specs.push_back({p + "mlp_norm.weight", {h}, true});
    specs.push_back({p + "mlp.wi", {2 * f, h}, false});
    specs.push_back({p + "mlp.wo", {h, f}, false});
  }
  specs.push_back({"final_norm.weight", {h}, true});
  if (!c.tie_embeddings) specs.push_back({"decoder.weight", {c.vocab_size, h}, false});
  return specs;
}

uint64_t count_parameters(const EncoderConfig& config) {
  uint64_t total = 0;
  for (const auto& s : parameter_specs(config)) {
    uint64_t n = 1;
    for (size_t d : s.shape) n *= d;
    total += n;
  }
  return total;
}

const Tensor& Checkpoint::weight(const std::string& name) const {
  for (const auto& t : weights) {
    if (t.name == name) return t;
  }
  throw InputError("checkpoint has no tensor " + name);
}

Tensor& Checkpoint::weight(const std::string& name) {
  return const_cast<Tensor&>(static_cast<const Checkpoint&>(*this).weight(name));
}

Checkpoint init_checkpoint(const EncoderConfig& config, uint64_t seed) {
  config.validate();
  Checkpoint ckpt;
  ckpt.config = config;
  Rng rng(derive_seed(seed, "encoder.init"));
  for (const auto& spec : parameter_specs(config)) {
    Tensor t{spec.name, spec.shape, {}};
    t.data.resize(t.numel());
    if (spec.is_norm) {
      std::fill(t.data.begin(), t.data.end(), 1.0);
    } else {
      for (auto& x : t.data) x = config.init_std * rng.normal();
    }
    ckpt.weights.push_back(std::move(t));
  }
  return ckpt;
}

namespace {

void append_le(std::string& blob, const std::vector<double>& data) {
  const size_t start = blob.size();
  blob.resize(start + data.size() * 8);
  for (size_t i = 0; i < data.size(); ++i) {
    const auto bits = std::bit_cast<uint64_t>(data[i]);
    for (int b = 0; b < 8; ++b) {
      blob[start + i * 8 + static_cast<size_t>(b)] = static_cast<char>((bits >> (8 * b)) & 0xFF);
    }
  }
}

std::vector<double> read_le(std::string_view blob, size_t offset, size_t count) {
  std::vector<double> out(count);
  for (size_t i = 0; i < count; ++i) {
    uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
      bits |= static_cast<uint64_t>(static_cast<unsigned char>(blob[offset + i * 8 + static_cast<size_t>(b)]))
              << (8 * b);
    }
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

std::vector<size_t> parse_shape(const std::string& s) {
  std::vector<size_t> shape;
  size_t pos = 0;
  while (pos <= s.size()) {
    size_t end = s.find('x', pos);
    if (end == std::string::npos) end = s.size();
    shape.push_back(static_cast<size_t>(parse_int(s.substr(pos, end - pos))));
    pos = end + 1;
  }
  return shape;
}

}  // namespace

void Checkpoint::save(const std::string& dir) const {
  std::filesystem::create_directories(dir);
  KvConfig cfg;
  for (const auto& [k, v] : config.to_kv()) cfg.set("encoder", k, v);
  std::vector<const Tensor*> all;
  for (const auto& t : weights) all.push_back(&t);
  if (training) {
    cfg.set("training", "step", std::to_string(training->step));
    cfg.set("training", "stage", training->stage);
    cfg.set("training", "stage_step", std::to_string(training->stage_step));
    for (const auto& t : training->first_moment) all.push_back(&t);
    for (const auto& t : training->second_moment) all.push_back(&t);
  }
  write_file(dir + "/config.txt", cfg.serialize());

  std::string blob;
  std::string manifest;
  for (const Tensor* t : all) {
    const size_t offset = blob.size();
    append_le(blob, t->data);
    manifest += t->name + " f64 " + t->shape_string() + " " + std::to_string(offset) + " " +
                std::to_string(t->data.size() * 8) + "\n";
  }
  write_file(dir + "/manifest.txt", manifest);
  write_file(dir + "/tensors.bin", blob);
}

Checkpoint Checkpoint::load(const std::string& dir) {
  Checkpoint ckpt;
  KvConfig cfg = KvConfig::load(dir + "/config.txt");
  for (const auto& name : cfg.section_names()) {
    if (name != "encoder" && name != "training") {
      throw ConfigError("unknown section [" + name + "] in " + dir + "/config.txt");
    }
  }
  ckpt.config = EncoderConfig::from_kv(cfg.section("encoder"));
  const bool has_training = cfg.has_section("training");
  uint64_t step = 0;
  uint64_t stage_step = 0;
  std::string stage;
  if (has_training) {
    KvReader r(cfg.section("training"), "training");
    step = static_cast<uint64_t>(r.get_int("step", 0));
    stage = r.get_string("stage", "");
    stage_step = static_cast<uint64_t>(r.get_int("stage_step", 0));
    r.finish();
  }

  const std::string blob = read_file(dir + "/tensors.bin");
  const std::string manifest = read_file(dir + "/manifest.txt");
  std::map<std::string, Tensor> by_name;
  size_t pos = 0;
  while (pos < manifest.size()) {
    size_t end = manifest.find('\n', pos);
    if (end == std::string::npos) end = manifest.size();
    const std::string line = manifest.substr(pos, end - pos);
    pos = end + 1;
    if (line.empty()) continue;
    std::vector<std::string> f;
    size_t p = 0;
    while (p <= line.size()) {
      size_t e = line.find(' ', p);
      if (e == std::string::npos) e = line.size();
      f.push_back(line.substr(p, e - p));
      p = e + 1;
    }
    if (f.size() != 5 || f[1] != "f64") throw InputError("malformed manifest line: " + line);
    Tensor t;
    t.name = f[0];
    t.shape = parse_shape(f[2]);
    const auto offset = static_cast<size_t>(parse_int(f[3]));
    const auto nbytes = static_cast<size_t>(parse_int(f[4]));
    if (nbytes != t.numel() * 8 || offset + nbytes > blob.size()) {
      throw InputError("manifest entry out of bounds: " + t.name);
    }
    t.data = read_le(blob, offset, t.numel());
    by_name.emplace(t.name, std::move(t));
  }

  auto take = [&](const std::string& name, const std::vector<size_t>& shape) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw InputError("checkpoint missing tensor " + name);
    if (it->second.shape != shape) throw InputError("shape mismatch for " + name);
    Tensor t = std::move(it->second);
    by_name.erase(it);
    return t;
  };
  const auto specs = parameter_specs(ckpt.config);
  for (const auto& s : specs) ckpt.weights.push_back(take(s.name, s.shape));
  if (has_training) {
    TrainingState st;
    st.step = step;
    st.stage = stage;
    st.stage_step = stage_step;
    for (const auto& s : specs) st.first_moment.push_back(take("optim.m." + s.name, s.shape));
    for (const auto& s : specs) st.second_moment.push_back(take("optim.v." + s.name, s.shape));
    ckpt.training = std::move(st);
  }
  if (!by_name.empty()) throw InputError("unexpected tensor " + by_name.begin()->first);
  return ckpt;
}

// ---------------------------------------------------------------------------
// Batches and attention pattern

PackedBatch PackedBatch::pack(const std::vector<std::vector<int32_t>>& sequences) {
  PackedBatch b;
  b.cu_seqlens.push_back(0);
  for (const auto& s : sequences) {
    if (s.empty()) throw InputError("cannot pack an empty sequence");
    b.token_ids.insert(b.token_ids.end(), s.begin(), s.end());
    b.cu_seqlens.push_back(b.token_ids.size());
    b.max_len = std::max(b.max_len, s.size());
  }
  return b;
}

void PackedBatch::validate() const {
  if (cu_seqlens.empty() || cu_seqlens.front() != 0 || cu_seqlens.back() != token_ids.size()) {
    throw InputError("cu_seqlens must start at 0 and end at the token count");
  }
  size_t longest = 0;
  for (size_t i = 1; i < cu_seqlens.size(); ++i) {
    if (cu_seqlens[i] <= cu_seqlens[i - 1]) throw InputError("cu_seqlens must be strictly increasing");
    longest = std::max(longest, cu_seqlens[i] - cu_seqlens[i - 1]);
  }
  if (longest != max_len) throw InputError("max_len does not match the longest sequence");
}

AttentionPattern::AttentionPattern(size_t layer, const EncoderConfig& config,
                                   const PackedBatch& batch)
    : global_(config.is_global_layer(layer)),
      radius_(config.local_window_radius),
      seq_of_(batch.num_tokens()),
      cu_seqlens_(&batch.cu_seqlens) {
  for (size_t s = 0; s + 1 < batch.cu_seqlens.size(); ++s) {
    for (size_t t = batch.cu_seqlens[s]; t < batch.cu_seqlens[s + 1]; ++t) seq_of_[t] = s;
  }
}

bool AttentionPattern::allowed(size_t i, size_t j) const {
  if (seq_of_[i] != seq_of_[j]) return false;
  if (global_) return true;
  return (i > j ? i - j : j - i) <= radius_;
}

std::pair<size_t, size_t> AttentionPattern::window(size_t i) const {
  const size_t s = seq_of_[i];
  size_t first = (*cu_seqlens_)[s];
  size_t last = (*cu_seqlens_)[s + 1] - 1;
  if (!global_) {
    first = std::max(first, i >= radius_ ? i - radius_ : 0);
    last = std::min(last, i + radius_);
  }
  return {first, last};
}

AttentionPattern attention_mask(size_t layer, const EncoderConfig& config,
                                const PackedBatch& batch) {
  return AttentionPattern(layer, config, batch);
}

// ---------------------------------------------------------------------------
// RoPE

namespace {

void rotate_one(double* v, size_t position, size_t head_dim, double theta, bool inverse) {
  const double m = static_cast<double>(position);
  for (size_t i = 0; i < head_dim / 2; ++i) {
    const double omega =
        std::pow(theta, -2.0 * static_cast<double>(i) / static_cast<double>(head_dim));
    const double angle = inverse ? -m * omega : m * omega;
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    const double x0 = v[2 * i];
    const double x1 = v[2 * i + 1];
    v[2 * i] = x0 * c - x1 * s;
    v[2 * i + 1] = x0 * s + x1 * c;
  }
}

// Rotates every head of every row of a tokens x hidden matrix.
void rope_rows(Matrix& x, const std::vector<size_t>& positions, size_t heads, double theta,
               bool inverse) {
  const size_t d = x.cols / heads;
  for (size_t t = 0; t < x.rows; ++t) {
    for (size_t h = 0; h < heads; ++h) rotate_one(x.row(t) + h * d, positions[t], d, theta, inverse);
  }
}

}  // namespace

void rope_rotate(std::span<double> vectors, std::span<const size_t> positions, size_t head_dim,
                 double theta, bool inverse) {
  if (head_dim % 2 != 0) throw ConfigError("RoPE needs an even head_dim");
  if (vectors.size() != positions.size() * head_dim) {
    throw ContractError("rope_rotate: vectors must hold positions.size() * head_dim values");
  }
  for (size_t r = 0; r < positions.size(); ++r) {
    rotate_one(vectors.data() + r * head_dim, positions[r], head_dim, theta, inverse);
  }
}

// ---------------------------------------------------------------------------
// Forward / backward

struct LayerCache {
  Matrix x_in;
  Matrix a;
  std::vector<double> inv1;
  Matrix q, k, v;
  std::vector<double> probs;
  Matrix ctx;
  Matrix x_mid;
  Matrix b;
  std::vector<double> inv2;
  Matrix u;
  Matrix act;
};

struct ForwardCache {
  std::vector<LayerCache> layers;
  Matrix x_final;
  std::vector<double> inv_final;
  std::vector<size_t> positions;
};

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad(double x) {
  return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

struct Layout {
  size_t layers;
  bool tied;
  size_t embed() const { return 0; }
  size_t attn_norm(size_t l) const { return 1 + 6 * l; }
  size_t wqkv(size_t l) const { return 2 + 6 * l; }
  size_t wo(size_t l) const { return 3 + 6 * l; }
  size_t mlp_norm(size_t l) const { return 4 + 6 * l; }
  size_t wi(size_t l) const { return 5 + 6 * l; }
  size_t wo_mlp(size_t l) const { return 6 + 6 * l; }
  size_t final_norm() const { return 1 + 6 * layers; }
  size_t decoder() const { return tied ? 0 : 2 + 6 * layers; }
};

// y = x W^T, W is out x in.
void linear(const Matrix& x, const Tensor& w, Matrix& y) {
  const size_t out = w.shape[0];
  const size_t in = w.shape[1];
  y = Matrix(x.rows, out);
  for (size_t t = 0; t < x.rows; ++t) {
    const double* xr = x.row(t);
    double* yr = y.row(t);
    for (size_t o = 0; o < out; ++o) {
      const double* wr = w.data.data() + o * in;
      double acc = 0.0;
      for (size_t k = 0; k < in; ++k) acc += xr[k] * wr[k];
      yr[o] = acc;
    }
  }
}

// dx = dy W (overwrites), dw += dy^T x.
void linear_backward(const Matrix& x, const Tensor& w, const Matrix& dy, Matrix& dx, Tensor& dw) {
  const size_t out = w.shape[0];
  const size_t in = w.shape[1];
  dx = Matrix(x.rows, in);
  for (size_t t = 0; t < x.rows; ++t) {
    const double* dyr = dy.row(t);
    const double* xr = x.row(t);
    double* dxr = dx.row(t);
    for (size_t o = 0; o < out; ++o) {
      const double g = dyr[o];
      if (g == 0.0) continue;
      const double* wr = w.data.data() + o * in;
      double* dwr = dw.data.data() + o * in;
      for (size_t k = 0; k < in; ++k) {
        dxr[k] += g * wr[k];
        dwr[k] += g * xr[k];
      }
    }
  }
}

void rmsnorm(const Matrix& x, const Tensor& g, double eps, Matrix& y, std::vector<double>& inv) {
  y = Matrix(x.rows, x.cols);
  inv.assign(x.rows, 0.0);
  for (size_t t = 0; t < x.rows; ++t) {
    const double* xr = x.row(t);
    double ms = 0.0;
    for (size_t k = 0; k < x.cols; ++k) ms += xr[k] * xr[k];
    ms /= static_cast<double>(x.cols);
    const double s = 1.0 / std::sqrt(ms + eps);
    inv[t] = s;
    double* yr = y.row(t);
    for (size_t k = 0; k < x.cols; ++k) yr[k] = xr[k] * s * g.data[k];
  }
}

// dx += d(rmsnorm)/dx applied to dy, dg += dy * normalized x.
void rmsnorm_backward(const Matrix& x, const Tensor& g, const std::vector<double>& inv,
                      const Matrix& dy, Matrix& dx, Tensor& dg) {
  const double n = static_cast<double>(x.cols);
  for (size_t t = 0; t < x.rows; ++t) {
    const double* xr = x.row(t);
    const double* dyr = dy.row(t);
    double* dxr = dx.row(t);
    const double s = inv[t];
    double dot = 0.0;
    for (size_t k = 0; k < x.cols; ++k) {
      const double dn = dyr[k] * g.data[k];
      dg.data[k] += dyr[k] * xr[k] * s;
      dot += dn * xr[k];
    }
    const double coef = s * s * s * dot / n;
    for (size_t k = 0; k < x.cols; ++k) dxr[k] += dyr[k] * g.data[k] * s - xr[k] * coef;
  }
}

void check_batch(const EncoderConfig& c, const PackedBatch& batch) {
  batch.validate();
  if (batch.max_len > c.max_context) {
    throw InputError("sequence length " + std::to_string(batch.max_len) + " exceeds max_context " +
                     std::to_string(c.max_context));
  }
  for (int32_t id : batch.token_ids) {
    if (id < 0 || static_cast<size_t>(id) >= c.vocab_size) {
      throw InputError("token id " + std::to_string(id) + " outside vocab of size " +
                       std::to_string(c.vocab_size));
    }
  }
}

}  // namespace

ForwardResult forward(const Checkpoint& ckpt, const PackedBatch& batch,
                      const ForwardOptions& options) {
  const EncoderConfig& c = ckpt.config;
  check_batch(c, batch);
  if (ckpt.weights.size() != parameter_specs(c).size()) {
    throw InputError("checkpoint tensors do not match its config");
  }
  const Layout lay{c.layers, c.tie_embeddings};
  const auto& W = ckpt.weights;
  const size_t T = batch.num_tokens();
  const size_t H = c.hidden;
  const size_t nh = c.heads;
  const size_t d = c.head_dim();
  const size_t F = c.ffn_width();
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));

  ForwardResult res;
  res.stats.scores_per_layer.assign(c.layers, 0);
  auto cache = std::make_shared<ForwardCache>();
  cache->positions.resize(T);
  for (size_t s = 0; s < batch.num_sequences(); ++s) {
    for (size_t t = batch.cu_seqlens[s]; t < batch.cu_seqlens[s + 1]; ++t) {
      cache->positions[t] = t - batch.cu_seqlens[s];
    }
  }

  Matrix x(T, H);
  const Tensor& embed = W[lay.embed()];
  for (size_t t = 0; t < T; ++t) {
    const double* er = embed.data.data() + static_cast<size_t>(batch.token_ids[t]) * H;
    std::copy(er, er + H, x.row(t));
  }

  for (size_t l = 0; l < c.layers; ++l) {
    LayerCache lc;
    const AttentionPattern pattern(l, c, batch);
    const double theta = c.rope_theta(l);

    rmsnorm(x, W[lay.attn_norm(l)], c.norm_eps, lc.a, lc.inv1);
    Matrix qkv;
    linear(lc.a, W[lay.wqkv(l)], qkv);
    lc.q = Matrix(T, H);
    lc.k = Matrix(T, H);
    lc.v = Matrix(T, H);
    for (size_t t = 0; t < T; ++t) {
      const double* r = qkv.row(t);
      std::copy(r, r + H, lc.q.row(t));
      std::copy(r + H, r + 2 * H, lc.k.row(t));
      std::copy(r + 2 * H, r + 3 * H, lc.v.row(t));
    }
    rope_rows(lc.q, cache->positions, nh, theta, false);
    rope_rows(lc.k, cache->positions, nh, theta, false);

    lc.ctx = Matrix(T, H);
    std::vector<double> scores;
    uint64_t evaluated = 0;
    for (size_t h = 0; h < nh; ++h) {
      for (size_t i = 0; i < T; ++i) {
        const auto [first, last] = pattern.window(i);
        const size_t m = last - first + 1;
        scores.resize(m);
        const double* qi = lc.q.row(i) + h * d;
        double mx = -INFINITY;
        for (size_t j = first; j <= last; ++j) {
          const double* kj = lc.k.row(j) + h * d;
          double acc = 0.0;
          for (size_t e = 0; e < d; ++e) acc += qi[e] * kj[e];
          scores[j - first] = acc * scale;
          mx = std::max(mx, scores[j - first]);
        }
        evaluated += m;
        double sum = 0.0;
        for (auto& sc : scores) {
          sc = std::exp(sc - mx);
          sum += sc;
        }
        double* ci = lc.ctx.row(i) + h * d;
        for (size_t j = first; j <= last; ++j) {
          const double p = scores[j - first] / sum;
          scores[j - first] = p;
          const double* vj = lc.v.row(j) + h * d;
          for (size_t e = 0; e < d; ++e) ci[e] += p * vj[e];
        }
        if (options.keep_cache) lc.probs.insert(lc.probs.end(), scores.begin(), scores.end());
      }
    }
    res.stats.scores_per_layer[l] = evaluated;

    Matrix attn_out;
    linear(lc.ctx, W[lay.wo(l)], attn_out);
    lc.x_mid = x;
    for (size_t i = 0; i < lc.x_mid.data.size(); ++i) lc.x_mid.data[i] += attn_out.data[i];

    rmsnorm(lc.x_mid, W[lay.mlp_norm(l)], c.norm_eps, lc.b, lc.inv2);
    linear(lc.b, W[lay.wi(l)], lc.u);
    lc.act = Matrix(T, F);
    for (size_t t = 0; t < T; ++t) {
      const double* ur = lc.u.row(t);
      double* ar = lc.act.row(t);
      for (size_t f = 0; f < F; ++f) ar[f] = gelu(ur[f]) * ur[F + f];
    }
    Matrix mlp_out;
    linear(lc.act, W[lay.wo_mlp(l)], mlp_out);
    Matrix next = lc.x_mid;
    for (size_t i = 0; i < next.data.size(); ++i) next.data[i] += mlp_out.data[i];

    if (options.keep_cache) {
      lc.x_in = std::move(x);
      cache->layers.push_back(std::move(lc));
    }
    x = std::move(next);
  }

  rmsnorm(x, W[lay.final_norm()], c.norm_eps, res.hidden, cache->inv_final);
  cache->x_final = std::move(x);

  if (options.compute_logits) {
    if (options.logit_rows.empty()) {
      res.logit_rows.resize(T);
      for (size_t t = 0; t < T; ++t) res.logit_rows[t] = t;
    } else {
      res.logit_rows = options.logit_rows;
    }
    const Tensor& dec = W[lay.decoder()];
    const size_t V = c.vocab_size;
    res.logits = Matrix(res.logit_rows.size(), V);
    for (size_t r = 0; r < res.logit_rows.size(); ++r) {
      const size_t t = res.logit_rows[r];
      if (t >= T) throw InputError("logit row outside the batch");
      const double* yr = res.hidden.row(t);
      double* lr = res.logits.row(r);
      for (size_t v = 0; v < V; ++v) {
        const double* er = dec.data.data() + v * H;
        double acc = 0.0;
        for (size_t k = 0; k < H; ++k) acc += yr[k] * er[k];
        lr[v] = acc;
      }
    }
  }
  if (options.keep_cache) res.cache = std::move(cache);
  return res;
}

std::vector<Tensor> backward(const Checkpoint& ckpt, const PackedBatch& batch,
                             const ForwardResult& res, const Matrix& dlogits) {
  if (!res.cache) throw ContractError("backward needs a forward pass run with keep_cache");
  const EncoderConfig& c = ckpt.config;
  const ForwardCache& cache = *res.cache;
  const Layout lay{c.layers, c.tie_embeddings};
  const auto& W = ckpt.weights;
  const size_t T = batch.num_tokens();
  const size_t H = c.hidden;
  const size_t nh = c.heads;
  const size_t d = c.head_dim();
  const size_t F = c.ffn_width();
  const size_t V = c.vocab_size;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));

  if (dlogits.rows != res.logit_rows.size() || dlogits.cols != V) {
    throw ContractError("dlogits shape does not match the forward logits");
  }

  std::vector<Tensor> grads;
  for (const auto& w : W) grads.push_back(Tensor{w.name, w.shape, std::vector<double>(w.numel(), 0.0)});

  // Output projection.
  Matrix dy(T, H);
  {
    const Tensor& dec = W[lay.decoder()];
    Tensor& ddec = grads[lay.decoder()];
    for (size_t r = 0; r < res.logit_rows.size(); ++r) {
      const size_t t = res.logit_rows[r];
      const double* g = dlogits.row(r);
      const double* yr = res.hidden.row(t);
      double* dyr = dy.row(t);
      for (size_t v = 0; v < V; ++v) {
        if (g[v] == 0.0) continue;
        const double* er = dec.data.data() + v * H;
        double* der = ddec.data.data() + v * H;
        for (size_t k = 0; k < H; ++k) {
          dyr[k] += g[v] * er[k];
          der[k] += g[v] * yr[k];
        }
      }
    }
  }

  Matrix dx(T, H);
  rmsnorm_backward(cache.x_final, W[lay.final_norm()], cache.inv_final, dy, dx,
                   grads[lay.final_norm()]);

  for (size_t li = c.layers; li-- > 0;) {
    const LayerCache& lc = cache.layers[li];
    const AttentionPattern pattern(li, c, batch);
    const double theta = c.rope_theta(li);

    // GeGLU block.
    Matrix dact;
    linear_backward(lc.act, W[lay.wo_mlp(li)], dx, dact, grads[lay.wo_mlp(li)]);
    Matrix du(T, 2 * F);
    for (size_t t = 0; t < T; ++t) {
      const double* ur = lc.u.row(t);
      const double* dar = dact.row(t);
      double* dur = du.row(t);
      for (size_t f = 0; f < F; ++f) {
        dur[f] = dar[f] * ur[F + f] * gelu_grad(ur[f]);
        dur[F + f] = dar[f] * gelu(ur[f]);
      }
    }
    Matrix db;
    linear_backward(lc.b, W[lay.wi(li)], du, db, grads[lay.wi(li)]);
    Matrix dmid = dx;
    rmsnorm_backward(lc.x_mid, W[lay.mlp_norm(li)], lc.inv2, db, dmid, grads[lay.mlp_norm(li)]);

    // Attention block.
    Matrix dctx;
    linear_backward(lc.ctx, W[lay.wo(li)], dmid, dctx, grads[lay.wo(li)]);
    Matrix dq(T, H), dk(T, H), dv(T, H);
    std::vector<double> dp;
    size_t off = 0;
    for (size_t h = 0; h < nh; ++h) {
      for (size_t i = 0; i < T; ++i) {
        const auto [first, last] = pattern.window(i);
        const size_t m = last - first + 1;
        const double* p = lc.probs.data() + off;
        off += m;
        const double* dci = dctx.row(i) + h * d;
        dp.resize(m);
        double weighted = 0.0;
        for (size_t j = first; j <= last; ++j) {
          const double* vj = lc.v.row(j) + h * d;
          double acc = 0.0;
          for (size_t e = 0; e < d; ++e) acc += dci[e] * vj[e];
          dp[j - first] = acc;
          weighted += p[j - first] * acc;
          double* dvj = dv.row(j) + h * d;
          for (size_t e = 0; e < d; ++e) dvj[e] += p[j - first] * dci[e];
        }
        const double* qi = lc.q.row(i) + h * d;
        double* dqi = dq.row(i) + h * d;
        for (size_t j = first; j <= last; ++j) {
          const double ds = p[j - first] * (dp[j - first] - weighted) * scale;
          if (ds == 0.0) continue;
          const double* kj = lc.k.row(j) + h * d;
          double* dkj = dk.row(j) + h * d;
          for (size_t e = 0; e < d; ++e) {
            dqi[e] += ds * kj[e];
            dkj[e] += ds * qi[e];
          }
        }
      }
    }
    rope_rows(dq, cache.positions, nh, theta, true);
    rope_rows(dk, cache.positions, nh, theta, true);
    Matrix dqkv(T, 3 * H);
    for (size_t t = 0; t < T; ++t) {
      double* r = dqkv.row(t);
      std::copy(dq.row(t), dq.row(t) + H, r);
      std::copy(dk.row(t), dk.row(t) + H, r + H);
      std::copy(dv.row(t), dv.row(t) + H, r + 2 * H);
    }
    Matrix da;
    linear_backward(lc.a, W[lay.wqkv(li)], dqkv, da, grads[lay.wqkv(li)]);
    Matrix din = dmid;
    rmsnorm_backward(lc.x_in, W[lay.attn_norm(li)], lc.inv1, da, din, grads[lay.attn_norm(li)]);
    dx = std::move(din);
  }

  Tensor& dembed = grads[lay.embed()];
  for (size_t t = 0; t < T; ++t) {
    double* er = dembed.data.data() + static_cast<size_t>(batch.token_ids[t]) * H;
    const double* g = dx.row(t);
    for (size_t k = 0; k < H; ++k) er[k] += g[k];
  }
  return grads;
}

MlmLoss mlm_loss(const Matrix& logits, std::span<const int32_t> labels) {
  if (labels.size() != logits.rows) throw ContractError("mlm_loss: one label per logit row");
  MlmLoss out;
  out.dlogits = Matrix(logits.rows, logits.cols);
  for (int32_t y : labels) {
    if (y >= 0) ++out.positions;
  }
  if (out.positions == 0) {
    out.empty = true;
    return out;
  }
  const double inv_n = 1.0 / static_cast<double>(out.positions);
  double total = 0.0;
  for (size_t r = 0; r < logits.rows; ++r) {
    const int32_t y = labels[r];
    if (y < 0) continue;
    if (static_cast<size_t>(y) >= logits.cols) throw InputError("label outside vocab");
    const double* lr = logits.row(r);
    double mx = -INFINITY;
    for (size_t v = 0; v < logits.cols; ++v) mx = std::max(mx, lr[v]);
    double sum = 0.0;
    for (size_t v = 0; v < logits.cols; ++v) sum += std::exp(lr[v] - mx);
    const double lse = mx + std::log(sum);
    total += lse - lr[static_cast<size_t>(y)];
    double* g = out.dlogits.row(r);
    for (size_t v = 0; v < logits.cols; ++v) g[v] = std::exp(lr[v] - lse) * inv_n;
    g[static_cast<size_t>(y)] -= inv_n;
  }
  out.loss = total * inv_n;
  return out;
}

}  // namespace cmbert
