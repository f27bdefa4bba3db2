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

#ifndef CMBERT_ENCODER_HPP_
#define CMBERT_ENCODER_HPP_

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cmbert/kvconfig.hpp"

namespace cmbert {

struct EncoderConfig {
  size_t layers = 28;
  size_t hidden = 1024;
  size_t heads = 16;
  // GeGLU intermediate width; 0 derives floor(ffn_expansion * hidden / 64) * 64.
  size_t intermediate = 0;
  double ffn_expansion = 2.6;
  double rope_theta_global = 80000.0;
  double rope_theta_local = 10000.0;
  // Layer l is global iff l % global_layer_interval == global_layer_offset.
  size_t global_layer_interval = 3;
  size_t global_layer_offset = 0;
  size_t local_window_radius = 64;
  size_t max_context = 8192;
  size_t vocab_size = 32979;
  double norm_eps = 1e-6;
  bool tie_embeddings = true;
  double init_std = 0.02;

  size_t head_dim() const { return hidden / heads; }
  size_t ffn_width() const;
  bool is_global_layer(size_t layer) const;
  double rope_theta(size_t layer) const {
    return is_global_layer(layer) ? rope_theta_global : rope_theta_local;
  }

  // Throws ConfigError.
  void validate() const;

  KvSection to_kv() const;
  static EncoderConfig from_kv(const KvSection& section);
};

struct Tensor {
  std::string name;
  std::vector<size_t> shape;
  std::vector<double> data;

  size_t numel() const;
  std::string shape_string() const;
};

struct TensorSpec {
  std::string name;
  std::vector<size_t> shape;
  bool is_norm = false;
};

// Every weight tensor of the model, in canonical order. Shapes depend on the
// config alone. Linear layers carry no bias.
std::vector<TensorSpec> parameter_specs(const EncoderConfig& config);
uint64_t count_parameters(const EncoderConfig& config);

struct TrainingState {
  uint64_t step = 0;        // optimizer updates applied so far
  std::string stage;        // stage that wrote the state ("I", "II" or empty)
  uint64_t stage_step = 0;  // steps completed within that stage
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
};

struct Checkpoint {
  EncoderConfig config;
  std::vector<Tensor> weights;
  std::optional<TrainingState> training;

  const Tensor& weight(const std::string& name) const;
  Tensor& weight(const std::string& name);

  // Directory with config.txt, manifest.txt and tensors.bin (float64 LE).
  void save(const std::string& dir) const;
  static Checkpoint load(const std::string& dir);
};

// Matrices: norms 1, everything else N(0, init_std), drawn from `seed`.
Checkpoint init_checkpoint(const EncoderConfig& config, uint64_t seed);

// Unpadded batch: sequences laid end to end.
struct PackedBatch {
  std::vector<int32_t> token_ids;
  std::vector<size_t> cu_seqlens;  // size = sequences + 1
  size_t max_len = 0;

  static PackedBatch pack(const std::vector<std::vector<int32_t>>& sequences);
  size_t num_sequences() const { return cu_seqlens.empty() ? 0 : cu_seqlens.size() - 1; }
  size_t num_tokens() const { return token_ids.size(); }
  void validate() const;
};

// Which keys a query may see on a given layer. Global layers: any key in the
// same sequence. Local layers: additionally |i - j| <= radius.
class AttentionPattern {
 public:
  AttentionPattern(size_t layer, const EncoderConfig& config, const PackedBatch& batch);

  bool global() const { return global_; }
  bool allowed(size_t i, size_t j) const;
  // Inclusive key range [first, last] for query i.
  std::pair<size_t, size_t> window(size_t i) const;

 private:
  bool global_;
  size_t radius_;
  std::vector<size_t> seq_of_;
  const std::vector<size_t>* cu_seqlens_;
};

AttentionPattern attention_mask(size_t layer, const EncoderConfig& config,
                                const PackedBatch& batch);

// Rotates each head vector in place: dims (2i, 2i+1) turn by
// position * theta^(-2i/head_dim). `vectors` holds positions.size() rows of
// head_dim values. `inverse` rotates by the negated angle.
void rope_rotate(std::span<double> vectors, std::span<const size_t> positions,
                 size_t head_dim, double theta, bool inverse = false);

struct Matrix {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(size_t r, size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  double* row(size_t i) { return data.data() + i * cols; }
  const double* row(size_t i) const { return data.data() + i * cols; }
  double& at(size_t i, size_t j) { return data[i * cols + j]; }
  double at(size_t i, size_t j) const { return data[i * cols + j]; }
};

struct AttentionStats {
  // Query-key score evaluations per layer, summed over heads.
  std::vector<uint64_t> scores_per_layer;
};

struct ForwardCache;

struct ForwardOptions {
  // Rows of the flat batch for which logits are produced; empty = all rows.
  std::vector<size_t> logit_rows;
  bool compute_logits = true;
  // Keep activations for `backward`.
  bool keep_cache = false;
};

struct ForwardResult {
  Matrix hidden;  // final-normed hidden states, tokens x hidden
  Matrix logits;  // logit rows x vocab
  std::vector<size_t> logit_rows;
  AttentionStats stats;
  std::shared_ptr<ForwardCache> cache;
};

// Pre-norm encoder: per layer x += Attn(RMSNorm(x)); x += GeGLU(RMSNorm(x)),
// then a final RMSNorm and a projection onto the (tied) embedding matrix.
ForwardResult forward(const Checkpoint& ckpt, const PackedBatch& batch,
                      const ForwardOptions& options = {});

// Gradients of a scalar loss w.r.t. every weight, given dLoss/dLogits for
// the logit rows of `result`. Same order as Checkpoint::weights.
std::vector<Tensor> backward(const Checkpoint& ckpt, const PackedBatch& batch,
                             const ForwardResult& result, const Matrix& dlogits);

struct MlmLoss {
  double loss = 0.0;
  size_t positions = 0;
  bool empty = false;  // no labelled positions; loss defined as 0
  Matrix dlogits;
};

// Mean cross-entropy over rows whose label is >= 0.
MlmLoss mlm_loss(const Matrix& logits, std::span<const int32_t> labels);

inline constexpr int32_t kIgnoreLabel = -100;

}  // namespace cmbert

#endif  // CMBERT_ENCODER_HPP_
