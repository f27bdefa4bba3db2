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

// cmbert command-line interface. Everything goes through the C API.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cmbert/cmbert.h"

namespace {

namespace fs = std::filesystem;

enum ExitCode { kOk = 0, kUsage = 2, kConfig = 3, kInput = 4, kRuntime = 5 };

struct ApiFailure {
  cmb_status status;
  std::string message;
};

void check(cmb_status s) {
  if (s != CMB_OK) throw ApiFailure{s, cmb_last_error()};
}

struct Text {
  cmb_text* p = nullptr;
  Text() = default;
  Text(const Text&) = delete;
  Text& operator=(const Text&) = delete;
  ~Text() { cmb_text_free(p); }
  cmb_text** out() { return &p; }
  std::string str() const { return std::string(cmb_text_data(p), cmb_text_size(p)); }
};

struct TokenizerFree {
  void operator()(cmb_tokenizer* t) const { cmb_tokenizer_free(t); }
};
struct CheckpointFree {
  void operator()(cmb_checkpoint* c) const { cmb_checkpoint_free(c); }
};
using TokenizerPtr = std::unique_ptr<cmb_tokenizer, TokenizerFree>;
using CheckpointPtr = std::unique_ptr<cmb_checkpoint, CheckpointFree>;

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ApiFailure{CMB_ERR_INPUT, "cannot read " + path};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spill(const std::string& path, const std::string& contents) {
  if (path.empty() || path == "-") {
    std::fwrite(contents.data(), 1, contents.size(), stdout);
    return;
  }
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw ApiFailure{CMB_ERR_RUNTIME, "cannot write " + path};
}

// Config text for one invocation: the --config file, then --set overrides,
// then the command's own flags. Later keys win.
class ConfigBuilder {
 public:
  std::string file;
  std::vector<std::string> sets;
  std::optional<uint64_t> seed;

  void put(const std::string& section, const std::string& key, const std::string& value) {
    extra_ += "[" + section + "]\n" + key + " = " + value + "\n";
  }
  template <typename T>
  void put_opt(const std::string& section, const std::string& key, const std::optional<T>& v) {
    if (!v) return;
    std::ostringstream ss;
    ss.precision(17);
    ss << *v;
    put(section, key, ss.str());
  }

  std::string text() const {
    std::string t = file.empty() ? std::string() : slurp(file) + "\n";
    for (const auto& s : sets) {
      const size_t dot = s.find('.');
      const size_t eq = s.find('=');
      if (dot == std::string::npos || eq == std::string::npos || dot > eq) {
        throw ApiFailure{CMB_ERR_CONFIG, "--set expects section.key=value, got '" + s + "'"};
      }
      t += "[" + s.substr(0, dot) + "]\n" + s.substr(dot + 1, eq - dot - 1) + " = " +
           s.substr(eq + 1) + "\n";
    }
    if (seed) t += "[global]\nseed = " + std::to_string(*seed) + "\n";
    return t + extra_;
  }

  // Path flag, falling back to [paths] in the config; recorded either way so
  // the logged config can replay the run.
  std::string path(const std::string& key, const std::string& flag, bool required) {
    std::string v = flag;
    if (v.empty()) {
      Text t;
      check(cmb_config_get(text().c_str(), "paths", key.c_str(), t.out()));
      v = t.str();
    }
    if (v.empty() && required) {
      throw ApiFailure{CMB_ERR_CONFIG, "missing --" + key + " (or [paths] " + key + ")"};
    }
    if (!v.empty()) put("paths", key, v);
    return v;
  }

 private:
  std::string extra_;
};

std::string resolved(const ConfigBuilder& cfg) {
  Text t;
  check(cmb_config_resolve(cfg.text().c_str(), t.out()));
  return "# cmbert " + std::string(cmb_version()) + ", config schema " +
         cmb_config_schema_version() + "\n" + t.str();
}

// Resolved config goes into an output directory, or next to an output file.
void log_config_dir(const ConfigBuilder& cfg, const std::string& dir) {
  spill(dir + "/resolved_config.txt", resolved(cfg));
}
void log_config_file(const ConfigBuilder& cfg, const std::string& file) {
  if (file.empty() || file == "-") return;
  spill(file + ".config.txt", resolved(cfg));
}

TokenizerPtr load_tokenizer(const std::string& dir) {
  cmb_tokenizer* t = nullptr;
  check(cmb_tokenizer_load(dir.c_str(), &t));
  return TokenizerPtr(t);
}

CheckpointPtr load_checkpoint(const std::string& dir) {
  cmb_checkpoint* c = nullptr;
  check(cmb_checkpoint_load(dir.c_str(), &c));
  return CheckpointPtr(c);
}

void add_common(CLI::App* cmd, ConfigBuilder& cfg) {
  cmd->add_option("--config", cfg.file, "Sectioned key-value config file");
  cmd->add_option("--set", cfg.sets, "Override: section.key=value (repeatable)");
  cmd->add_option("--seed", cfg.seed, "Root seed ([global] seed)");
}

std::string csv_ids(const std::vector<int32_t>& ids) {
  std::string s;
  for (size_t i = 0; i < ids.size(); ++i) s += (i ? " " : "") + std::to_string(ids[i]);
  return s;
}

std::vector<int32_t> encode(const cmb_tokenizer* tok, const std::string& text, bool specials) {
  size_t n = 0;
  check(cmb_tokenizer_encode(tok, text.c_str(), specials, nullptr, 0, &n));
  std::vector<int32_t> ids(n);
  check(cmb_tokenizer_encode(tok, text.c_str(), specials, ids.data(), ids.size(), &n));
  return ids;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(line);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cmbert: Chinese encoder pre-training toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("config schema ") + cmb_config_schema_version());

  ConfigBuilder cfg;
  std::function<void()> action;

  // ---- tok ----
  auto* tok = app.add_subcommand("tok", "Tokenizer training, encoding and statistics");
  tok->require_subcommand(1);
  struct {
    std::string corpus, dict, out, model, text, in, bucket = "512", policy;
    std::optional<size_t> target;
    bool specials = false;
  } t;
  auto* tok_train = tok->add_subcommand("train", "Train a BPE tokenizer");
  add_common(tok_train, cfg);
  tok_train->add_option("--corpus", t.corpus, "Directory, .rec file or one-doc-per-line file");
  tok_train->add_option("--dict", t.dict, "CJK word list for pre-tokenization");
  tok_train->add_option("--out", t.out, "Output directory");
  tok_train->add_option("--target", t.target, "Target vocabulary size");
  tok_train->add_option("--policy", t.policy, "exact | round_to_64");
  tok_train->callback([&] {
    action = [&] {
      if (t.target) cfg.put("tokenizer", "target_size", std::to_string(*t.target));
      if (!t.policy.empty()) cfg.put("tokenizer", "size_policy", t.policy);
      const std::string corpus = cfg.path("corpus", t.corpus, true);
      const std::string dict = cfg.path("dict", t.dict, false);
      const std::string out = cfg.path("out", t.out, true);
      const std::string text = cfg.text();
      cmb_tokenizer* raw = nullptr;
      check(cmb_tokenizer_train(corpus.c_str(), dict.c_str(), text.c_str(), &raw));
      TokenizerPtr model(raw);
      check(cmb_tokenizer_save(model.get(), out.c_str()));
      log_config_dir(cfg, out);
      std::printf("vocab_size=%zu\n", cmb_tokenizer_vocab_size(model.get()));
    };
  });

  auto* tok_encode = tok->add_subcommand("encode", "Encode text to token ids");
  add_common(tok_encode, cfg);
  tok_encode->add_option("--model", t.model, "Tokenizer directory")->required();
  tok_encode->add_option("--text", t.text, "Text to encode");
  tok_encode->add_option("--in", t.in, "File; each line is encoded separately");
  tok_encode->add_option("--out", t.out, "Output file (default stdout)");
  tok_encode->add_flag("--specials", t.specials, "Wrap with [CLS] ... [SEP]");
  tok_encode->callback([&] {
    action = [&] {
      auto model = load_tokenizer(t.model);
      std::vector<std::string> inputs;
      if (!t.in.empty()) {
        inputs = lines_of(slurp(t.in));
      } else {
        inputs.push_back(t.text);
      }
      std::string out;
      for (const auto& line : inputs) out += csv_ids(encode(model.get(), line, t.specials)) + "\n";
      spill(t.out, out);
    };
  });

  auto* tok_stats = tok->add_subcommand("stats", "Chars/token and embedding budget");
  add_common(tok_stats, cfg);
  tok_stats->add_option("--model", t.model, "Tokenizer directory")->required();
  tok_stats->add_option("--in", t.in, "Documents (directory, .rec, or lines)")->required();
  tok_stats->add_option("--bucket", t.bucket, "512 or 8192 character bucket");
  tok_stats->callback([&] {
    action = [&] {
      auto model = load_tokenizer(t.model);
      double cpt = 0;
      uint64_t chars = 0, tokens = 0, total = 0, embed = 0;
      double share = 0;
      check(cmb_tokenizer_stats(model.get(), t.in.c_str(), t.bucket.c_str(), &cpt, &chars, &tokens));
      const std::string text = cfg.text();
      check(cmb_budget(cmb_tokenizer_vocab_size(model.get()), text.c_str(), &total, &embed, &share));
      std::printf("vocab_size,bucket,chars,tokens,chars_per_token,total_params,embedding_params,embedding_share\n");
      std::printf("%zu,%s,%llu,%llu,%.17g,%llu,%llu,%.17g\n", cmb_tokenizer_vocab_size(model.get()),
                  t.bucket.c_str(), static_cast<unsigned long long>(chars),
                  static_cast<unsigned long long>(tokens), cpt,
                  static_cast<unsigned long long>(total), static_cast<unsigned long long>(embed),
                  share);
    };
  });

  // ---- mask ----
  auto* mask = app.add_subcommand("mask", "Whole-word masking previews and curriculum");
  mask->require_subcommand(1);
  struct {
    std::string model, text, out, decay;
    double rate = 0.15;
    bool token_level = false;
    std::optional<uint64_t> steps;
    std::optional<double> warmup, r_start, r_peak, r_end;
  } m;
  auto* mask_preview = mask->add_subcommand("preview", "Show one realized masking plan");
  add_common(mask_preview, cfg);
  mask_preview->add_option("--model", m.model, "Tokenizer directory")->required();
  mask_preview->add_option("--text", m.text, "Text")->required();
  mask_preview->add_option("--rate", m.rate, "Target masking rate");
  mask_preview->add_flag("--token-level", m.token_level, "Mask tokens instead of whole words");
  mask_preview->callback([&] {
    action = [&] {
      auto model = load_tokenizer(m.model);
      Text seed_text;
      check(cmb_config_get(cfg.text().c_str(), "global", "seed", seed_text.out()));
      const uint64_t seed = std::stoull(seed_text.str());
      Text out;
      check(cmb_mask_preview(model.get(), m.text.c_str(), m.rate, seed, !m.token_level, out.out()));
      std::fputs(out.str().c_str(), stdout);
    };
  });

  auto* mask_curve = mask->add_subcommand("curve", "Masking rate per step (CSV step,rate)");
  add_common(mask_curve, cfg);
  mask_curve->add_option("--steps", m.steps, "Total steps");
  mask_curve->add_option("--warmup-fraction", m.warmup, "Warmup share of steps");
  mask_curve->add_option("--r-start", m.r_start, "Rate at step 0");
  mask_curve->add_option("--r-peak", m.r_peak, "Rate at warmup end");
  mask_curve->add_option("--r-end", m.r_end, "Rate at the last step");
  mask_curve->add_option("--decay", m.decay, "linear | cosine");
  mask_curve->add_option("--out", m.out, "Output file (default stdout)");
  mask_curve->callback([&] {
    action = [&] {
      cfg.put_opt("mask", "total_steps", m.steps);
      cfg.put_opt("mask", "warmup_fraction", m.warmup);
      cfg.put_opt("mask", "r_start", m.r_start);
      cfg.put_opt("mask", "r_peak", m.r_peak);
      cfg.put_opt("mask", "r_end", m.r_end);
      if (!m.decay.empty()) cfg.put("mask", "decay_shape", m.decay);
      Text out;
      check(cmb_mask_curve(cfg.text().c_str(), out.out()));
      spill(m.out, out.str());
      log_config_file(cfg, m.out);
    };
  });

  // ---- sched ----
  auto* sched = app.add_subcommand("sched", "Learning-rate schedules");
  sched->require_subcommand(1);
  struct {
    std::string kind, plan, out;
    std::optional<uint64_t> steps, n;
    std::optional<double> emax, emin, gamma;
  } s;
  auto* sched_dump = sched->add_subcommand("dump", "CSV step,eta for steps 0..S");
  add_common(sched_dump, cfg);
  sched_dump->add_option("--kind", s.kind, "warmup_ramp | damped_cosine | stage2_linear | trapezoid");
  sched_dump->add_option("--steps", s.steps, "Total steps S");
  sched_dump->add_option("--emax", s.emax, "eta_max");
  sched_dump->add_option("--emin", s.emin, "eta_min");
  sched_dump->add_option("--N", s.n, "Cosine cycles N");
  sched_dump->add_option("--gamma", s.gamma, "Peak damping factor");
  sched_dump->add_option("--plan", s.plan, "Stage plan file: dump the stage's LR instead");
  sched_dump->add_option("--out", s.out, "Output file (default stdout)");
  sched_dump->callback([&] {
    action = [&] {
      if (!s.plan.empty()) {
        cfg.file = s.plan;
        cfg.put_opt("plan", "steps", s.steps);
      } else {
        if (!s.kind.empty()) cfg.put("schedule", "kind", s.kind);
        cfg.put_opt("schedule", "total_steps", s.steps);
      }
      cfg.put_opt("schedule", "eta_max", s.emax);
      cfg.put_opt("schedule", "eta_min", s.emin);
      cfg.put_opt("schedule", "cycles", s.n);
      cfg.put_opt("schedule", "gamma", s.gamma);
      Text out;
      check(cmb_sched_dump(cfg.text().c_str(), out.out()));
      spill(s.out, out.str());
      log_config_file(cfg, s.out);
    };
  });

  // ---- enc ----
  auto* enc = app.add_subcommand("enc", "Encoder initialization and forward passes");
  enc->require_subcommand(1);
  struct {
    std::string out, ckpt, model, text;
    std::optional<size_t> layers, hidden, heads, vocab, radius, max_context;
    bool all_positions = false;
  } e;
  auto* enc_init = enc->add_subcommand("init", "Write a freshly initialized checkpoint");
  add_common(enc_init, cfg);
  enc_init->add_option("--out", e.out, "Checkpoint directory");
  enc_init->add_option("--layers", e.layers, "Layers");
  enc_init->add_option("--hidden", e.hidden, "Hidden size");
  enc_init->add_option("--heads", e.heads, "Attention heads");
  enc_init->add_option("--vocab", e.vocab, "Vocabulary size");
  enc_init->add_option("--radius", e.radius, "Local attention radius");
  enc_init->add_option("--max-context", e.max_context, "Maximum sequence length");
  enc_init->callback([&] {
    action = [&] {
      cfg.put_opt("encoder", "layers", e.layers);
      cfg.put_opt("encoder", "hidden", e.hidden);
      cfg.put_opt("encoder", "heads", e.heads);
      cfg.put_opt("encoder", "vocab_size", e.vocab);
      cfg.put_opt("encoder", "local_window_radius", e.radius);
      cfg.put_opt("encoder", "max_context", e.max_context);
      const std::string out = cfg.path("out", e.out, true);
      const std::string text = cfg.text();
      Text seed_text;
      check(cmb_config_get(text.c_str(), "global", "seed", seed_text.out()));
      cmb_checkpoint* raw = nullptr;
      check(cmb_checkpoint_init(text.c_str(), std::stoull(seed_text.str()), &raw));
      CheckpointPtr ck(raw);
      check(cmb_checkpoint_save(ck.get(), out.c_str()));
      log_config_dir(cfg, out);
      uint64_t n = 0;
      check(cmb_checkpoint_num_params(ck.get(), &n));
      std::printf("parameters=%llu\n", static_cast<unsigned long long>(n));
    };
  });

  auto* enc_forward = enc->add_subcommand("forward", "Run one text through the encoder");
  add_common(enc_forward, cfg);
  enc_forward->add_option("--ckpt", e.ckpt, "Checkpoint directory")->required();
  enc_forward->add_option("--model", e.model, "Tokenizer directory")->required();
  enc_forward->add_option("--text", e.text, "Text")->required();
  enc_forward->add_option("--out", e.out, "Output file (default stdout)");
  enc_forward->callback([&] {
    action = [&] {
      auto ck = load_checkpoint(e.ckpt);
      auto model = load_tokenizer(e.model);
      const auto ids = encode(model.get(), e.text, true);
      const size_t H = cmb_checkpoint_hidden(ck.get());
      const size_t V = cmb_checkpoint_vocab_size(ck.get());
      const size_t L = cmb_checkpoint_layers(ck.get());
      const size_t cu[2] = {0, ids.size()};
      std::vector<double> hidden(ids.size() * H), logits(ids.size() * V);
      std::vector<uint64_t> scores(L);
      check(cmb_forward(ck.get(), ids.data(), cu, 1, hidden.data(), logits.data(), scores.data()));
      std::ostringstream os;
      os.precision(17);
      os << "position,id,token,argmax_id,argmax_token,argmax_logit\n";
      for (size_t p = 0; p < ids.size(); ++p) {
        size_t best = 0;
        for (size_t v = 1; v < V; ++v) {
          if (logits[p * V + v] > logits[p * V + best]) best = v;
        }
        Text tk, bt;
        check(cmb_tokenizer_token(model.get(), ids[p], tk.out()));
        check(cmb_tokenizer_token(model.get(), static_cast<int32_t>(best), bt.out()));
        os << p << "," << ids[p] << "," << tk.str() << "," << best << "," << bt.str() << ","
           << logits[p * V + best] << "\n";
      }
      os << "\nlayer,attention_scores\n";
      for (size_t l = 0; l < L; ++l) os << l << "," << scores[l] << "\n";
      spill(e.out, os.str());
    };
  });

  // ---- train ----
  auto* trn = app.add_subcommand("train", "Two-stage pre-training and pseudo-perplexity");
  trn->require_subcommand(1);
  struct {
    std::string plan, data, tokenizer, out, init, ckpt, texts, buckets;
    std::optional<size_t> positions;
  } r;
  auto* train_run = trn->add_subcommand("run", "Run one stage plan");
  add_common(train_run, cfg);
  train_run->add_option("--plan", r.plan, "Stage plan file ([plan] [schedule] [mask] [optimizer])");
  train_run->add_option("--data", r.data, "Corpus manifest");
  train_run->add_option("--tokenizer", r.tokenizer, "Tokenizer directory");
  train_run->add_option("--init", r.init, "Starting checkpoint (default: fresh from [encoder])");
  train_run->add_option("--out", r.out, "Output directory");
  train_run->callback([&] {
    action = [&] {
      if (!r.plan.empty()) {
        if (!cfg.file.empty()) {
          throw ApiFailure{CMB_ERR_CONFIG, "use either --plan or --config, not both"};
        }
        cfg.file = r.plan;
      }
      const std::string data = cfg.path("data", r.data, true);
      const std::string tokdir = cfg.path("tokenizer", r.tokenizer, true);
      const std::string init = cfg.path("init", r.init, false);
      const std::string out = cfg.path("out", r.out, true);
      auto model = load_tokenizer(tokdir);
      CheckpointPtr ck;
      if (!init.empty()) {
        ck = load_checkpoint(init);
      } else {
        cfg.put("encoder", "vocab_size", std::to_string(cmb_tokenizer_vocab_size(model.get())));
        Text seed_text;
        check(cmb_config_get(cfg.text().c_str(), "global", "seed", seed_text.out()));
        cmb_checkpoint* raw = nullptr;
        check(cmb_checkpoint_init(cfg.text().c_str(), std::stoull(seed_text.str()), &raw));
        ck.reset(raw);
      }
      const std::string text = cfg.text();
      fs::create_directories(out);
      log_config_dir(cfg, out);
      check(cmb_train_stage(ck.get(), model.get(), data.c_str(), text.c_str(), out.c_str()));
      std::printf("checkpoint=%s/checkpoint\ntrace=%s/trace.csv\n", out.c_str(), out.c_str());
    };
  });

  auto* train_pppl = trn->add_subcommand("pppl", "Pseudo-perplexity per length bucket");
  add_common(train_pppl, cfg);
  train_pppl->add_option("--ckpt", r.ckpt, "Checkpoint directory");
  train_pppl->add_option("--tokenizer", r.tokenizer, "Tokenizer directory");
  train_pppl->add_option("--texts", r.texts, "Held-out texts, one per line");
  train_pppl->add_option("--buckets", r.buckets, "Comma-separated lengths, e.g. 128,512,1024");
  train_pppl->add_option("--positions", r.positions, "Scored positions per sequence");
  train_pppl->add_option("--out", r.out, "Output CSV (default stdout)");
  train_pppl->callback([&] {
    action = [&] {
      if (!r.buckets.empty()) cfg.put("pppl", "buckets", r.buckets);
      cfg.put_opt("pppl", "positions_per_seq", r.positions);
      const std::string ckdir = cfg.path("ckpt", r.ckpt, true);
      const std::string tokdir = cfg.path("tokenizer", r.tokenizer, true);
      const std::string texts = cfg.path("texts", r.texts, true);
      auto ck = load_checkpoint(ckdir);
      auto model = load_tokenizer(tokdir);
      Text csv, warn;
      check(cmb_pppl(ck.get(), model.get(), texts.c_str(), cfg.text().c_str(), csv.out(), warn.out()));
      std::fputs(warn.str().c_str(), stderr);
      spill(r.out, csv.str());
      log_config_file(cfg, r.out);
    };
  });

  // ---- corpus ----
  auto* cor = app.add_subcommand("corpus", "Deduplication, mixtures and fixtures");
  cor->require_subcommand(1);
  struct {
    std::string in, out, manifest;
    std::optional<double> threshold;
    std::optional<size_t> docs;
    bool dry_run = false;
  } c;
  auto* cor_dedup = cor->add_subcommand("dedup", "MinHash near-duplicate removal");
  add_common(cor_dedup, cfg);
  cor_dedup->add_option("--in", c.in, "Input directory");
  cor_dedup->add_option("--out", c.out, "Output directory");
  cor_dedup->add_option("--threshold", c.threshold, "Similarity threshold in (0, 1]");
  cor_dedup->callback([&] {
    action = [&] {
      cfg.put_opt("dedup", "threshold", c.threshold);
      const std::string in = cfg.path("in", c.in, true);
      const std::string out = cfg.path("out", c.out, true);
      size_t kept = 0, dropped = 0;
      check(cmb_corpus_dedup(in.c_str(), cfg.text().c_str(), out.c_str(), &kept, &dropped));
      log_config_dir(cfg, out);
      std::printf("kept=%zu dropped=%zu\n", kept, dropped);
    };
  });

  auto* cor_mix = cor->add_subcommand("mix", "Validate a manifest and print expected shares");
  add_common(cor_mix, cfg);
  cor_mix->add_option("--manifest", c.manifest, "Manifest file")->required();
  cor_mix->add_flag("--dry-run", c.dry_run, "Print expected shares only")->required();
  cor_mix->callback([&] {
    action = [&] {
      Text out;
      check(cmb_corpus_mix(c.manifest.c_str(), out.out()));
      std::fputs(out.str().c_str(), stdout);
    };
  });

  auto* cor_synth = cor->add_subcommand("synth", "Write the synthetic desk corpus");
  add_common(cor_synth, cfg);
  cor_synth->add_option("--out", c.out, "Output directory");
  cor_synth->add_option("--docs", c.docs, "Documents per source");
  cor_synth->callback([&] {
    action = [&] {
      cfg.put_opt("synth", "docs_per_source", c.docs);
      const std::string out = cfg.path("out", c.out, true);
      check(cmb_corpus_synth(out.c_str(), cfg.text().c_str()));
      log_config_dir(cfg, out);
      std::printf("manifest=%s/manifest.txt\n", out.c_str());
    };
  });

  // ---- bench ----
  auto* bch = app.add_subcommand("bench", "Throughput and STS evaluation");
  bch->require_subcommand(1);
  struct {
    std::string ckpt, tokenizer, bucket, out, pairs, pooling;
    std::optional<size_t> runs;
    bool reference = false;
  } b;
  auto* bench_run = bch->add_subcommand("run", "Forward throughput and attention accounting");
  add_common(bench_run, cfg);
  bench_run->add_option("--ckpt", b.ckpt, "Checkpoint directory");
  bench_run->add_option("--bucket", b.bucket, "<length>x<batch>, e.g. 512x32");
  bench_run->add_flag("--reference-buckets", b.reference, "Run 512x32 and 8192x8");
  bench_run->add_option("--runs", b.runs, "Timed repetitions (>= 3)");
  bench_run->add_option("--out", b.out, "Report CSV; timings go to <out>.timing.csv");
  bench_run->callback([&] {
    action = [&] {
      cfg.put_opt("bench", "runs", b.runs);
      if (!b.bucket.empty()) cfg.put("bench", "bucket", b.bucket);
      const std::string ckdir = cfg.path("ckpt", b.ckpt, true);
      const std::string out = cfg.path("report", b.out, false);
      auto ck = load_checkpoint(ckdir);
      std::vector<std::string> buckets;
      if (b.reference) {
        buckets = {"len512_b32", "len8192_b8"};
      } else {
        buckets.push_back("");  // [bench] bucket
      }
      std::string scores, timing;
      const std::string text = cfg.text();
      for (const auto& bk : buckets) {
        Text sc, tm, notes;
        check(cmb_bench_run(ck.get(), bk.c_str(), text.c_str(), sc.out(), tm.out(), notes.out()));
        std::fputs(notes.str().c_str(), stderr);
        std::string a = sc.str(), t2 = tm.str();
        if (!scores.empty()) a = a.substr(a.find('\n') + 1);
        if (!timing.empty()) t2 = t2.substr(t2.find('\n') + 1);
        scores += a;
        timing += t2;
      }
      spill(out, scores);
      if (out.empty() || out == "-") {
        std::fputs(timing.c_str(), stderr);
      } else {
        spill(out + ".timing.csv", timing);
      }
      log_config_file(cfg, out);
    };
  });

  auto* bench_sts = bch->add_subcommand("sts", "Cosine-similarity correlation with gold scores");
  add_common(bench_sts, cfg);
  bench_sts->add_option("--ckpt", b.ckpt, "Checkpoint directory")->required();
  bench_sts->add_option("--tokenizer", b.tokenizer, "Tokenizer directory")->required();
  bench_sts->add_option("--pairs", b.pairs, "TSV: textA, textB, gold")->required();
  bench_sts->add_option("--pooling", b.pooling, "mean | cls");
  bench_sts->add_option("--out", b.out, "Per-pair predictions CSV");
  bench_sts->callback([&] {
    action = [&] {
      if (!b.pooling.empty()) cfg.put("bench", "pooling", b.pooling);
      auto ck = load_checkpoint(b.ckpt);
      auto model = load_tokenizer(b.tokenizer);
      double pr = 0, sr = 0;
      size_t n = 0;
      Text preds;
      check(cmb_bench_sts(ck.get(), model.get(), b.pairs.c_str(), cfg.text().c_str(), &pr, &sr, &n,
                          preds.out()));
      if (!b.out.empty()) {
        spill(b.out, preds.str());
        log_config_file(cfg, b.out);
      }
      std::printf("pairs,pearson,spearman\n%zu,%.17g,%.17g\n", n, pr, sr);
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << "\n" << app.help();
    return kUsage;
  }

  try {
    if (action) action();
    return kOk;
  } catch (const ApiFailure& f) {
    std::fprintf(stderr, "error: %s\n", f.message.c_str());
    switch (f.status) {
      case CMB_ERR_CONFIG: return kConfig;
      case CMB_ERR_INPUT: return kInput;
      default: return kRuntime;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRuntime;
  }
}
