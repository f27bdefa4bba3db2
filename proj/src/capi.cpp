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

#include "cmbert/cmbert.h"

#include <cstring>
#include <filesystem>
#include <new>
#include <string>

#include "cmbert/bench.hpp"
#include "cmbert/common.hpp"
#include "cmbert/config.hpp"
#include "cmbert/corpus.hpp"
#include "cmbert/encoder.hpp"
#include "cmbert/optim.hpp"
#include "cmbert/rng.hpp"
#include "cmbert/tokenizer.hpp"
#include "cmbert/train.hpp"
#include "cmbert/utf8.hpp"
#include "cmbert/wordmask.hpp"

struct cmb_text {
  std::string value;
};

struct cmb_tokenizer {
  cmbert::tok::TokenizerModel model;
};

struct cmb_checkpoint {
  cmbert::Checkpoint ckpt;
};

namespace {

using namespace cmbert;

thread_local std::string g_last_error;

cmb_status status_of(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return CMB_ERR_CONFIG;
    case ErrorKind::kInput: return CMB_ERR_INPUT;
    case ErrorKind::kRuntime: return CMB_ERR_RUNTIME;
    case ErrorKind::kContract: return CMB_ERR_CONTRACT;
  }
  return CMB_ERR_INTERNAL;
}

template <typename F>
cmb_status guard(F&& body) {
  try {
    g_last_error.clear();
    return body();
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return CMB_ERR_RUNTIME;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return CMB_ERR_INTERNAL;
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw ContractError(what);
}

std::string str(const char* s) { return s ? std::string(s) : std::string(); }

cmb_text* make_text(std::string s) { return new cmb_text{std::move(s)}; }

void set_text(cmb_text** out, std::string s) {
  if (out) *out = make_text(std::move(s));
}

RunConfig full_precision_config(const char* config) {
  RunConfig rc = RunConfig::parse(str(config));
  if (rc.global.precision != Precision::kFull) {
    throw ConfigError("global.precision: only 'full' is implemented; 'reduced' is measure-only");
  }
  return rc;
}

// A directory, a .rec record file, or a text file with one document per
// non-empty line.
std::vector<std::string> load_documents(const std::string& path) {
  namespace fs = std::filesystem;
  std::vector<std::string> docs;
  if (fs::is_directory(path)) {
    for (auto& d : corpus::load_directory(path)) docs.push_back(std::move(d.text));
    return docs;
  }
  if (fs::path(path).extension() == ".rec") return corpus::read_records(path);
  const std::string text = read_file(path);
  size_t pos = 0;
  while (pos < text.size()) {
    size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) docs.push_back(std::move(line));
    pos = end + 1;
  }
  return docs;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::vector<std::string> out;
  const std::string text = read_file(path);
  size_t pos = 0;
  while (pos < text.size()) {
    size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(std::move(line));
    pos = end + 1;
  }
  return out;
}

std::string replacement_name(mask::Replacement r) {
  switch (r) {
    case mask::Replacement::kMaskToken: return "mask";
    case mask::Replacement::kRandomToken: return "random";
    case mask::Replacement::kKeep: return "keep";
  }
  return "?";
}

}  // namespace

extern "C" {

const char* cmb_last_error(void) { return g_last_error.c_str(); }

const char* cmb_version(void) { return "0.1.0"; }

const char* cmb_config_schema_version(void) {
  static const std::string v(kConfigSchemaVersion);
  return v.c_str();
}

const char* cmb_text_data(const cmb_text* text) { return text ? text->value.c_str() : ""; }
size_t cmb_text_size(const cmb_text* text) { return text ? text->value.size() : 0; }
void cmb_text_free(cmb_text* text) { delete text; }

cmb_status cmb_config_resolve(const char* config, cmb_text** out) {
  return guard([&] {
    require(out != nullptr, "cmb_config_resolve: out is NULL");
    *out = make_text(RunConfig::parse(str(config)).to_kv().serialize());
    return CMB_OK;
  });
}

cmb_status cmb_config_get(const char* config, const char* section, const char* key,
                          cmb_text** out) {
  return guard([&] {
    require(out != nullptr && section != nullptr && key != nullptr,
            "cmb_config_get: NULL argument");
    const KvConfig kv = RunConfig::parse(str(config)).to_kv();
    std::string value;
    if (kv.has_section(section)) {
      const auto& s = kv.section(section);
      auto it = s.find(key);
      if (it != s.end()) value = it->second;
    }
    *out = make_text(std::move(value));
    return CMB_OK;
  });
}

// ---------------------------------------------------------------------------
// Tokenizer

cmb_status cmb_tokenizer_train(const char* corpus_path, const char* dictionary_path,
                               const char* config, cmb_tokenizer** out) {
  return guard([&] {
    require(out != nullptr && corpus_path != nullptr, "cmb_tokenizer_train: NULL argument");
    const RunConfig rc = full_precision_config(config);
    tok::TrainOptions opts;
    opts.target_size = rc.tokenizer.target_size;
    opts.policy = rc.tokenizer.size_policy;
    opts.max_merges = rc.tokenizer.max_merges;
    if (dictionary_path && *dictionary_path) opts.dictionary = read_lines(dictionary_path);
    auto* t = new cmb_tokenizer{tok::train_bpe(load_documents(corpus_path), opts)};
    *out = t;
    return CMB_OK;
  });
}

cmb_status cmb_tokenizer_load(const char* dir, cmb_tokenizer** out) {
  return guard([&] {
    require(out != nullptr && dir != nullptr, "cmb_tokenizer_load: NULL argument");
    *out = new cmb_tokenizer{tok::TokenizerModel::load(dir)};
    return CMB_OK;
  });
}

cmb_status cmb_tokenizer_save(const cmb_tokenizer* t, const char* dir) {
  return guard([&] {
    require(t != nullptr && dir != nullptr, "cmb_tokenizer_save: NULL argument");
    t->model.save(dir);
    return CMB_OK;
  });
}

void cmb_tokenizer_free(cmb_tokenizer* t) { delete t; }

size_t cmb_tokenizer_vocab_size(const cmb_tokenizer* t) { return t ? t->model.vocab_size() : 0; }

cmb_status cmb_tokenizer_encode(const cmb_tokenizer* t, const char* text, int with_specials,
                                int32_t* ids, size_t cap, size_t* len) {
  return guard([&] {
    require(t != nullptr && text != nullptr && len != nullptr,
            "cmb_tokenizer_encode: NULL argument");
    const auto v = with_specials ? t->model.encode_sequence(text) : t->model.encode(text);
    *len = v.size();
    if (ids == nullptr) return CMB_OK;
    if (cap < v.size()) {
      g_last_error = "buffer holds " + std::to_string(cap) + " ids, need " +
                     std::to_string(v.size());
      return CMB_ERR_BUFFER;
    }
    std::copy(v.begin(), v.end(), ids);
    return CMB_OK;
  });
}

cmb_status cmb_tokenizer_decode(const cmb_tokenizer* t, const int32_t* ids, size_t n,
                                cmb_text** out) {
  return guard([&] {
    require(t != nullptr && out != nullptr && (ids != nullptr || n == 0),
            "cmb_tokenizer_decode: NULL argument");
    *out = make_text(t->model.decode(std::span<const int32_t>(ids, n)));
    return CMB_OK;
  });
}

cmb_status cmb_tokenizer_token(const cmb_tokenizer* t, int32_t id, cmb_text** out) {
  return guard([&] {
    require(t != nullptr && out != nullptr, "cmb_tokenizer_token: NULL argument");
    if (id < 0 || static_cast<size_t>(id) >= t->model.vocab_size()) {
      throw InputError("token id " + std::to_string(id) + " outside the vocabulary");
    }
    *out = make_text(t->model.token(id));
    return CMB_OK;
  });
}

cmb_status cmb_tokenizer_stats(const cmb_tokenizer* t, const char* corpus_path,
                               const char* bucket, double* chars_per_token, uint64_t* chars,
                               uint64_t* tokens) {
  return guard([&] {
    require(t != nullptr && corpus_path != nullptr, "cmb_tokenizer_stats: NULL argument");
    const tok::Bucket b = tok::parse_bucket(bucket ? bucket : "512");
    const auto rep = tok::compression_stats(t->model, load_documents(corpus_path), b);
    if (chars_per_token) *chars_per_token = rep.chars_per_token;
    if (chars) *chars = rep.char_count;
    if (tokens) *tokens = rep.token_count;
    return CMB_OK;
  });
}

cmb_status cmb_budget(size_t vocab_size, const char* config, uint64_t* total_params,
                      uint64_t* embedding_params, double* embedding_share) {
  return guard([&] {
    const RunConfig rc = RunConfig::parse(str(config));
    const auto rep = tok::budget_report(vocab_size, rc.encoder);
    if (total_params) *total_params = rep.total_params;
    if (embedding_params) *embedding_params = rep.embedding_params;
    if (embedding_share) *embedding_share = rep.embedding_share;
    return CMB_OK;
  });
}

// ---------------------------------------------------------------------------
// Masking and schedules

cmb_status cmb_mask_preview(const cmb_tokenizer* t, const char* text, double rate, uint64_t seed,
                            int whole_word, cmb_text** out) {
  return guard([&] {
    require(t != nullptr && text != nullptr && out != nullptr,
            "cmb_mask_preview: NULL argument");
    const auto ids = t->model.encode_sequence(text);
    auto grouping = mask::group_words(ids, t->model);
    if (!whole_word) grouping = mask::split_to_tokens(grouping);
    const auto plan = mask::realize_mask(grouping, rate, seed);
    std::vector<int32_t> pool;
    for (size_t id = 0; id < t->model.vocab_size(); ++id) {
      if (!t->model.is_special(static_cast<int32_t>(id))) pool.push_back(static_cast<int32_t>(id));
    }
    const auto masked = mask::apply_mask(ids, plan, pool, tok::kMaskId, seed);

    std::vector<long> word_of(ids.size(), -1);
    for (size_t g = 0; g < grouping.groups.size(); ++g) {
      for (size_t p = grouping.groups[g].first; p <= grouping.groups[g].last; ++p) {
        word_of[p] = static_cast<long>(g);
      }
    }
    std::string s = "# target_rate=" + format_double(rate) +
                    " realized_rate=" + format_double(plan.realized_rate) +
                    " maskable=" + std::to_string(grouping.maskable_positions()) +
                    " words=" + std::to_string(grouping.groups.size()) + "\n";
    s += "position\ttoken\tword\tmasked\tinput\n";
    size_t k = 0;
    for (size_t p = 0; p < ids.size(); ++p) {
      std::string how = "-";
      if (k < plan.masked_positions.size() && plan.masked_positions[k] == p) {
        how = replacement_name(plan.replacement[k]);
        ++k;
      }
      s += std::to_string(p) + "\t" + tok::escape_token(t->model.token(ids[p])) + "\t" +
           (word_of[p] < 0 ? std::string("-") : std::to_string(word_of[p])) + "\t" + how + "\t" +
           tok::escape_token(t->model.token(masked.input_ids[p])) + "\n";
    }
    *out = make_text(std::move(s));
    return CMB_OK;
  });
}

cmb_status cmb_mask_curve(const char* config, cmb_text** out) {
  return guard([&] {
    require(out != nullptr, "cmb_mask_curve: out is NULL");
    const RunConfig rc = full_precision_config(config);
    std::string s;
    for (uint64_t step = 0; step <= rc.mask.total_steps; ++step) {
      s += std::to_string(step) + "," + format_double(mask::curriculum_rate(rc.mask, step)) + "\n";
    }
    *out = make_text(std::move(s));
    return CMB_OK;
  });
}

cmb_status cmb_sched_dump(const char* config, cmb_text** out) {
  return guard([&] {
    require(out != nullptr, "cmb_sched_dump: out is NULL");
    const RunConfig rc = full_precision_config(config);
    std::string s;
    if (rc.plan) {
      for (uint64_t step = 0; step <= rc.plan->steps; ++step) {
        s += std::to_string(step) + "," + format_double(train::stage_eta(*rc.plan, step)) + "\n";
      }
    } else {
      for (uint64_t step = 0; step <= rc.schedule.total_steps; ++step) {
        s += std::to_string(step) + "," + format_double(optim::schedule_eta(rc.schedule, step)) +
             "\n";
      }
    }
    *out = make_text(std::move(s));
    return CMB_OK;
  });
}

// ---------------------------------------------------------------------------
// Encoder

cmb_status cmb_checkpoint_init(const char* config, uint64_t seed, cmb_checkpoint** out) {
  return guard([&] {
    require(out != nullptr, "cmb_checkpoint_init: out is NULL");
    const RunConfig rc = full_precision_config(config);
    *out = new cmb_checkpoint{init_checkpoint(rc.encoder, seed)};
    return CMB_OK;
  });
}

cmb_status cmb_checkpoint_load(const char* dir, cmb_checkpoint** out) {
  return guard([&] {
    require(out != nullptr && dir != nullptr, "cmb_checkpoint_load: NULL argument");
    *out = new cmb_checkpoint{Checkpoint::load(dir)};
    return CMB_OK;
  });
}

cmb_status cmb_checkpoint_save(const cmb_checkpoint* c, const char* dir) {
  return guard([&] {
    require(c != nullptr && dir != nullptr, "cmb_checkpoint_save: NULL argument");
    c->ckpt.save(dir);
    return CMB_OK;
  });
}

void cmb_checkpoint_free(cmb_checkpoint* c) { delete c; }

cmb_status cmb_checkpoint_config(const cmb_checkpoint* c, cmb_text** out) {
  return guard([&] {
    require(c != nullptr && out != nullptr, "cmb_checkpoint_config: NULL argument");
    KvConfig kv;
    for (const auto& [k, v] : c->ckpt.config.to_kv()) kv.set("encoder", k, v);
    *out = make_text(kv.serialize());
    return CMB_OK;
  });
}

cmb_status cmb_checkpoint_num_params(const cmb_checkpoint* c, uint64_t* out) {
  return guard([&] {
    require(c != nullptr && out != nullptr, "cmb_checkpoint_num_params: NULL argument");
    *out = count_parameters(c->ckpt.config);
    return CMB_OK;
  });
}

size_t cmb_checkpoint_hidden(const cmb_checkpoint* c) { return c ? c->ckpt.config.hidden : 0; }
size_t cmb_checkpoint_layers(const cmb_checkpoint* c) { return c ? c->ckpt.config.layers : 0; }
size_t cmb_checkpoint_vocab_size(const cmb_checkpoint* c) {
  return c ? c->ckpt.config.vocab_size : 0;
}

cmb_status cmb_forward(const cmb_checkpoint* c, const int32_t* ids, const size_t* cu_seqlens,
                       size_t n_seqs, double* hidden, double* logits,
                       uint64_t* scores_per_layer) {
  return guard([&] {
    require(c != nullptr && cu_seqlens != nullptr, "cmb_forward: NULL argument");
    PackedBatch batch;
    batch.cu_seqlens.assign(cu_seqlens, cu_seqlens + n_seqs + 1);
    const size_t T = batch.cu_seqlens.back();
    require(ids != nullptr || T == 0, "cmb_forward: ids is NULL");
    batch.token_ids.assign(ids, ids + T);
    for (size_t s = 0; s < n_seqs; ++s) {
      if (batch.cu_seqlens[s + 1] < batch.cu_seqlens[s]) {
        throw InputError("cu_seqlens must be non-decreasing");
      }
      batch.max_len = std::max(batch.max_len, batch.cu_seqlens[s + 1] - batch.cu_seqlens[s]);
    }
    ForwardOptions fo;
    fo.compute_logits = logits != nullptr;
    const ForwardResult fr = forward(c->ckpt, batch, fo);
    if (hidden) std::copy(fr.hidden.data.begin(), fr.hidden.data.end(), hidden);
    if (logits) std::copy(fr.logits.data.begin(), fr.logits.data.end(), logits);
    if (scores_per_layer) {
      std::copy(fr.stats.scores_per_layer.begin(), fr.stats.scores_per_layer.end(),
                scores_per_layer);
    }
    return CMB_OK;
  });
}

// ---------------------------------------------------------------------------
// Training

cmb_status cmb_train_stage(cmb_checkpoint* c, const cmb_tokenizer* t, const char* manifest_path,
                           const char* config, const char* out_dir) {
  return guard([&] {
    require(c != nullptr && t != nullptr && manifest_path != nullptr && out_dir != nullptr,
            "cmb_train_stage: NULL argument");
    const RunConfig rc = full_precision_config(config);
    if (!rc.plan) throw ConfigError("train run needs a [plan] section");
    const auto manifest = corpus::CorpusManifest::load(manifest_path);
    const auto data = train::load_train_data(manifest, t->model);
    train::RunOptions opts;
    opts.out_dir = out_dir;
    std::filesystem::create_directories(out_dir);
    auto result = train::run_stage(*rc.plan, data, c->ckpt, opts);
    write_file(std::string(out_dir) + "/trace.csv", train::trace_csv(result.trace));
    c->ckpt = std::move(result.checkpoint);
    return CMB_OK;
  });
}

cmb_status cmb_pppl(const cmb_checkpoint* c, const cmb_tokenizer* t, const char* texts_path,
                    const char* config, cmb_text** csv, cmb_text** warnings) {
  return guard([&] {
    require(c != nullptr && t != nullptr && texts_path != nullptr && csv != nullptr,
            "cmb_pppl: NULL argument");
    const RunConfig rc = full_precision_config(config);
    const auto report =
        train::pseudo_perplexity(c->ckpt, t->model, read_lines(texts_path), rc.pppl.buckets,
                                 rc.pppl.positions_per_seq, rc.global.seed);
    std::string w;
    for (const auto& line : report.warnings) w += line + "\n";
    *csv = make_text(train::pppl_csv(report));
    set_text(warnings, std::move(w));
    return CMB_OK;
  });
}

// ---------------------------------------------------------------------------
// Corpus

cmb_status cmb_corpus_dedup(const char* in_dir, const char* config, const char* out_dir,
                            size_t* kept, size_t* dropped) {
  return guard([&] {
    require(in_dir != nullptr && out_dir != nullptr, "cmb_corpus_dedup: NULL argument");
    const RunConfig rc = full_precision_config(config);
    const auto loaded = corpus::load_directory(in_dir);
    std::vector<std::string> docs;
    for (const auto& d : loaded) docs.push_back(d.text);
    const auto result = corpus::dedup(docs, rc.dedup);

    std::filesystem::create_directories(out_dir);
    std::vector<std::string> kept_docs;
    for (size_t i : result.kept) kept_docs.push_back(docs[i]);
    corpus::write_records(std::string(out_dir) + "/kept.rec", kept_docs);
    auto log = [&](const std::vector<corpus::DropRecord>& rows) {
      std::string s = "doc,file,duplicate_of,duplicate_file,similarity\n";
      for (const auto& r : rows) {
        s += std::to_string(r.doc) + "," + loaded[r.doc].file + "," + std::to_string(r.duplicate_of) +
             "," + loaded[r.duplicate_of].file + "," + format_double(r.similarity) + "\n";
      }
      return s;
    };
    write_file(std::string(out_dir) + "/drops.csv", log(result.dropped));
    write_file(std::string(out_dir) + "/near_misses.csv", log(result.near_misses));
    if (kept) *kept = result.kept.size();
    if (dropped) *dropped = result.dropped.size();
    return CMB_OK;
  });
}

cmb_status cmb_corpus_mix(const char* manifest_path, cmb_text** out) {
  return guard([&] {
    require(manifest_path != nullptr && out != nullptr, "cmb_corpus_mix: NULL argument");
    const auto m = corpus::CorpusManifest::load(manifest_path);
    std::vector<double> ratios;
    std::vector<std::vector<size_t>> lengths;
    for (const auto& s : m.sources) {
      ratios.push_back(s.ratio);
      auto& l = lengths.emplace_back();
      for (const auto& d : corpus::read_records(s.path)) l.push_back(utf8::length(d));
      if (l.empty()) throw ConfigError("manifest: source." + s.name + " has no documents");
    }
    const auto probs = corpus::draw_probabilities(ratios, lengths);
    std::string csv = "source,ratio,documents,mean_chars,draw_probability\n";
    for (size_t i = 0; i < m.sources.size(); ++i) {
      double total = 0.0;
      for (size_t n : lengths[i]) total += static_cast<double>(n);
      csv += m.sources[i].name + "," + format_double(ratios[i]) + "," +
             std::to_string(lengths[i].size()) + "," +
             format_double(total / static_cast<double>(lengths[i].size())) + "," +
             format_double(probs[i]) + "\n";
    }
    *out = make_text(std::move(csv));
    return CMB_OK;
  });
}

cmb_status cmb_corpus_synth(const char* out_dir, const char* config) {
  return guard([&] {
    require(out_dir != nullptr, "cmb_corpus_synth: NULL argument");
    const RunConfig rc = full_precision_config(config);
    const std::string dir = out_dir;
    std::filesystem::create_directories(dir);
    const auto manifest = corpus::reference_mixture();
    for (size_t i = 0; i < manifest.sources.size(); ++i) {
      const auto& s = manifest.sources[i];
      std::filesystem::create_directories(std::filesystem::path(dir + "/" + s.path).parent_path());
      corpus::write_records(dir + "/" + s.path,
                            corpus::synthetic_documents(
                                rc.synth.docs_per_source, rc.synth.min_chars, rc.synth.max_chars,
                                derive_seed(rc.global.seed, "synth." + s.name), i));
    }
    write_file(dir + "/manifest.txt", manifest.serialize());
    std::string words;
    for (const auto& w : corpus::synthetic_lexicon()) words += w + "\n";
    write_file(dir + "/words.txt", words);
    // Held-out documents are longer so that long PPPL buckets are populated.
    std::string held;
    for (const auto& d : corpus::synthetic_documents(rc.synth.heldout_docs, rc.synth.max_chars,
                                                     2 * rc.synth.max_chars,
                                                     derive_seed(rc.global.seed, "synth.heldout"))) {
      held += d + "\n";
    }
    write_file(dir + "/heldout.txt", held);
    return CMB_OK;
  });
}

// ---------------------------------------------------------------------------
// Benchmarks and metrics

cmb_status cmb_bench_run(const cmb_checkpoint* c, const char* bucket, const char* config,
                         cmb_text** scores, cmb_text** timing, cmb_text** notes) {
  return guard([&] {
    require(c != nullptr, "cmb_bench_run: NULL checkpoint");
    const RunConfig rc = full_precision_config(config);
    bench::ThroughputOptions opts;
    opts.bucket = bench::parse_bucket(bucket && *bucket ? bucket : rc.bench.bucket);
    opts.runs = rc.bench.runs;
    opts.warmup = rc.bench.warmup;
    opts.seed = rc.global.seed;
    opts.memory_budget_bytes = rc.bench.memory_budget_bytes;
    const auto rep = bench::throughput(c->ckpt, opts);
    set_text(scores, bench::scores_csv(rep));
    set_text(timing, bench::timing_csv(rep));
    std::string n;
    for (const auto& line : rep.notes) n += line + "\n";
    set_text(notes, std::move(n));
    return CMB_OK;
  });
}

cmb_status cmb_bench_sts(const cmb_checkpoint* c, const cmb_tokenizer* t, const char* pairs_path,
                         const char* config, double* pearson_r, double* spearman_rho,
                         size_t* n_pairs, cmb_text** predictions) {
  return guard([&] {
    require(c != nullptr && t != nullptr && pairs_path != nullptr, "cmb_bench_sts: NULL argument");
    const RunConfig rc = full_precision_config(config);
    const auto pairs = bench::parse_pairs_tsv(read_file(pairs_path));
    const auto rep =
        bench::sts_score(c->ckpt, t->model, pairs, bench::parse_pooling(rc.bench.pooling));
    if (pearson_r) *pearson_r = rep.pearson_r;
    if (spearman_rho) *spearman_rho = rep.spearman_rho;
    if (n_pairs) *n_pairs = rep.n_pairs;
    std::string csv = "pair,cosine,gold\n";
    for (size_t i = 0; i < pairs.size(); ++i) {
      csv += std::to_string(i) + "," + format_double(rep.predictions[i]) + "," +
             format_double(pairs[i].gold) + "\n";
    }
    set_text(predictions, std::move(csv));
    return CMB_OK;
  });
}

cmb_status cmb_pearson(const double* xs, const double* ys, size_t n, double* out) {
  return guard([&] {
    require(xs != nullptr && ys != nullptr && out != nullptr, "cmb_pearson: NULL argument");
    *out = bench::pearson(std::vector<double>(xs, xs + n), std::vector<double>(ys, ys + n));
    return CMB_OK;
  });
}

cmb_status cmb_spearman(const double* xs, const double* ys, size_t n, double* out) {
  return guard([&] {
    require(xs != nullptr && ys != nullptr && out != nullptr, "cmb_spearman: NULL argument");
    *out = bench::spearman(std::vector<double>(xs, xs + n), std::vector<double>(ys, ys + n));
    return CMB_OK;
  });
}

}  // extern "C"
