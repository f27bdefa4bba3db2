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

/* C interface to the cmbert core. All functions return a cmb_status; on
 * failure cmb_last_error() holds a message for the calling thread.
 *
 * Config arguments are sectioned key-value text (see README). Later keys
 * override earlier ones, so overrides can simply be appended.
 *
 * Text results come back as cmb_text handles owned by the caller. */
#ifndef CMBERT_CMBERT_H_
#define CMBERT_CMBERT_H_

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define CMB_API __attribute__((visibility("default")))
#else
#define CMB_API
#endif

typedef enum cmb_status {
  CMB_OK = 0,
  CMB_ERR_CONFIG = 1,    /* invalid configuration or parameters */
  CMB_ERR_INPUT = 2,     /* unreadable or malformed input data */
  CMB_ERR_RUNTIME = 3,   /* failure while running (I/O, divergence, ...) */
  CMB_ERR_CONTRACT = 4,  /* precondition violated by the caller */
  CMB_ERR_BUFFER = 5,    /* output buffer too small; *len holds the need */
  CMB_ERR_INTERNAL = 6
} cmb_status;

typedef struct cmb_text cmb_text;
typedef struct cmb_tokenizer cmb_tokenizer;
typedef struct cmb_checkpoint cmb_checkpoint;

CMB_API const char* cmb_last_error(void);
CMB_API const char* cmb_version(void);
CMB_API const char* cmb_config_schema_version(void);

CMB_API const char* cmb_text_data(const cmb_text* text);
CMB_API size_t cmb_text_size(const cmb_text* text);
CMB_API void cmb_text_free(cmb_text* text);

/* Fully resolved config (every section, defaults filled in). */
CMB_API cmb_status cmb_config_resolve(const char* config, cmb_text** out);
/* Value of [section] key after resolution; empty text when unset. */
CMB_API cmb_status cmb_config_get(const char* config, const char* section, const char* key,
                                  cmb_text** out);

/* ---- tokenizer ---- */

/* Trains on the documents in `corpus_path` (a directory, a .rec record file,
 * or a text file with one document per line), using [tokenizer]. The
 * optional `dictionary` lists one CJK word per line. */
CMB_API cmb_status cmb_tokenizer_train(const char* corpus_path, const char* dictionary_path,
                                       const char* config, cmb_tokenizer** out);
CMB_API cmb_status cmb_tokenizer_load(const char* dir, cmb_tokenizer** out);
CMB_API cmb_status cmb_tokenizer_save(const cmb_tokenizer* tok, const char* dir);
CMB_API void cmb_tokenizer_free(cmb_tokenizer* tok);
CMB_API size_t cmb_tokenizer_vocab_size(const cmb_tokenizer* tok);

/* Two-call pattern: pass ids = NULL to learn *len. */
CMB_API cmb_status cmb_tokenizer_encode(const cmb_tokenizer* tok, const char* text,
                                        int with_specials, int32_t* ids, size_t cap,
                                        size_t* len);
CMB_API cmb_status cmb_tokenizer_decode(const cmb_tokenizer* tok, const int32_t* ids, size_t n,
                                        cmb_text** out);
CMB_API cmb_status cmb_tokenizer_token(const cmb_tokenizer* tok, int32_t id, cmb_text** out);

/* Chars/token over the documents at `corpus_path`, with each document
 * clipped to the bucket ("512" or "8192"). */
CMB_API cmb_status cmb_tokenizer_stats(const cmb_tokenizer* tok, const char* corpus_path,
                                       const char* bucket, double* chars_per_token,
                                       uint64_t* chars, uint64_t* tokens);

/* Parameter budget for `vocab_size` with the [encoder] section. */
CMB_API cmb_status cmb_budget(size_t vocab_size, const char* config, uint64_t* total_params,
                              uint64_t* embedding_params, double* embedding_share);

/* ---- masking and schedules ---- */

/* Human-readable masking preview of one text at `rate`. */
CMB_API cmb_status cmb_mask_preview(const cmb_tokenizer* tok, const char* text, double rate,
                                    uint64_t seed, int whole_word, cmb_text** out);
/* CSV "step,rate" for steps 0..total over the [mask] section. */
CMB_API cmb_status cmb_mask_curve(const char* config, cmb_text** out);
/* CSV "step,eta" for steps 0..total_steps. Uses the stage plan when the
 * config has a [plan] section, else the [schedule] section. */
CMB_API cmb_status cmb_sched_dump(const char* config, cmb_text** out);

/* ---- encoder ---- */

CMB_API cmb_status cmb_checkpoint_init(const char* config, uint64_t seed, cmb_checkpoint** out);
CMB_API cmb_status cmb_checkpoint_load(const char* dir, cmb_checkpoint** out);
CMB_API cmb_status cmb_checkpoint_save(const cmb_checkpoint* ckpt, const char* dir);
CMB_API void cmb_checkpoint_free(cmb_checkpoint* ckpt);
/* [encoder] section of the checkpoint. */
CMB_API cmb_status cmb_checkpoint_config(const cmb_checkpoint* ckpt, cmb_text** out);
CMB_API cmb_status cmb_checkpoint_num_params(const cmb_checkpoint* ckpt, uint64_t* out);
CMB_API size_t cmb_checkpoint_hidden(const cmb_checkpoint* ckpt);
CMB_API size_t cmb_checkpoint_layers(const cmb_checkpoint* ckpt);
CMB_API size_t cmb_checkpoint_vocab_size(const cmb_checkpoint* ckpt);

/* Packed forward over n_seqs sequences laid end to end (cu_seqlens has
 * n_seqs + 1 entries). Any output pointer may be NULL; otherwise hidden
 * holds tokens x hidden, logits tokens x vocab and scores one count per
 * layer. */
CMB_API cmb_status cmb_forward(const cmb_checkpoint* ckpt, const int32_t* ids,
                               const size_t* cu_seqlens, size_t n_seqs, double* hidden,
                               double* logits, uint64_t* scores_per_layer);

/* ---- training ---- */

/* Runs the stage described by the config's [plan] on the manifest's
 * sources, updating `ckpt` in place. Writes <out_dir>/trace.csv and
 * <out_dir>/checkpoint (plus periodic step_<n> checkpoints). */
CMB_API cmb_status cmb_train_stage(cmb_checkpoint* ckpt, const cmb_tokenizer* tok,
                                   const char* manifest_path, const char* config,
                                   const char* out_dir);
/* Pseudo-perplexity CSV for the texts (one per line) in `texts_path`, using
 * [pppl] and the global seed. Warnings (omitted buckets) go to `warnings`
 * when non-NULL. */
CMB_API cmb_status cmb_pppl(const cmb_checkpoint* ckpt, const cmb_tokenizer* tok,
                            const char* texts_path, const char* config, cmb_text** csv,
                            cmb_text** warnings);

/* ---- corpus ---- */

/* Deduplicates every document under in_dir with [dedup]. Writes kept
 * documents to <out_dir>/kept.rec, the drop log to drops.csv and near
 * misses to near_misses.csv. */
CMB_API cmb_status cmb_corpus_dedup(const char* in_dir, const char* config, const char* out_dir,
                                    size_t* kept, size_t* dropped);
/* Validates a manifest and returns CSV of expected per-source shares. */
CMB_API cmb_status cmb_corpus_mix(const char* manifest_path, cmb_text** out);
/* Desk fixture corpus: sources/<name>.rec per reference source, manifest.txt,
 * words.txt (segmenter dictionary) and heldout.txt, using [synth] and the
 * global seed. */
CMB_API cmb_status cmb_corpus_synth(const char* out_dir, const char* config);

/* ---- benchmarks and metrics ---- */

/* Throughput for `bucket` ("<len>x<batch>" or a named bucket) using
 * [bench]. `scores` is the attention accounting CSV, `timing` the per-run
 * wall-clock CSV and `notes` any batch reductions. */
CMB_API cmb_status cmb_bench_run(const cmb_checkpoint* ckpt, const char* bucket,
                                 const char* config, cmb_text** scores, cmb_text** timing,
                                 cmb_text** notes);
/* STS correlation on a tab-separated (textA, textB, gold) file. */
CMB_API cmb_status cmb_bench_sts(const cmb_checkpoint* ckpt, const cmb_tokenizer* tok,
                                 const char* pairs_path, const char* config, double* pearson_r,
                                 double* spearman_rho, size_t* n_pairs, cmb_text** predictions);
CMB_API cmb_status cmb_pearson(const double* xs, const double* ys, size_t n, double* out);
CMB_API cmb_status cmb_spearman(const double* xs, const double* ys, size_t n, double* out);

#ifdef __cplusplus
}
#endif

#endif /* CMBERT_CMBERT_H_ */
