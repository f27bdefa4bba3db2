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

#ifndef CMBERT_CORPUS_HPP_
#define CMBERT_CORPUS_HPP_

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace cmbert::corpus {

// Record files: each document is "<byte length>\n<bytes>\n".
std::vector<std::string> read_records(const std::string& path);
void write_records(const std::string& path, const std::vector<std::string>& docs);
std::string encode_records(const std::vector<std::string>& docs);
std::vector<std::string> decode_records(std::string_view data);

// Every regular file in `dir`, sorted by name. "*.rec" files contribute their
// records; any other file is one document.
struct LoadedDocument {
  std::string file;
  std::string text;
};
std::vector<LoadedDocument> load_directory(const std::string& dir);

struct Source {
  std::string name;
  std::string path;
  double ratio = 0.0;
};

// Plain key-value manifest, one section per source:
//
//   [source.cci3_hq]
//   path = cci3_hq.rec
//   ratio = 0.57
//
// Relative paths resolve against the manifest's directory.
struct CorpusManifest {
  std::vector<Source> sources;

  // Throws ConfigError naming the offending field.
  void validate() const;
  std::string serialize() const;
  static CorpusManifest parse(std::string_view text, const std::string& base_dir = "");
  static CorpusManifest load(const std::string& path);
};

// Shares from the pre-training batch mixture table.
CorpusManifest reference_mixture();

struct MinHashSignature {
  std::vector<uint64_t> values;
  size_t shingle_size = 0;
};

// Character shingles (code points). A document shorter than the shingle
// size is a single shingle.
std::vector<std::string> shingles(std::string_view doc, size_t shingle_size);

MinHashSignature minhash_signature(std::string_view doc, size_t k, size_t shingle_size,
                                   uint64_t seed);
double estimate_jaccard(const MinHashSignature& a, const MinHashSignature& b);

struct DedupOptions {
  double threshold = 0.8;
  size_t k = 128;
  size_t shingle_size = 5;
  size_t bands = 32;
  size_t rows = 4;
  uint64_t seed = 0;
  // Pairs scoring in [threshold - near_miss_margin, threshold) are logged.
  double near_miss_margin = 0.1;

  void validate() const;
};

struct DropRecord {
  size_t doc = 0;
  size_t duplicate_of = 0;
  double similarity = 0.0;
};

struct DedupResult {
  std::vector<size_t> kept;
  std::vector<DropRecord> dropped;
  std::vector<DropRecord> near_misses;
};

// Banded LSH proposes earlier kept documents; a document is dropped when its
// signature similarity to the best candidate reaches the threshold. Input
// order decides which copy survives.
DedupResult dedup(const std::vector<std::string>& docs, const DedupOptions& options);

struct DocDraw {
  size_t source = 0;
  size_t doc = 0;
  size_t tokens = 0;  // possibly truncated to fit the batch
};

// Draws documents until `batch_tokens` is filled. Sources are picked with
// probability proportional to ratio / mean document length, so the
// expected token share of each source equals its ratio. Depends only on
// (seed, step).
std::vector<DocDraw> mixture_sampler(const std::vector<double>& ratios,
                                     const std::vector<std::vector<size_t>>& doc_lengths,
                                     size_t batch_tokens, uint64_t seed, uint64_t step);

// Per-draw source probabilities used by `mixture_sampler`.
std::vector<double> draw_probabilities(const std::vector<double>& ratios,
                                       const std::vector<std::vector<size_t>>& doc_lengths);

// Topic-structured Chinese text built from a fixed lexicon; used for desk
// fixtures and demos. `topic_bias` in [0, 1] skews the topic mix.
std::vector<std::string> synthetic_documents(size_t count, size_t min_chars, size_t max_chars,
                                             uint64_t seed, size_t topic_bias = 0);

// Word list of the synthetic lexicon (usable as a segmenter dictionary).
std::vector<std::string> synthetic_lexicon();

}  // namespace cmbert::corpus

#endif  // CMBERT_CORPUS_HPP_
