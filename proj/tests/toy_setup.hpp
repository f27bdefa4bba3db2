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

// Desk-scale toy model and data shared by the training tests.
#ifndef CMBERT_TEST_TOY_SETUP_HPP_
#define CMBERT_TEST_TOY_SETUP_HPP_

#include <string>
#include <vector>

#include "cmbert/corpus.hpp"
#include "cmbert/encoder.hpp"
#include "cmbert/tokenizer.hpp"
#include "cmbert/train.hpp"

namespace toy {

inline std::vector<std::string> documents(size_t n = 300, uint64_t seed = 7) {
  return cmbert::corpus::synthetic_documents(n, 200, 2000, seed);
}

inline cmbert::tok::TokenizerModel tokenizer(const std::vector<std::string>& docs) {
  cmbert::tok::TrainOptions opt;
  opt.target_size = 640;
  opt.policy = cmbert::tok::SizePolicy::kExact;
  opt.dictionary = cmbert::corpus::synthetic_lexicon();
  return cmbert::tok::train_bpe(docs, opt);
}

inline cmbert::EncoderConfig encoder(size_t vocab) {
  cmbert::EncoderConfig c;
  c.layers = 2;
  c.hidden = 32;
  c.heads = 2;
  c.vocab_size = vocab;
  c.max_context = 1024;
  c.local_window_radius = 16;
  c.global_layer_interval = 2;
  return c;
}

// One source holding the given documents.
inline cmbert::train::TrainData data(const cmbert::tok::TokenizerModel& model,
                                     const std::vector<std::string>& docs) {
  cmbert::train::TrainData d;
  d.tokenizer = &model;
  cmbert::train::SourceData s;
  s.name = "toy";
  s.ratio = 1.0;
  for (const auto& doc : docs) s.docs.push_back(model.encode(doc));
  d.sources.push_back(std::move(s));
  return d;
}

}  // namespace toy

#endif  // CMBERT_TEST_TOY_SETUP_HPP_
