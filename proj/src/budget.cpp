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
#include "cmbert/tokenizer.hpp"

namespace cmbert::tok {

BudgetReport budget_report(size_t vocab_size, const EncoderConfig& config) {
  EncoderConfig c = config;
  c.vocab_size = vocab_size;
  c.validate();
  BudgetReport r;
  r.tied_embeddings = c.tie_embeddings;
  r.embedding_params = static_cast<uint64_t>(vocab_size) * c.hidden;
  r.total_params = count_parameters(c);
  r.embedding_share = r.total_params == 0
                          ? 0.0
                          : static_cast<double>(r.embedding_params) /
                                static_cast<double>(r.total_params);
  return r;
}

}  // namespace cmbert::tok
