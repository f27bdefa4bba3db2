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

// The extern "C" surface, exercised through the shared library only.

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "cmbert/cmbert.h"
#include "doctest.h"
#include "test_util.hpp"

namespace {

const char* kConfig =
    "[global]\nseed = 3\n"
    "[synth]\ndocs_per_source = 12\nmin_chars = 100\nmax_chars = 300\nheldout_docs = 4\n"
    "[tokenizer]\ntarget_size = 640\nsize_policy = exact\n"
    "[encoder]\nlayers = 2\nhidden = 16\nheads = 2\nmax_context = 256\n"
    "local_window_radius = 8\nglobal_layer_interval = 2\n"
    "[pppl]\nbuckets = 32\npositions_per_seq = 4\n"
    "[bench]\nruns = 3\nwarmup = 0\n";

std::string take(cmb_text* t) {
  std::string s(cmb_text_data(t), cmb_text_size(t));
  cmb_text_free(t);
  return s;
}

}  // namespace

TEST_CASE("config resolution and lookup") {
  cmb_text* t = nullptr;
  REQUIRE(cmb_config_resolve(kConfig, &t) == CMB_OK);
  const std::string resolved = take(t);
  CHECK(resolved.find("[encoder]") != std::string::npos);
  REQUIRE(cmb_config_get(kConfig, "encoder", "hidden", &t) == CMB_OK);
  CHECK(take(t) == "16");
  REQUIRE(cmb_config_get(kConfig, "paths", "none", &t) == CMB_OK);
  CHECK(take(t).empty());
  CHECK(cmb_config_resolve("[encoder]\nbogus = 1\n", &t) == CMB_ERR_CONFIG);
  CHECK(std::string(cmb_last_error()).find("bogus") != std::string::npos);
  CHECK(cmb_config_resolve(kConfig, nullptr) == CMB_ERR_CONTRACT);
  CHECK(std::strcmp(cmb_config_schema_version(), "1") == 0);
}

TEST_CASE("end to end through the C interface") {
  testutil::ScratchDir dir("capi");
  REQUIRE(cmb_corpus_synth(dir.str().c_str(), kConfig) == CMB_OK);
  const std::string words = dir / "words.txt";

  cmb_tokenizer* tok = nullptr;
  REQUIRE(cmb_tokenizer_train((dir / "sources").c_str(), words.c_str(), kConfig, &tok) == CMB_OK);
  CHECK(cmb_tokenizer_vocab_size(tok) == 640);

  // Two-call encode on the first 20 bytes of a training record.
  std::string first;
  for (const auto& e : std::filesystem::directory_iterator(dir / "sources")) {
    if (e.path().extension() != ".rec") continue;
    std::ifstream in(e.path());
    std::string len;
    std::getline(in, len);
    std::getline(in, first);
    break;
  }
  REQUIRE(first.size() >= 21);
  const std::string sample = first.substr(0, 21);
  const char* text = sample.c_str();
  size_t n = 0;
  REQUIRE(cmb_tokenizer_encode(tok, text, 1, nullptr, 0, &n) == CMB_OK);
  REQUIRE(n >= 3);
  std::vector<int32_t> ids(n);
  CHECK(cmb_tokenizer_encode(tok, text, 1, ids.data(), n - 1, &n) == CMB_ERR_BUFFER);
  CHECK(n == ids.size());
  REQUIRE(cmb_tokenizer_encode(tok, text, 1, ids.data(), n, &n) == CMB_OK);
  CHECK(ids.front() == 2);
  CHECK(ids.back() == 3);
  cmb_text* t = nullptr;
  REQUIRE(cmb_tokenizer_decode(tok, ids.data(), ids.size(), &t) == CMB_OK);
  CHECK(take(t) == sample);

  const std::string tok_dir = dir / "tok";
  REQUIRE(cmb_tokenizer_save(tok, tok_dir.c_str()) == CMB_OK);
  cmb_tokenizer* tok2 = nullptr;
  REQUIRE(cmb_tokenizer_load(tok_dir.c_str(), &tok2) == CMB_OK);
  CHECK(cmb_tokenizer_vocab_size(tok2) == 640);
  cmb_tokenizer_free(tok2);

  const std::string cfg = std::string(kConfig) + "[encoder]\nvocab_size = 640\n";
  cmb_checkpoint* ck = nullptr;
  REQUIRE(cmb_checkpoint_init(cfg.c_str(), 1, &ck) == CMB_OK);
  CHECK(cmb_checkpoint_hidden(ck) == 16);
  CHECK(cmb_checkpoint_layers(ck) == 2);

  const size_t cu[3] = {0, n, 2 * n};
  std::vector<int32_t> two(ids);
  two.insert(two.end(), ids.begin(), ids.end());
  std::vector<double> hidden(2 * n * 16);
  uint64_t scores[2] = {0, 0};
  REQUIRE(cmb_forward(ck, two.data(), cu, 2, hidden.data(), nullptr, scores) == CMB_OK);
  for (size_t k = 0; k < n * 16; ++k) CHECK(hidden[k] == hidden[n * 16 + k]);
  CHECK(scores[0] == 2 * 2 * n * n);

  // A short Stage I run on the synthesized manifest.
  const std::string train_cfg = cfg + "[plan]\nstage = I\nsteps = 3\nmax_len = 32\nbatch_sequences = 2\n";
  const std::string out = dir / "run";
  const std::string manifest = dir / "manifest.txt";
  REQUIRE(cmb_train_stage(ck, tok, manifest.c_str(), train_cfg.c_str(), out.c_str()) == CMB_OK);
  CHECK(std::filesystem::exists(out + "/trace.csv"));
  CHECK(std::filesystem::exists(out + "/checkpoint"));
  cmb_checkpoint* loaded = nullptr;
  REQUIRE(cmb_checkpoint_load((out + "/checkpoint").c_str(), &loaded) == CMB_OK);
  uint64_t p1 = 0, p2 = 0;
  REQUIRE(cmb_checkpoint_num_params(ck, &p1) == CMB_OK);
  REQUIRE(cmb_checkpoint_num_params(loaded, &p2) == CMB_OK);
  CHECK(p1 == p2);
  cmb_checkpoint_free(loaded);

  cmb_text* csv = nullptr;
  cmb_text* warn = nullptr;
  const std::string held = dir / "heldout.txt";
  REQUIRE(cmb_pppl(ck, tok, held.c_str(), cfg.c_str(), &csv, &warn) == CMB_OK);
  CHECK(take(csv).find("\n32,") != std::string::npos);
  take(warn);

  cmb_text* scores_csv = nullptr;
  cmb_text* timing = nullptr;
  cmb_text* notes = nullptr;
  REQUIRE(cmb_bench_run(ck, "32x2", cfg.c_str(), &scores_csv, &timing, &notes) == CMB_OK);
  CHECK(take(scores_csv).find("custom,32,2,0,global,") != std::string::npos);
  CHECK(take(timing).find(",mean,") != std::string::npos);
  take(notes);

  const std::string precise = cfg + "[global]\nprecision = reduced\n";
  cmb_checkpoint* other = nullptr;
  CHECK(cmb_checkpoint_init(precise.c_str(), 1, &other) == CMB_ERR_CONFIG);
  CHECK(cmb_tokenizer_train((dir / "missing").c_str(), nullptr, kConfig, &tok2) == CMB_ERR_INPUT);

  cmb_checkpoint_free(ck);
  cmb_tokenizer_free(tok);
}

TEST_CASE("correlation entry points") {
  const double x[4] = {1, 2, 3, 4};
  const double y[4] = {2, 4, 6, 9};
  double r = 0;
  REQUIRE(cmb_pearson(x, y, 4, &r) == CMB_OK);
  CHECK(r > 0.98);
  REQUIRE(cmb_spearman(x, y, 4, &r) == CMB_OK);
  CHECK(r == 1.0);
  const double flat[4] = {1, 1, 1, 1};
  CHECK(cmb_pearson(x, flat, 4, &r) == CMB_ERR_INPUT);
  CHECK(cmb_pearson(x, y, 1, &r) == CMB_ERR_CONTRACT);
  CHECK(cmb_pearson(nullptr, y, 4, &r) == CMB_ERR_CONTRACT);
}
