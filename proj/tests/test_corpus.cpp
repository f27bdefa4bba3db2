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

// Record files, manifests, MinHash dedup, mixture sampling, synthetic text.

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "cmbert/common.hpp"
#include "cmbert/corpus.hpp"
#include "cmbert/rng.hpp"
#include "cmbert/utf8.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace cmbert;

TEST_CASE("record encoding round-trips arbitrary bytes") {
  const std::vector<std::string> docs{"", "a", "line\nbreaks\n", std::string("\0nul", 4), "中文"};
  CHECK(corpus::decode_records(corpus::encode_records(docs)) == docs);
  CHECK(corpus::encode_records({"ab"}) == "2\nab\n");
  CHECK_THROWS_AS(corpus::decode_records("5\nab\n"), InputError);
  CHECK_THROWS_AS(corpus::decode_records("x\nab\n"), InputError);
  CHECK_THROWS_AS(corpus::decode_records("2\nabX"), InputError);
}

TEST_CASE("directories load record files and plain files") {
  testutil::ScratchDir dir("corpus_dir");
  corpus::write_records(dir / "a.rec", {"one", "two"});
  write_file(dir / "b.txt", "three");
  const auto docs = corpus::load_directory(dir.str());
  REQUIRE(docs.size() == 3);
  CHECK(docs[0].text == "one");
  CHECK(docs[1].text == "two");
  CHECK(docs[2].text == "three");
  CHECK(docs[2].file.find("b.txt") != std::string::npos);
}

TEST_CASE("reference mixture ratios") {
  const auto m = corpus::reference_mixture();
  REQUIRE(m.sources.size() == 5);
  double sum = 0;
  for (const auto& s : m.sources) sum += s.ratio;
  CHECK(std::fabs(sum - 1.0) < 1e-12);
  CHECK(m.sources[0].name == "baike");
  CHECK(m.sources[0].ratio == 0.03);
  CHECK(m.sources[1].ratio == 0.57);
  CHECK(m.sources[4].ratio == 0.20);
  CHECK_NOTHROW(m.validate());
}

TEST_CASE("manifest parsing resolves paths and validates ratios") {
  const auto m = corpus::CorpusManifest::parse(
      "[source.a]\npath = a.rec\nratio = 0.25\n[source.b]\npath = /abs/b.rec\nratio = 0.75\n",
      "/data");
  REQUIRE(m.sources.size() == 2);
  CHECK(m.sources[0].path == "/data/a.rec");
  CHECK(m.sources[1].path == "/abs/b.rec");
  const auto again = corpus::CorpusManifest::parse(m.serialize());
  CHECK(again.serialize() == m.serialize());

  try {
    corpus::CorpusManifest::parse("[source.a]\npath=a\nratio=0.5\n[source.b]\npath=b\nratio=0.4\n");
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("sum to 0.9") != std::string::npos);
  }
  CHECK_THROWS_AS(corpus::CorpusManifest::parse("[source.a]\nratio=1\n"), ConfigError);
  CHECK_THROWS_AS(corpus::CorpusManifest::parse("[source.a]\npath=a\nratio=-1\n"), ConfigError);
  CHECK_THROWS_AS(corpus::CorpusManifest::parse("[other]\npath=a\nratio=1\n"), ConfigError);
  CHECK_THROWS_AS(corpus::CorpusManifest::parse("[source.a]\npath=a\nratio=1\nweight=2\n"),
                  ConfigError);
}

TEST_CASE("shingles are code-point windows") {
  const auto s = corpus::shingles("abcdef", 5);
  CHECK(s == std::vector<std::string>{"abcde", "bcdef"});
  CHECK(corpus::shingles("abc", 5) == std::vector<std::string>{"abc"});
  CHECK(corpus::shingles("中文模型训练", 5).size() == 2);
}

TEST_CASE("MinHash estimates are unbiased") {
  Rng rng(3);
  for (double frac : {0.04, 0.2, 0.5}) {
    const auto a = fixture::random_cjk(rng, 400);
    const auto b = fixture::perturb(rng, a, frac);
    const std::string sa = utf8::encode(a), sb = utf8::encode(b);
    const double truth = oracle::jaccard(oracle::shingle_set(sa, 5), oracle::shingle_set(sb, 5));
    double sum = 0;
    const int trials = 300;
    for (int t = 0; t < trials; ++t) {
      const auto ma = corpus::minhash_signature(sa, 128, 5, static_cast<uint64_t>(t));
      const auto mb = corpus::minhash_signature(sb, 128, 5, static_cast<uint64_t>(t));
      sum += corpus::estimate_jaccard(ma, mb);
    }
    // Standard error of the mean is sqrt(J(1-J)/128/300) < 0.003.
    CHECK(std::fabs(sum / trials - truth) < 0.01);
  }
  const auto x = corpus::minhash_signature("同一个文档", 64, 5, 1);
  CHECK(corpus::estimate_jaccard(x, x) == 1.0);
}

TEST_CASE("dedup drops exactly the brute-force duplicates") {
  const auto f = fixture::dedup_fixture(500, 77);
  REQUIRE(f.planted > 50);
  REQUIRE(f.decoys > 10);
  corpus::DedupOptions opt;
  opt.seed = 5;
  const auto res = corpus::dedup(f.docs, opt);
  std::vector<size_t> got;
  for (const auto& d : res.dropped) got.push_back(d.doc);
  const auto want = oracle::brute_force_dedup(f.docs, 5, 0.8);
  CHECK(want.size() == f.planted + f.exact);
  CHECK(got == want);
  CHECK(res.kept.size() + res.dropped.size() == f.docs.size());
  for (const auto& d : res.dropped) {
    CHECK(d.duplicate_of < d.doc);
    CHECK(std::binary_search(res.kept.begin(), res.kept.end(), d.duplicate_of));
  }
  for (const auto& n : res.near_misses) {
    CHECK(n.similarity < 0.8);
    CHECK(n.similarity >= 0.7);
  }
}

TEST_CASE("first occurrence survives regardless of order") {
  Rng rng(8);
  const auto a = utf8::encode(fixture::random_cjk(rng, 300));
  const auto b = utf8::encode(fixture::random_cjk(rng, 300));
  const auto res = corpus::dedup({b, a, a, b, a}, {});
  CHECK(res.kept == std::vector<size_t>{0, 1});
  REQUIRE(res.dropped.size() == 3);
  CHECK(res.dropped[0].duplicate_of == 1);
  CHECK(res.dropped[1].duplicate_of == 0);
  CHECK(res.dropped[0].similarity == 1.0);

  corpus::DedupOptions bad;
  bad.bands = 64;
  CHECK_THROWS_AS(corpus::dedup({a}, bad), ConfigError);
  bad = {};
  bad.threshold = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("mixture draws match the reference token shares") {
  const auto m = corpus::reference_mixture();
  Rng rng(1);
  std::vector<double> ratios;
  std::vector<std::vector<size_t>> lengths;
  for (size_t s = 0; s < m.sources.size(); ++s) {
    ratios.push_back(m.sources[s].ratio);
    std::vector<size_t> l(50 + 10 * s);
    const size_t mean = 200 + 300 * s;
    for (auto& x : l) x = mean / 2 + rng.below(mean);
    lengths.push_back(l);
  }
  std::vector<double> tokens(ratios.size(), 0.0);
  double total = 0;
  size_t draws = 0;
  for (uint64_t step = 0; draws < 100000; ++step) {
    for (const auto& d : corpus::mixture_sampler(ratios, lengths, 65536, 9, step)) {
      tokens[d.source] += static_cast<double>(d.tokens);
      total += static_cast<double>(d.tokens);
      ++draws;
    }
  }
  for (size_t s = 0; s < ratios.size(); ++s) {
    INFO(m.sources[s].name);
    CHECK(std::fabs(tokens[s] / total - ratios[s]) <= 0.01);
  }
}

TEST_CASE("mixture batches fill the token budget exactly and depend only on the step") {
  const std::vector<double> ratios{0.5, 0.5};
  const std::vector<std::vector<size_t>> lengths{{100, 300}, {50}};
  for (uint64_t step = 0; step < 20; ++step) {
    const auto a = corpus::mixture_sampler(ratios, lengths, 1000, 4, step);
    size_t filled = 0;
    for (const auto& d : a) filled += d.tokens;
    CHECK(filled == 1000);
    const auto b = corpus::mixture_sampler(ratios, lengths, 1000, 4, step);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].doc == b[i].doc);
  }
  const auto p = corpus::draw_probabilities(ratios, lengths);
  // Mean lengths 200 and 50: probabilities proportional to 0.5/200 and 0.5/50.
  CHECK(p[0] == doctest::Approx(0.2).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(0.8).epsilon(1e-14));
  CHECK_THROWS_AS(corpus::draw_probabilities({1.0}, {{}}), ConfigError);
}

TEST_CASE("synthetic documents are deterministic and within bounds") {
  const auto a = corpus::synthetic_documents(30, 100, 400, 6);
  const auto b = corpus::synthetic_documents(30, 100, 400, 6);
  CHECK(a == b);
  CHECK(corpus::synthetic_documents(30, 100, 400, 7) != a);
  for (const auto& d : a) {
    const size_t n = utf8::length(d);
    CHECK(n >= 100);
    CHECK(n <= 400);
  }
  const auto lex = corpus::synthetic_lexicon();
  CHECK(std::set<std::string>(lex.begin(), lex.end()).size() == lex.size());
}
