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

// Run-config parsing, validation and the resolved form.

#include <string>

#include "cmbert/common.hpp"
#include "cmbert/config.hpp"
#include "doctest.h"

using namespace cmbert;

namespace {

std::string resolved(const std::string& text) {
  return RunConfig::parse(text).to_kv().serialize();
}

}  // namespace

TEST_CASE("defaults resolve and round-trip") {
  const auto c = RunConfig::parse("");
  CHECK(c.global.seed == 0);
  CHECK(c.tokenizer.target_size == 32000);
  CHECK(c.pppl.buckets == std::vector<size_t>{128, 512, 1024});
  CHECK_FALSE(c.plan.has_value());
  const std::string once = resolved("");
  CHECK(resolved(once) == once);
}

TEST_CASE("a stage plan resolves its schedule, mask and optimizer") {
  const std::string text =
      "[global]\nseed = 9\n[paths]\ncorpus = data/x\n[plan]\nstage = I\nsteps = 300\n"
      "[schedule]\ncycles = 5\n[mask]\nwarmup_fraction = 0.1\n[optimizer]\nweight_decay = 0.01\n"
      "[encoder]\nlayers = 2\nhidden = 32\nheads = 2\n";
  const auto c = RunConfig::parse(text);
  REQUIRE(c.plan.has_value());
  CHECK(c.plan->steps == 300);
  CHECK(c.plan->seed == 9);
  CHECK(c.schedule.cycles == 5);
  CHECK(c.mask.total_steps == 300);
  CHECK(c.optimizer.weight_decay == 0.01);
  CHECK(c.path("corpus") == "data/x");
  CHECK(c.path("missing").empty());
  const std::string once = resolved(text);
  CHECK(resolved(once) == once);
  CHECK(once.find("[paths]\ncorpus = data/x\n") != std::string::npos);
}

TEST_CASE("unknown sections and keys are rejected") {
  CHECK_THROWS_AS(RunConfig::parse("[trainer]\nsteps = 3\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("[encoder]\nlayer = 3\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("seed = 3\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("[global]\nprecision = half\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("[pppl]\nbuckets = 128,0\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("[bench]\nruns = 2\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("[synth]\nmin_chars = 50\nmax_chars = 10\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("[dedup]\nthreshold = 1.5\n"), ConfigError);
  try {
    RunConfig::parse("[encoder]\nhiden = 3\n");
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("hiden") != std::string::npos);
  }
}

TEST_CASE("later keys override earlier ones") {
  const auto c = RunConfig::parse("[global]\nseed = 1\n[global]\nseed = 4\n");
  CHECK(c.global.seed == 4);
  CHECK(parse_size_list("1,2,30") == std::vector<size_t>{1, 2, 30});
}
