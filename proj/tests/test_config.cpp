/* Copyright 2026 The aasim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Configuration parsing and validation.

#include <algorithm>

#include "aasim/config.hpp"
#include "doctest.h"

using namespace aasim;

TEST_SUITE("config") {
  TEST_CASE("defaults validate") { CHECK_NOTHROW(SimConfig{}.validate()); }

  TEST_CASE("parse applies keys, comments and whitespace") {
    const SimConfig c = SimConfig::parse(
        "# comment\n"
        "num_procs = 16\n"
        "  iotlb_policy=rnd  # trailing\n"
        "notification = scratchpad\n"
        "r_cols = 0.25\n"
        "\n");
    CHECK(c.num_procs == 16);
    CHECK(c.iotlb_policy == ReplacementPolicy::Random);
    CHECK(c.notification == NotificationMode::Scratchpad);
    CHECK(c.r_cols == doctest::Approx(0.25));
  }

  TEST_CASE("parse keeps base values for absent keys") {
    SimConfig base;
    base.seed = 77;
    const SimConfig c = SimConfig::parse("num_procs = 4\n", base);
    CHECK(c.seed == 77);
    CHECK(c.num_procs == 4);
  }

  TEST_CASE("unknown key is rejected") {
    CHECK_THROWS_AS(SimConfig::parse("no_such_key = 1\n"), ConfigError);
  }

  TEST_CASE("malformed values are rejected") {
    CHECK_THROWS_AS(SimConfig::parse("num_procs = many\n"), ConfigError);
    CHECK_THROWS_AS(SimConfig::parse("iotlb_policy = fifo\n"), ConfigError);
    CHECK_THROWS_AS(SimConfig::parse("notification = smoke\n"), ConfigError);
    CHECK_THROWS_AS(SimConfig::parse("num_procs\n"), ConfigError);
  }

  TEST_CASE("validate rejects out-of-range settings") {
    SimConfig c;
    c.num_procs = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = SimConfig{};
    c.access_log_size = 3000;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = SimConfig{};
    c.r_cols = 1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = SimConfig{};
    c.r_comp = -0.1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }

  TEST_CASE("missing file is a config error") {
    CHECK_THROWS_AS(SimConfig::load_file("/nonexistent/aasim.cfg"), ConfigError);
  }

  TEST_CASE("known keys include the cache and interrupt settings") {
    const auto& keys = SimConfig::known_keys();
    CHECK(std::find(keys.begin(), keys.end(), "iotlb_size") != keys.end());
    CHECK(std::find(keys.begin(), keys.end(), "interrupt_batch") != keys.end());
  }

  TEST_CASE("iotlb label") {
    SimConfig c;
    c.iotlb_size = 32;
    c.iotlb_assoc = 0;
    c.iotlb_policy = ReplacementPolicy::Lru;
    const std::string l = iotlb_label(c);
    CHECK(l.find("32") != std::string::npos);
    CHECK(l.find("lru") != std::string::npos);
  }
}
