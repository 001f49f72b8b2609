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

// Access counting, get logging, checkpointing, sort, put stream and sweep.

#include <set>

#include "aasim/apps.hpp"
#include "doctest.h"

using namespace aasim;

namespace {

SimConfig small_config(std::uint32_t procs) {
  SimConfig cfg;
  cfg.num_procs = procs;
  return cfg;
}

}  // namespace

TEST_SUITE("apps") {
  TEST_CASE("scheme names") {
    CHECK(parse_counter_scheme("rma-atomics") == CounterScheme::RmaAtomics);
    CHECK(to_string(CounterScheme::Allreduce) == "Allreduce");
    CHECK(parse_getlog_scheme("no-ft") == GetlogScheme::NoFt);
    CHECK(to_string(GetlogScheme::RmaSendback) == "RMA-sendback");
    CHECK_THROWS_AS(parse_counter_scheme("x"), ConfigError);
    CHECK_THROWS_AS(parse_getlog_scheme("x"), ConfigError);
  }

  TEST_CASE("counter oracle counts the trace") {
    CounterTrace t(2);
    t[0].push_back({1, 3, 0, AccessKind::Put});
    t[0].push_back({1, 3, 8, AccessKind::Get});
    t[1].push_back({0, 0, 0, AccessKind::Put});
    t[1].push_back({1, 3, 16, AccessKind::Put});
    const AccessCounts c = counter_oracle(t, 2, 4);
    CHECK(c.puts[1][3] == 2);
    CHECK(c.gets[1][3] == 1);
    CHECK(c.puts[0][0] == 1);
  }

  TEST_CASE("every counter scheme reproduces the oracle") {
    const SimConfig cfg = small_config(4);
    Rng rng(1);
    const auto trace = make_counter_trace(4, 100, 8, rng);
    const auto want = counter_oracle(trace, 4, 8);
    const auto aa = run_counter(cfg, CounterScheme::Aa, trace, 8);
    const auto rma = run_counter(cfg, CounterScheme::RmaAtomics, trace, 8);
    const auto all = run_counter(cfg, CounterScheme::Allreduce, trace, 8);
    CHECK(aa.counts == want);
    CHECK(rma.counts == want);
    CHECK(all.counts == want);
    CHECK(aa.extra_ops == 0);
    CHECK(rma.extra_ops == 400);
  }

  TEST_CASE("get logging payloads and replay") {
    const SimConfig cfg = small_config(4);
    const auto noft = run_getlog(cfg, GetlogScheme::NoFt, 100, 8);
    const auto aa = run_getlog(cfg, GetlogScheme::Aa, 100, 8);
    const auto sb = run_getlog(cfg, GetlogScheme::RmaSendback, 100, 8);
    CHECK_FALSE(noft.replay_ok.has_value());
    REQUIRE(aa.replay_ok.has_value());
    CHECK(*aa.replay_ok);
    REQUIRE(sb.replay_ok.has_value());
    CHECK(*sb.replay_ok);
    CHECK(aa.metrics.payload_bytes == noft.metrics.payload_bytes);
    CHECK(sb.metrics.payload_bytes == 2 * noft.metrics.payload_bytes);
  }

  TEST_CASE("checkpoint trace and dirty sets") {
    Rng rng(2);
    const auto trace = make_checkpoint_trace(4, 64, 2, 50, rng);
    CHECK(trace.pages == 64);
    CHECK(trace.remote.size() == 2);
    const DirtySets want = checkpoint_oracle(trace, 4);
    for (std::size_t e = 0; e < 2; ++e) {
      for (Rank r = 0; r < 4; ++r) {
        std::set<std::uint32_t> pages = trace.local_dirty[e][r];
        for (const auto& src : trace.remote[e]) {
          for (const auto& w : src) {
            if (w.target == r) pages.insert(w.page);
          }
        }
        CHECK(want[e][r] == pages);
      }
    }
    CHECK(run_checkpoint(small_config(4), trace).dirty == want);
  }

  TEST_CASE("sample sort output is sorted for every scheme") {
    const SimConfig cfg = small_config(4);
    for (auto s : {GetlogScheme::Aa, GetlogScheme::NoFt, GetlogScheme::RmaSendback}) {
      const SortResult r = run_sort(cfg, s, 4 * 2048);
      CHECK(r.sorted);
    }
    CHECK_THROWS(run_sort(cfg, GetlogScheme::Aa, 4 * 2048 + 1));
  }

  TEST_CASE("put stream moves every byte") {
    SimConfig cfg;
    const StreamResult r = run_stream(cfg, 64, 4096);
    CHECK(r.bytes == 64 * 4096);
    CHECK(r.bandwidth_bytes_per_ns > 0);
    CHECK(r.bandwidth_bytes_per_ns <= cfg.link_bw_bytes_per_ns);
    CHECK_THROWS_AS(run_stream(cfg, 1, 3000), ConfigError);
  }

  TEST_CASE("iotlb sweep covers the grid") {
    const auto pts = run_iotlb_sweep(SimConfig{}, 50);
    CHECK(pts.size() == 32);
    for (const auto& p : pts) {
      CHECK(p.hit_rate >= 0.0);
      CHECK(p.hit_rate <= 1.0);
      CHECK(p.insert_rate > 0.0);
    }
  }
}
