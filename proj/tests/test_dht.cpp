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

// Hashtable keys, the sequential volume, and the distributed variants.

#include <set>
#include <vector>

#include "aasim/dht.hpp"
#include "doctest.h"

using namespace aasim;

namespace {

SimConfig small_config(std::uint32_t procs) {
  SimConfig cfg;
  cfg.num_procs = procs;
  cfg.vol_size = 1u << 12;
  return cfg;
}

}  // namespace

TEST_SUITE("dht") {
  TEST_CASE("scheme names") {
    CHECK(parse_dht_scheme("aa-sp") == DhtScheme::AaSp);
    CHECK(to_string(DhtScheme::AaInt) == "AA-Int");
    CHECK(is_active(DhtScheme::AaPoll));
    CHECK_FALSE(is_active(DhtScheme::Rma));
    CHECK_THROWS_AS(parse_dht_scheme("mpi"), ConfigError);
  }

  TEST_CASE("unmix inverts mix") {
    Rng rng(5);
    for (int i = 0; i < 1000; ++i) {
      const std::uint64_t k = rng.next();
      CHECK(DhtHash::unmix(DhtHash::mix(k)) == k);
    }
  }

  TEST_CASE("make_key fixes owner and bucket") {
    Rng rng(2);
    for (Rank owner = 0; owner < 7; ++owner) {
      for (std::uint64_t b : {0ull, 1ull, 511ull}) {
        const std::uint64_t k = DhtHash::make_key(owner, b, 9, 7, rng);
        CHECK(DhtHash::owner(k, 7) == owner);
        CHECK(DhtHash::bucket(k, 9) == b);
      }
    }
  }

  TEST_CASE("insert keys are distinct with the exact collision count") {
    for (double r : {0.0, 0.25, 0.5}) {
      Rng rng(3);
      const std::uint64_t n = 2000;
      const auto keys = make_insert_keys(n, 8, 1u << 12, r, rng);
      REQUIRE(keys.size() == n);
      CHECK(std::set<std::uint64_t>(keys.begin(), keys.end()).size() == n);
      const unsigned bits = table_bits_for(1u << 12);
      std::set<std::pair<Rank, std::uint64_t>> used;
      std::uint64_t collisions = 0;
      for (const auto k : keys) {
        if (!used.emplace(DhtHash::owner(k, 8), DhtHash::bucket(k, bits)).second) ++collisions;
      }
      CHECK(collisions == static_cast<std::uint64_t>(std::llround(n * r)));
    }
  }

  TEST_CASE("local volume chains collisions and removes keys") {
    LocalVolume v(1u << 10);
    const unsigned bits = table_bits_for(1u << 10);
    Rng rng(4);
    const std::uint64_t a = DhtHash::make_key(0, 5, bits, 1, rng);
    const std::uint64_t b = DhtHash::make_key(0, 5, bits, 1, rng);
    CHECK_FALSE(v.insert(a));
    CHECK(v.insert(b));
    CHECK(v.lookup(a) == a);  // bucket head
    CHECK(v.lookup(b) == a);
    CHECK(v.contents() == std::vector<std::uint64_t>{std::min(a, b), std::max(a, b)});
    CHECK(v.remove(a) == 1);
    CHECK(v.lookup(b) == 0);
    CHECK(v.contents() == std::vector<std::uint64_t>{b});
  }

  TEST_CASE("every insert variant matches the sequential oracle") {
    const SimConfig cfg = small_config(4);
    Rng rng(6);
    const auto keys = make_insert_keys(800, cfg.num_procs, cfg.vol_size, 0.25, rng);
    const DhtStream s = insert_stream(keys, cfg.num_procs);
    const auto oracle = dht_oracle(s, cfg.num_procs, cfg.vol_size);
    for (auto scheme : {DhtScheme::AaInt, DhtScheme::AaPoll, DhtScheme::AaSp, DhtScheme::Rma, DhtScheme::Am}) {
      CAPTURE(to_string(scheme));
      const DhtResult r = run_dht(cfg, scheme, s);
      CHECK(r.volumes == oracle);
      CHECK(r.ops == 800);
      CHECK(r.colliding_inserts == 200);
    }
  }

  TEST_CASE("active inserts cost one remote op; RMA inserts six to eight when colliding") {
    const SimConfig cfg = small_config(4);
    Rng rng(7);
    const DhtStream s = insert_stream(make_insert_keys(400, cfg.num_procs, cfg.vol_size, 0.5, rng), cfg.num_procs);
    const DhtResult aa = run_dht(cfg, DhtScheme::AaPoll, s);
    CHECK(aa.max_ops_per_insert == 1);
    const DhtResult rma = run_dht(cfg, DhtScheme::Rma, s);
    CHECK(rma.min_ops_colliding >= 6);
    CHECK(rma.max_ops_colliding <= 8);
  }

  TEST_CASE("mixed inserts and deletes match the oracle") {
    const SimConfig cfg = small_config(4);
    Rng rng(8);
    const DhtStream s = mixed_stream(3000, cfg.num_procs, cfg.vol_size, 0.3, rng);
    CHECK(s.count(DhtOp::Kind::Delete) > 0);
    const auto oracle = dht_oracle(s, cfg.num_procs, cfg.vol_size);
    CHECK(run_dht(cfg, DhtScheme::AaPoll, s).volumes == oracle);
    CHECK(run_dht(cfg, DhtScheme::Rma, s).volumes == oracle);
    CHECK_THROWS_AS(run_dht(cfg, DhtScheme::Am, s), ConfigError);
  }

  TEST_CASE("compute ratio adds per-op compute") {
    SimConfig cfg = small_config(2);
    Rng rng(9);
    const DhtStream s = insert_stream(make_insert_keys(200, 2, cfg.vol_size, 0.0, rng), 2);
    const DhtResult base = run_dht(cfg, DhtScheme::AaPoll, s);
    cfg.r_comp = 0.5;
    const DhtResult slow = run_dht(cfg, DhtScheme::AaPoll, s);
    CHECK(slow.compute_ns > 0);
    CHECK(slow.metrics.sim_time_ns > base.metrics.sim_time_ns);
    CHECK(slow.volumes == base.volumes);
  }

  TEST_CASE("runs are deterministic") {
    const SimConfig cfg = small_config(4);
    Rng rng(10);
    const DhtStream s = insert_stream(make_insert_keys(300, 4, cfg.vol_size, 0.25, rng), 4);
    CHECK(run_dht(cfg, DhtScheme::AaInt, s).metrics == run_dht(cfg, DhtScheme::AaInt, s).metrics);
  }
}
