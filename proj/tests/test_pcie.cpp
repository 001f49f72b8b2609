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

// Packet splitting, interleaving, tags and the credit-limited link.

#include <map>
#include <numeric>
#include <vector>

#include "aasim/pcie.hpp"
#include "doctest.h"

using namespace aasim;

namespace {

Bytes pattern(std::size_t n) {
  Bytes b(n);
  std::iota(b.begin(), b.end(), std::uint8_t{1});
  return b;
}

Task<> take_tag(TagPool* pool, Engine* e, std::vector<std::pair<Nanos, int>>* got) {
  const std::uint8_t t = co_await pool->acquire();
  got->emplace_back(e->now(), t);
}

}  // namespace

TEST_SUITE("pcie") {
  TEST_CASE("put splits into ceil(len / max_payload) packets covering the data") {
    for (std::uint32_t len : {8u, 128u, 129u, 1000u, 4096u}) {
      for (std::uint32_t mp : {128u, 256u, 512u}) {
        CAPTURE(len);
        CAPTURE(mp);
        const Bytes data = pattern(len);
        const auto pkts = split_put(0x1000, data, DeviceId{1, 2}, 7, 99, mp);
        CHECK(pkts.size() == (len + mp - 1) / mp);
        Bytes joined;
        for (std::size_t i = 0; i < pkts.size(); ++i) {
          CHECK(pkts[i].seq_in_txn == i);
          CHECK(pkts[i].txn_offset == joined.size());
          CHECK(pkts[i].address == 0x1000 + joined.size());
          CHECK(pkts[i].txn_total_bytes == len);
          CHECK(pkts[i].last_in_txn() == (i + 1 == pkts.size()));
          joined.insert(joined.end(), pkts[i].payload.begin(), pkts[i].payload.end());
        }
        CHECK(joined == data);
      }
    }
  }

  TEST_CASE("transactions over 4096 bytes are rejected") {
    const Bytes big(4104);
    CHECK_THROWS_AS(split_put(0, big, DeviceId{}, 0, 0, 256), OversizeError);
    CHECK_THROWS_AS(split_get(0, 4097, DeviceId{}, 0, 0, 256), OversizeError);
  }

  TEST_CASE("get completions") {
    const auto g = split_get(0x2040, 600, DeviceId{1, 0}, 3, 5, 256);
    CHECK(g.completions == 3);
    CHECK(g.request.payload.empty());
    const Bytes data = pattern(600);
    const auto cs = make_completions(g.request, data, 256, TlpStatus::Success);
    REQUIRE(cs.size() == 3);
    CHECK(cs[2].length == 88);
    CHECK(cs[0].address == (0x2040 & 0x7f));
    CHECK(cs[1].tag == 3);
    const auto blocked = make_completions(g.request, {}, 256, TlpStatus::Blocked);
    REQUIRE(blocked.size() == 1);
    CHECK(blocked[0].status == TlpStatus::Blocked);
    CHECK(blocked[0].payload.empty());
    CHECK(completion_count(0, 256) == 1);
  }

  TEST_CASE("atomic operand payloads") {
    CHECK(make_atomic(0, AtomicOp::FetchAdd, 1, 0, DeviceId{}, 0, 0).payload.size() == 8);
    CHECK(make_atomic(0, AtomicOp::CompareSwap, 1, 2, DeviceId{}, 0, 0).payload.size() == 16);
  }

  TEST_CASE("interleave is a permutation preserving per-stream order") {
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
      std::vector<std::vector<Tlp>> streams;
      for (std::uint8_t s = 0; s < 3; ++s) {
        streams.push_back(split_put(0, pattern(100 + 300 * s), DeviceId{1, s}, s, s, 64));
      }
      const std::size_t total = streams[0].size() + streams[1].size() + streams[2].size();
      Rng rng(seed);
      const auto merged = interleave(streams, rng);
      REQUIRE(merged.size() == total);
      std::map<std::uint64_t, std::uint32_t> next;
      for (const auto& t : merged) CHECK(t.seq_in_txn == next[t.txn_id]++);
    }
  }

  TEST_CASE("tag pool hands out distinct tags and queues waiters FIFO") {
    Engine e;
    TagPool pool(e, 2);
    std::vector<std::pair<Nanos, int>> got;
    for (int i = 0; i < 4; ++i) e.spawn(take_tag(&pool, &e, &got), "taker");
    e.at(100, [&] { pool.release(1); });
    e.at(200, [&] { pool.release(0); });
    e.run();
    REQUIRE(got.size() == 4);
    CHECK(got[0] == std::pair<Nanos, int>{0, 0});
    CHECK(got[1] == std::pair<Nanos, int>{0, 1});
    CHECK(got[2] == std::pair<Nanos, int>{100, 1});
    CHECK(got[3] == std::pair<Nanos, int>{200, 0});
    CHECK(pool.waits() == 2);
    CHECK_THROWS_AS(TagPool(e, 0), ConfigError);
  }

  TEST_CASE("link delivers after serialization plus latency, in FIFO order") {
    Engine e;
    Link link(e, "l", 500, 2.0, 8, 24);
    std::vector<std::pair<Nanos, std::uint64_t>> arrivals;
    link.set_receiver([&](Tlp t) {
      arrivals.emplace_back(e.now(), t.txn_id);
      link.release_credit();
    });
    for (std::uint64_t i = 0; i < 3; ++i) {
      Tlp t;
      t.payload.assign(232, 0);  // 256 bytes on the wire
      t.txn_id = i;
      link.submit(t);
    }
    e.run();
    REQUIRE(arrivals.size() == 3);
    CHECK(arrivals[0] == std::pair<Nanos, std::uint64_t>{628, 0});
    CHECK(arrivals[1] == std::pair<Nanos, std::uint64_t>{756, 1});
    CHECK(arrivals[2] == std::pair<Nanos, std::uint64_t>{884, 2});
  }

  TEST_CASE("link stalls without credits and resumes when one is returned") {
    Engine e;
    Link link(e, "l", 10, 1.0, 1, 0);
    std::vector<Tlp> held;
    link.set_receiver([&](Tlp t) { held.push_back(std::move(t)); });
    for (int i = 0; i < 3; ++i) link.submit(Tlp{});
    e.run();
    CHECK(held.size() == 1);
    CHECK(link.queued() == 2);
    CHECK(link.stalls() == 1);
    link.release_credit();
    e.run();
    CHECK(held.size() == 2);
    CHECK_THROWS_AS((CreditState(1).give()), SimError);
  }
}
