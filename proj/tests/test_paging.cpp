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

// Host memory, PTE encoding, page tables, the IOTLB and access classification.

#include <vector>

#include "aasim/paging.hpp"
#include "doctest.h"

using namespace aasim;

namespace {

/// Hits of `rounds` passes over pages 0..n-1 after one warm-up pass.
std::uint64_t cyclic_hits(IotlbCache& c, std::uint64_t n, int rounds) {
  for (std::uint64_t p = 0; p < n; ++p) {
    if (!c.lookup(0, p)) c.insert(0, p, Pte{});
  }
  const std::uint64_t before = c.hits();
  for (int r = 0; r < rounds; ++r) {
    for (std::uint64_t p = 0; p < n; ++p) {
      if (!c.lookup(0, p)) c.insert(0, p, Pte{});
    }
  }
  return c.hits() - before;
}

}  // namespace

TEST_SUITE("paging") {
  TEST_CASE("memory reads zero until written") {
    PhysMemory m(0, 1 << 20);
    CHECK(m.load_u64(0x1000) == 0);
    m.store_u64(0x1ff8, 0x1122334455667788ull);
    CHECK(m.load_u64(0x1ff8) == 0x1122334455667788ull);
    std::vector<std::uint8_t> buf(16, 0xaa);
    m.write(0x2ff8, buf);  // crosses a page boundary
    std::vector<std::uint8_t> back(16);
    m.read(0x2ff8, back);
    CHECK(back == buf);
    CHECK(m.resident_pages() == 3);
    CHECK_THROWS_AS(m.load_u64(1 << 20), SimError);
  }

  TEST_CASE("pte bit layout") {
    Pte p;
    p.r = true;
    CHECK(p.encode() == ((1ull << 62) | 1ull));
    p = Pte{};
    p.w = true;
    p.wl = true;
    p.wld = true;
    p.rl = true;
    p.rld = true;
    p.e = true;
    p.frame = 0xabcde;
    p.iuid = 1023;
    const std::uint64_t raw = p.encode();
    CHECK((raw >> 1 & 1) == 1);
    CHECK((raw >> 7 & 0xf) == 0xf);
    CHECK((raw >> 11 & 1) == 1);
    CHECK((raw >> 12 & ((1ull << 40) - 1)) == 0xabcde);
    CHECK((raw >> 52 & 0x3ff) == 1023);
    CHECK(Pte::decode(raw) == p);
  }

  TEST_CASE("pte round trip over every flag combination") {
    for (unsigned bits = 0; bits < 128; ++bits) {
      Pte p;
      p.r = bits & 1;
      p.w = bits & 2;
      p.wl = bits & 4;
      p.wld = bits & 8;
      p.rl = bits & 16;
      p.rld = bits & 32;
      p.e = bits & 64;
      p.frame = bits * 977;
      p.iuid = static_cast<std::uint16_t>(bits * 7);
      CHECK(Pte::decode(p.encode()) == p);
    }
  }

  TEST_CASE("page table walk reads four levels for a mapped page") {
    PageTable t;
    Pte p;
    p.r = true;
    p.frame = 42;
    t.map(0x7000'1234'5000, p);
    const auto w = t.walk(0x7000'1234'5abc);
    REQUIRE(w.pte.has_value());
    CHECK(w.pte->frame == 42);
    CHECK(w.levels == 4);
    const auto miss = t.walk(0x1000);
    CHECK_FALSE(miss.pte.has_value());
    CHECK(miss.levels >= 1);
    CHECK(miss.levels <= 4);
    CHECK(t.unmap(0x7000'1234'5000));
    CHECK_FALSE(t.walk(0x7000'1234'5000).pte.has_value());
    CHECK(t.mapped_pages() == 0);
  }

  TEST_CASE("iotlb geometry") {
    IotlbCache c(64, 4, ReplacementPolicy::Lru, 1);
    CHECK(c.set_count() == 16);
    CHECK(c.ways() == 4);
    IotlbCache f(32, 0, ReplacementPolicy::Lru, 1);
    CHECK(f.set_count() == 1);
    CHECK(f.ways() == 32);
    CHECK_THROWS_AS(IotlbCache(30, 4, ReplacementPolicy::Lru, 1), ConfigError);
  }

  TEST_CASE("set index is page modulo set count") {
    IotlbCache c(8, 2, ReplacementPolicy::Lru, 1);  // 4 sets
    // Pages 0, 4, 8 share set 0; a third one evicts the least recent.
    c.insert(0, 0, Pte{});
    c.insert(0, 4, Pte{});
    c.insert(0, 1, Pte{});
    CHECK(c.lookup(0, 0));
    const auto evicted = c.insert(0, 8, Pte{});
    REQUIRE(evicted.has_value());
    CHECK(*evicted == 4);
    CHECK(c.lookup(0, 1));
  }

  TEST_CASE("lru holds a cyclic working set of capacity and thrashes beyond it") {
    for (std::uint32_t ways : {1u, 2u, 4u, 0u}) {
      CAPTURE(ways);
      IotlbCache fits(16, ways, ReplacementPolicy::Lru, 3);
      CHECK(cyclic_hits(fits, 16, 5) == 80);
      IotlbCache over(16, 0, ReplacementPolicy::Lru, 3);
      CHECK(cyclic_hits(over, 17, 5) == 0);
    }
  }

  TEST_CASE("random replacement keeps some of an oversized cyclic set") {
    IotlbCache c(16, 0, ReplacementPolicy::Random, 9);
    CHECK(cyclic_hits(c, 17, 20) > 0);
  }

  TEST_CASE("entries are tagged by domain") {
    IotlbCache c(16, 4, ReplacementPolicy::Lru, 1);
    Pte a;
    a.frame = 1;
    c.insert(0, 5, a);
    CHECK(c.lookup(0, 5));
    CHECK_FALSE(c.lookup(1, 5));
    c.invalidate_page(5);
    CHECK_FALSE(c.lookup(0, 5));
  }

  TEST_CASE("classification of puts") {
    Pte p;
    p.w = true;
    ActionSet a = classify(p, AccessKind::Put);
    CHECK(a.memory_effect);
    CHECK_FALSE(a.logs());
    CHECK_FALSE(a.blocked);

    p.wld = true;  // data logging implies metadata logging
    p.e = true;
    p.iuid = 9;
    a = classify(p, AccessKind::Put);
    CHECK(a.log_meta);
    CHECK(a.log_data);
    CHECK(a.destination == LogDestination::AccessLog);
    CHECK(a.iuid == 9);

    p.w = false;
    a = classify(p, AccessKind::Put);
    CHECK(a.blocked);
    CHECK_FALSE(a.memory_effect);
    CHECK(a.log_data);
  }

  TEST_CASE("classification of gets") {
    Pte p;
    p.rld = true;
    p.e = false;
    ActionSet a = classify(p, AccessKind::Get);
    CHECK(a.blocked);
    CHECK(a.log_meta);
    CHECK_FALSE(a.log_data);  // nothing returned to replicate
    CHECK(a.destination == LogDestination::FaultLog);
    p.r = true;
    a = classify(p, AccessKind::Get);
    CHECK(a.log_data);
    CHECK(a.memory_effect);
  }

  TEST_CASE("remapping charges context and table walks, then hits") {
    RemappingUnit r(16, 4, ReplacementPolicy::Lru, 1);
    const auto t = r.add_page_table();
    const DeviceId d{1, 0};
    r.attach_device(d, t);
    Pte p;
    p.r = p.w = true;
    p.frame = 7;
    r.map_page(d, 0x5000, p);

    auto first = r.walk(d, 0x5010);
    CHECK(first.outcome == RemappingUnit::Outcome::Mapped);
    CHECK(first.phys == 7 * kPageSize + 0x10);
    CHECK(first.mem_accesses == RemappingUnit::kContextMissAccesses + PageTable::kLevels);
    auto second = r.walk(d, 0x5018);
    CHECK(second.iotlb_hit);
    CHECK(second.mem_accesses == 0);

    p.frame = 8;
    r.map_page(d, 0x5000, p);
    auto third = r.walk(d, 0x5000);
    CHECK_FALSE(third.iotlb_hit);
    CHECK(third.mem_accesses == PageTable::kLevels);
    CHECK(third.phys == 8 * kPageSize);

    CHECK(r.walk(DeviceId{2, 0}, 0x5000).outcome == RemappingUnit::Outcome::UnknownDevice);
    CHECK(r.walk(d, 0x9000).outcome == RemappingUnit::Outcome::Unmapped);
  }

  TEST_CASE("disabling caches makes every walk a full walk") {
    RemappingUnit r(16, 4, ReplacementPolicy::Lru, 1);
    r.attach_device(DeviceId{1, 0}, r.add_page_table());
    Pte p;
    p.r = true;
    r.map_page(DeviceId{1, 0}, 0x5000, p);
    r.set_caching(false);
    for (int i = 0; i < 3; ++i) {
      const auto t = r.walk(DeviceId{1, 0}, 0x5000);
      CHECK_FALSE(t.iotlb_hit);
      CHECK(t.mem_accesses == RemappingUnit::kContextMissAccesses + PageTable::kLevels);
    }
  }
}
