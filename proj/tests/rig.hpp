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

#pragma once

// Single-IOMMU test rig and the randomized transaction and flush harnesses
// shared by the unit tests and the acceptance runner.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "aasim/common.hpp"
#include "aasim/config.hpp"
#include "aasim/engine.hpp"
#include "aasim/iommu.hpp"
#include "aasim/paging.hpp"
#include "aasim/pcie.hpp"

namespace aasim::testing {

inline constexpr std::uint16_t kIuid = 1;
inline constexpr Addr kLogPhys = 0x80'0000;

/// One IOMMU over one node's memory; every device shares page table 0.
struct IommuRig {
  SimConfig cfg;
  Engine engine;
  PhysMemory memory;
  MemoryChannel channel;
  ExtendedIommu iommu;
  std::vector<DeviceId> devices;

  IommuRig(const SimConfig& c, std::uint64_t log_size, std::uint32_t num_devices)
      : cfg(c), memory(0, 1ull << 24), channel(c.mem_access_ns), iommu(engine, memory, channel, c, c.seed) {
    iommu.remapping().add_page_table();
    for (std::uint32_t i = 0; i < num_devices; ++i) {
      devices.push_back(DeviceId{1, static_cast<std::uint8_t>(i)});
      iommu.remapping().attach_device(devices.back(), 0);
    }
    iommu.register_log(kIuid, kLogPhys, log_size);
  }

  /// Maps device page `page` of the window onto frame `page`.
  void map(std::uint64_t page, Pte pte) {
    pte.frame = page;
    iommu.remapping().map_page(devices.at(0), kWindowBase + page * kPageSize, pte);
  }
};

inline Pte logged_put_pte() {
  Pte p;
  p.r = p.w = true;
  p.wl = p.wld = true;
  p.e = true;
  p.iuid = kIuid;
  return p;
}

inline Pte plain_pte() {
  Pte p;
  p.r = p.w = true;
  return p;
}

/// Consumes records in log order, one at a time with a random delay each.
/// Stops after `expected` records.
inline Task<> consume_log(IommuRig* rig, std::uint64_t seed, Nanos max_delay, std::size_t expected,
                          std::vector<LogRecord>* out) {
  Rng rng(seed);
  AccessLog& log = rig->iommu.log(kIuid);
  while (out->size() < expected) {
    if (log.visible_head() == log.tail()) {
      co_await rig->engine.sleep_for(50);
      continue;
    }
    co_await rig->engine.sleep_for(1 + static_cast<Nanos>(rng.below(max_delay)));
    LogRecord rec = log.read_record(rig->memory, log.tail());
    const std::uint64_t bytes = record_bytes(rec.header.length, rec.header.data_present());
    out->push_back(std::move(rec));
    rig->iommu.tail_advanced(kIuid, bytes);
  }
}

/// Schedules packets onto the IOMMU ingress with random gaps.
inline void deliver(IommuRig& rig, std::vector<Tlp> packets, Rng& rng, Nanos max_gap) {
  Nanos t = 0;
  for (auto& p : packets) {
    t += static_cast<Nanos>(rng.below(max_gap + 1));
    rig.engine.at(t, [&rig, p = std::move(p)]() mutable { rig.iommu.accept(std::move(p)); });
  }
}

struct ReassemblyOutcome {
  bool log_matches = false;
  bool memory_matches = false;
  std::size_t transactions = 0;
  std::uint64_t stalls = 0;
  std::string detail;
};

/// Three devices issue multi-packet logged puts whose packets arrive
/// interleaved. The consumed log must equal the serial oracle: one record
/// per transaction, in order of first-packet arrival, with the full payload.
/// Each transaction writes its own half page, so memory is order-independent.
inline ReassemblyOutcome run_reassembly(std::uint64_t seed) {
  SimConfig cfg;
  cfg.seed = seed;
  cfg.max_payload = 128;
  constexpr std::uint64_t kPages = 10;
  constexpr std::uint64_t kSlot = kPageSize / 2;
  constexpr std::uint32_t kDevices = 3;
  IommuRig rig(cfg, 8192, kDevices);
  for (std::uint64_t p = 0; p < kPages; ++p) rig.map(p, logged_put_pte());

  Rng rng(seed);
  struct Txn {
    DeviceId dev;
    Addr addr;
    Bytes data;
  };
  std::map<std::uint64_t, Txn> txns;
  std::vector<std::vector<Tlp>> streams(kDevices);
  std::uint64_t txn_id = 0;
  for (std::uint32_t d = 0; d < kDevices; ++d) {
    const std::uint64_t n = 2 + rng.below(5);
    for (std::uint64_t k = 0; k < n; ++k) {
      const auto len = static_cast<std::uint32_t>(8 * (1 + rng.below(256)));
      const std::uint64_t off = 8 * rng.below((kSlot - len) / 8 + 1);
      const Addr addr = kWindowBase + txn_id * kSlot + off;
      Bytes data(len);
      for (auto& b : data) b = static_cast<std::uint8_t>(rng.next());
      auto pkts = split_put(addr, data, rig.devices[d], static_cast<std::uint8_t>(k), txn_id, cfg.max_payload);
      for (auto& p : pkts) streams[d].push_back(std::move(p));
      txns.emplace(txn_id, Txn{rig.devices[d], addr, std::move(data)});
      ++txn_id;
    }
  }
  std::vector<Tlp> merged = interleave(std::move(streams), rng);

  // Serial oracle: transactions in first-packet order.
  std::vector<LogRecord> expected;
  std::set<std::uint64_t> seen;
  for (const auto& p : merged) {
    if (!seen.insert(p.txn_id).second) continue;
    const Txn& t = txns.at(p.txn_id);
    LogRecord r;
    r.header.op_kind = AccessKind::Put;
    r.header.device_id = t.dev.packed();
    r.header.iuid = kIuid;
    r.header.dev_addr = t.addr;
    r.header.length = static_cast<std::uint16_t>(t.data.size());
    r.header.flags = LogRecordHeader::kDataPresent;
    r.header.seq_no = expected.size();
    r.payload = t.data;
    expected.push_back(std::move(r));
  }

  std::vector<LogRecord> got;
  deliver(rig, std::move(merged), rng, 40);
  rig.engine.spawn(consume_log(&rig, seed ^ 0x5eed, 400, expected.size(), &got), "consumer");
  rig.engine.run();

  ReassemblyOutcome out;
  out.transactions = expected.size();
  out.stalls = rig.iommu.backpressure_stalls();
  out.log_matches = got.size() == expected.size();
  for (std::size_t i = 0; out.log_matches && i < got.size(); ++i) {
    if (!(got[i].header == expected[i].header) || got[i].payload != expected[i].payload) {
      out.log_matches = false;
      out.detail = "record " + std::to_string(i) + " differs";
    }
  }
  if (got.size() != expected.size()) {
    out.detail = std::to_string(got.size()) + " of " + std::to_string(expected.size()) + " records";
  }
  out.memory_matches = true;
  for (const auto& [id, t] : txns) {
    Bytes b(t.data.size());
    rig.memory.read(t.addr - kWindowBase, b);
    out.memory_matches = out.memory_matches && b == t.data;
  }
  return out;
}

struct FlushOutcome {
  std::size_t flushes = 0;
  std::size_t completed = 0;
  std::size_t violations = 0;  // records reserved before interception but unconsumed at return
  std::size_t waited = 0;      // flushes that had at least one such record
};

/// Random put and flush-get schedules from two devices over logged and plain
/// pages. At every flush return, each record reserved before the flush was
/// intercepted must already be consumed.
inline FlushOutcome run_flush_schedule(std::uint64_t seed) {
  SimConfig cfg;
  cfg.seed = seed;
  cfg.max_payload = 256;
  constexpr std::uint32_t kDevices = 2;
  IommuRig rig(cfg, 8192, kDevices);
  rig.map(0, logged_put_pte());
  rig.map(1, logged_put_pte());
  rig.map(2, plain_pte());

  Rng rng(seed);
  std::vector<std::vector<Tlp>> streams(kDevices);
  std::uint64_t txn_id = 0;
  std::size_t logged_txns = 0;
  std::size_t flushes = 0;
  for (std::uint32_t d = 0; d < kDevices; ++d) {
    const std::uint64_t n = 4 + rng.below(12);
    for (std::uint64_t k = 0; k < n; ++k) {
      const auto tag = static_cast<std::uint8_t>(k);
      if (rng.chance(0.3)) {
        Tlp f = split_get(flush_page_addr(kIuid), 8, rig.devices[d], tag, txn_id++, cfg.max_payload).request;
        streams[d].push_back(std::move(f));
        ++flushes;
        continue;
      }
      const std::uint64_t page = rng.below(3);
      const auto len = static_cast<std::uint32_t>(8 * (1 + rng.below(64)));
      Bytes data(len);
      for (auto& b : data) b = static_cast<std::uint8_t>(rng.next());
      for (auto& p : split_put(kWindowBase + page * kPageSize, data, rig.devices[d], tag, txn_id++, cfg.max_payload)) {
        streams[d].push_back(std::move(p));
      }
      if (page < 2) ++logged_txns;
    }
  }

  std::set<std::uint64_t> reserved;
  std::set<std::uint64_t> consumed;
  std::map<std::uint64_t, std::set<std::uint64_t>> owed;  // flush txn -> seqs reserved before it
  FlushOutcome out;
  out.flushes = flushes;
  std::vector<LogRecord> records;
  auto& hooks = rig.iommu.hooks();
  hooks.on_reserve = [&](std::uint16_t, const AccessLog::Reservation& r) { reserved.insert(r.seq_no); };
  hooks.on_flush_intercept = [&](std::uint16_t, const FlushRequest& fr) { owed[fr.txn_id] = reserved; };
  hooks.emit = [&](Tlp t) {
    if (t.kind != TlpKind::ReadCompletion || !owed.count(t.txn_id)) return;
    for (const auto& r : records) consumed.insert(r.header.seq_no);
    ++out.completed;
    const auto& need = owed.at(t.txn_id);
    bool ok = true;
    for (const auto s : need) ok = ok && consumed.count(s) != 0;
    if (!ok) ++out.violations;
    if (!need.empty()) ++out.waited;
  };

  deliver(rig, interleave(std::move(streams), rng), rng, 60);
  rig.engine.spawn(consume_log(&rig, seed ^ 0xf1a5, 300, logged_txns, &records), "consumer");
  rig.engine.run();
  return out;
}

}  // namespace aasim::testing
