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

// Node memory, extended IOMMU page tables, and the IOTLB/context caches.

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <unordered_map>
#include <vector>

#include "aasim/common.hpp"

namespace aasim {

/// Byte-addressable host memory of one node. Pages are materialized on
/// first write; untouched memory reads as zero.
class PhysMemory {
 public:
  PhysMemory(std::uint32_t node_id, std::uint64_t size_bytes);

  std::uint32_t node_id() const { return node_id_; }
  std::uint64_t size() const { return size_; }
  std::size_t resident_pages() const { return pages_.size(); }

  void read(Addr addr, std::span<std::uint8_t> out) const;
  void write(Addr addr, std::span<const std::uint8_t> in);
  std::uint64_t load_u64(Addr addr) const;
  void store_u64(Addr addr, std::uint64_t v);

 private:
  using Page = std::array<std::uint8_t, kPageSize>;
  void check(Addr addr, std::uint64_t len) const;

  std::uint32_t node_id_;
  std::uint64_t size_;
  std::unordered_map<std::uint64_t, std::unique_ptr<Page>> pages_;
};

/// One extended IOMMU page-table entry.
///
/// Encoded layout (64-bit): R=bit0, W=bit1, WL..RLD=bits 7-10, E=bit11,
/// frame=bits 12-51, IUID=bits 52-61, valid=bit62.
struct Pte {
  std::uint64_t frame = 0;
  bool r = false;
  bool w = false;
  bool wl = false;
  bool wld = false;
  bool rl = false;
  bool rld = false;
  bool e = false;  // 1: record into the IUID's access log, 0: the fault log
  std::uint16_t iuid = 0;

  static constexpr std::uint16_t kMaxIuid = 1023;
  static constexpr std::uint64_t kMaxFrame = (1ull << 40) - 1;

  /// Data logging implies metadata logging.
  Pte normalized() const {
    Pte p = *this;
    p.wl = p.wl || p.wld;
    p.rl = p.rl || p.rld;
    return p;
  }

  std::uint64_t encode() const;
  static Pte decode(std::uint64_t raw);

  bool operator==(const Pte&) const = default;
};

/// Per-device 4-level radix tree (9 bits per level, 48-bit addresses).
class PageTable {
 public:
  static constexpr unsigned kLevels = 4;
  static constexpr std::uint64_t kAddressLimit = 1ull << 48;

  PageTable();

  /// Installs pte for the page at dev_vaddr (last write wins).
  void map(Addr dev_vaddr, const Pte& pte);
  bool unmap(Addr dev_vaddr);

  struct WalkResult {
    std::optional<Pte> pte;  // empty: unmapped
    std::uint32_t levels;    // table levels read
  };
  WalkResult walk(Addr dev_addr) const;

  std::size_t mapped_pages() const { return mapped_; }

 private:
  struct Node {
    std::array<std::uint64_t, 512> entries{};
  };
  static unsigned index(Addr a, unsigned level) {
    return static_cast<unsigned>((a >> (kPageShift + 9 * (kLevels - 1 - level))) & 0x1ff);
  }

  std::vector<Node> nodes_;
  std::size_t mapped_ = 0;
};

/// Set-associative translation cache keyed by (domain, page), where the
/// domain is the page table a device is attached to.
/// Set index = page mod set count; tag = full page number.
class IotlbCache {
 public:
  /// associativity 0 = fully associative.
  IotlbCache(std::uint32_t capacity, std::uint32_t associativity, ReplacementPolicy policy,
             std::uint64_t seed);

  std::optional<Pte> lookup(std::uint16_t domain, std::uint64_t page);

  /// Inserts or refreshes an entry; returns the evicted page, if any.
  std::optional<std::uint64_t> insert(std::uint16_t domain, std::uint64_t page, const Pte& pte);

  void invalidate_page(std::uint64_t page);
  void clear();

  std::uint32_t capacity() const { return capacity_; }
  std::uint32_t ways() const { return ways_; }
  std::uint32_t set_count() const { return static_cast<std::uint32_t>(sets_.size()); }
  std::size_t occupancy() const;
  std::uint64_t hits() const { return hits_; }
  std::uint64_t misses() const { return misses_; }

 private:
  struct Way {
    bool valid = false;
    std::uint16_t domain = 0;
    std::uint64_t page = 0;
    Pte pte;
    std::uint64_t last_use = 0;
  };
  std::vector<Way>& set_for(std::uint64_t page) { return sets_[page % sets_.size()]; }

  std::uint32_t capacity_;
  std::uint32_t ways_;
  ReplacementPolicy policy_;
  Rng rng_;
  std::vector<std::vector<Way>> sets_;
  std::uint64_t clock_ = 0;
  std::uint64_t hits_ = 0;
  std::uint64_t misses_ = 0;
};

enum class LogDestination : std::uint8_t { FaultLog, AccessLog };

/// What the IOMMU does with one intercepted access.
struct ActionSet {
  bool memory_effect = false;
  bool log_meta = false;
  bool log_data = false;
  LogDestination destination = LogDestination::FaultLog;
  std::uint16_t iuid = 0;
  bool blocked = false;

  bool logs() const { return log_meta || log_data; }
  bool operator==(const ActionSet&) const = default;
};

/// Total over every bit combination. A blocked get never logs data: there
/// is no returned data to replicate.
ActionSet classify(const Pte& pte, AccessKind kind);

/// Root/context-entry resolution, per-device page tables, and the IOTLB.
class RemappingUnit {
 public:
  /// Memory accesses charged for a context-cache miss (root + context entry).
  static constexpr std::uint32_t kContextMissAccesses = 2;

  RemappingUnit(std::uint32_t iotlb_capacity, std::uint32_t iotlb_assoc, ReplacementPolicy policy,
                std::uint64_t seed);

  std::size_t add_page_table();
  /// Binds a device to one page table (several devices may share one).
  void attach_device(DeviceId device, std::size_t table);
  bool has_device(DeviceId device) const { return context_.count(device.packed()) != 0; }
  PageTable& table(std::size_t idx) { return tables_.at(idx); }
  PageTable& table_of(DeviceId device);

  /// Maps a page in the device's table and invalidates cached copies.
  void map_page(DeviceId device, Addr dev_vaddr, const Pte& pte);

  enum class Outcome : std::uint8_t { Mapped, Unmapped, UnknownDevice };
  struct Translation {
    Outcome outcome = Outcome::Unmapped;
    Pte pte;
    Addr phys = 0;
    std::uint32_t mem_accesses = 0;
    bool iotlb_hit = false;
  };
  Translation walk(DeviceId device, Addr dev_addr);

  /// Disabling caches makes every walk a full table walk.
  void set_caching(bool enabled) { caching_ = enabled; }
  IotlbCache& iotlb() { return iotlb_; }
  const IotlbCache& iotlb() const { return iotlb_; }

 private:
  std::vector<PageTable> tables_;
  std::map<std::uint16_t, std::size_t> context_;
  std::set<std::uint16_t> context_cache_;
  IotlbCache iotlb_;
  bool caching_ = true;
};

}  // namespace aasim
