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

#include "aasim/paging.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>

namespace aasim {

// ---- PhysMemory -----------------------------------------------------------

PhysMemory::PhysMemory(std::uint32_t node_id, std::uint64_t size_bytes) : node_id_(node_id), size_(size_bytes) {}

void PhysMemory::check(Addr addr, std::uint64_t len) const {
  if (addr > size_ || len > size_ - addr) {
    std::ostringstream os;
    os << "node " << node_id_ << ": physical access [" << addr << ", +" << len << ") out of bounds (size "
       << size_ << ")";
    throw SimError(os.str());
  }
}

void PhysMemory::read(Addr addr, std::span<std::uint8_t> out) const {
  check(addr, out.size());
  std::size_t done = 0;
  while (done < out.size()) {
    const Addr a = addr + done;
    const std::size_t off = page_offset(a);
    const std::size_t n = std::min<std::size_t>(out.size() - done, kPageSize - off);
    auto it = pages_.find(page_number(a));
    if (it == pages_.end()) {
      std::memset(out.data() + done, 0, n);
    } else {
      std::memcpy(out.data() + done, it->second->data() + off, n);
    }
    done += n;
  }
}

void PhysMemory::write(Addr addr, std::span<const std::uint8_t> in) {
  check(addr, in.size());
  std::size_t done = 0;
  while (done < in.size()) {
    const Addr a = addr + done;
    const std::size_t off = page_offset(a);
    const std::size_t n = std::min<std::size_t>(in.size() - done, kPageSize - off);
    auto& page = pages_[page_number(a)];
    if (!page) page = std::make_unique<Page>();
    std::memcpy(page->data() + off, in.data() + done, n);
    done += n;
  }
}

std::uint64_t PhysMemory::load_u64(Addr addr) const {
  std::array<std::uint8_t, 8> b{};
  read(addr, b);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = v << 8 | b[i];
  return v;
}

void PhysMemory::store_u64(Addr addr, std::uint64_t v) {
  std::array<std::uint8_t, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
  write(addr, b);
}

// ---- Pte ------------------------------------------------------------------

namespace {
constexpr unsigned kBitR = 0;
constexpr unsigned kBitW = 1;
constexpr unsigned kBitWl = 7;
constexpr unsigned kBitWld = 8;
constexpr unsigned kBitRl = 9;
constexpr unsigned kBitRld = 10;
constexpr unsigned kBitE = 11;
constexpr unsigned kFrameShift = 12;
constexpr unsigned kIuidShift = 52;
constexpr unsigned kBitValid = 62;
}  // namespace

std::uint64_t Pte::encode() const {
  if (iuid > kMaxIuid) throw SimError("iuid out of range: " + std::to_string(iuid));
  if (frame > kMaxFrame) throw SimError("frame out of range");
  std::uint64_t v = 1ull << kBitValid;
  v |= std::uint64_t{r} << kBitR;
  v |= std::uint64_t{w} << kBitW;
  v |= std::uint64_t{wl} << kBitWl;
  v |= std::uint64_t{wld} << kBitWld;
  v |= std::uint64_t{rl} << kBitRl;
  v |= std::uint64_t{rld} << kBitRld;
  v |= std::uint64_t{e} << kBitE;
  v |= frame << kFrameShift;
  v |= std::uint64_t{iuid} << kIuidShift;
  return v;
}

Pte Pte::decode(std::uint64_t raw) {
  Pte p;
  p.r = (raw >> kBitR) & 1;
  p.w = (raw >> kBitW) & 1;
  p.wl = (raw >> kBitWl) & 1;
  p.wld = (raw >> kBitWld) & 1;
  p.rl = (raw >> kBitRl) & 1;
  p.rld = (raw >> kBitRld) & 1;
  p.e = (raw >> kBitE) & 1;
  p.frame = (raw >> kFrameShift) & kMaxFrame;
  p.iuid = static_cast<std::uint16_t>((raw >> kIuidShift) & 0x3ff);
  return p;
}

// ---- PageTable ------------------------------------------------------------

namespace {
constexpr std::uint64_t kPresent = 1ull << 63;
constexpr std::uint64_t kValidLeaf = 1ull << kBitValid;
}  // namespace

PageTable::PageTable() { nodes_.emplace_back(); }

void PageTable::map(Addr dev_vaddr, const Pte& pte) {
  if (!page_aligned(dev_vaddr)) throw AlignmentError("map_page: address not page-aligned");
  if (dev_vaddr >= kAddressLimit) throw SimError("map_page: address beyond 48 bits");
  std::size_t node = 0;
  for (unsigned level = 0; level + 1 < kLevels; ++level) {
    const unsigned i = index(dev_vaddr, level);
    std::uint64_t e = nodes_[node].entries[i];
    if ((e & kPresent) == 0) {
      nodes_.emplace_back();
      e = kPresent | (nodes_.size() - 1);
      nodes_[node].entries[i] = e;
    }
    node = static_cast<std::size_t>(e & ~kPresent);
  }
  auto& leaf = nodes_[node].entries[index(dev_vaddr, kLevels - 1)];
  if ((leaf & kValidLeaf) == 0) ++mapped_;
  leaf = pte.normalized().encode();
}

bool PageTable::unmap(Addr dev_vaddr) {
  std::size_t node = 0;
  for (unsigned level = 0; level + 1 < kLevels; ++level) {
    const std::uint64_t e = nodes_[node].entries[index(dev_vaddr, level)];
    if ((e & kPresent) == 0) return false;
    node = static_cast<std::size_t>(e & ~kPresent);
  }
  auto& leaf = nodes_[node].entries[index(dev_vaddr, kLevels - 1)];
  if ((leaf & kValidLeaf) == 0) return false;
  leaf = 0;
  --mapped_;
  return true;
}

PageTable::WalkResult PageTable::walk(Addr dev_addr) const {
  if (dev_addr >= kAddressLimit) return {std::nullopt, 0};
  std::size_t node = 0;
  for (unsigned level = 0; level + 1 < kLevels; ++level) {
    const std::uint64_t e = nodes_[node].entries[index(dev_addr, level)];
    if ((e & kPresent) == 0) return {std::nullopt, level + 1};
    node = static_cast<std::size_t>(e & ~kPresent);
  }
  const std::uint64_t leaf = nodes_[node].entries[index(dev_addr, kLevels - 1)];
  if ((leaf & kValidLeaf) == 0) return {std::nullopt, kLevels};
  return {Pte::decode(leaf), kLevels};
}

// ---- IotlbCache -----------------------------------------------------------

IotlbCache::IotlbCache(std::uint32_t capacity, std::uint32_t associativity, ReplacementPolicy policy,
                       std::uint64_t seed)
    : capacity_(capacity), ways_(associativity == 0 ? capacity : associativity), policy_(policy), rng_(seed) {
  if (capacity_ == 0 || ways_ == 0 || capacity_ % ways_ != 0) {
    throw ConfigError("iotlb capacity must be a positive multiple of the associativity");
  }
  sets_.assign(capacity_ / ways_, std::vector<Way>(ways_));
}

std::optional<Pte> IotlbCache::lookup(std::uint16_t domain, std::uint64_t page) {
  for (auto& way : set_for(page)) {
    if (way.valid && way.page == page && way.domain == domain) {
      way.last_use = ++clock_;
      ++hits_;
      return way.pte;
    }
  }
  ++misses_;
  return std::nullopt;
}

std::optional<std::uint64_t> IotlbCache::insert(std::uint16_t domain, std::uint64_t page, const Pte& pte) {
  auto& set = set_for(page);
  for (auto& way : set) {
    if (way.valid && way.page == page && way.domain == domain) {
      way.pte = pte;
      way.last_use = ++clock_;
      return std::nullopt;
    }
  }
  Way* victim = nullptr;
  for (auto& way : set) {
    if (!way.valid) {
      victim = &way;
      break;
    }
  }
  std::optional<std::uint64_t> evicted;
  if (victim == nullptr) {
    if (policy_ == ReplacementPolicy::Lru) {
      victim = &*std::min_element(set.begin(), set.end(),
                                  [](const Way& a, const Way& b) { return a.last_use < b.last_use; });
    } else {
      victim = &set[rng_.below(set.size())];
    }
    evicted = victim->page;
  }
  *victim = Way{true, domain, page, pte, ++clock_};
  return evicted;
}

void IotlbCache::invalidate_page(std::uint64_t page) {
  for (auto& way : set_for(page)) {
    if (way.valid && way.page == page) way.valid = false;
  }
}

void IotlbCache::clear() {
  for (auto& set : sets_) {
    for (auto& way : set) way.valid = false;
  }
}

std::size_t IotlbCache::occupancy() const {
  std::size_t n = 0;
  for (const auto& set : sets_) {
    for (const auto& way : set) n += way.valid ? 1 : 0;
  }
  return n;
}

// ---- classify ---------------------------------------------------------------

ActionSet classify(const Pte& raw, AccessKind kind) {
  const Pte pte = raw.normalized();
  ActionSet a;
  if (kind == AccessKind::Put) {
    a.memory_effect = pte.w;
    a.log_meta = pte.wl;
    a.log_data = pte.wld;
  } else {
    a.memory_effect = pte.r;
    a.log_meta = pte.rl;
    a.log_data = pte.rld && pte.r;
  }
  a.blocked = !a.memory_effect;
  a.destination = pte.e ? LogDestination::AccessLog : LogDestination::FaultLog;
  a.iuid = pte.iuid;
  return a;
}

// ---- RemappingUnit --------------------------------------------------------

RemappingUnit::RemappingUnit(std::uint32_t iotlb_capacity, std::uint32_t iotlb_assoc, ReplacementPolicy policy,
                             std::uint64_t seed)
    : iotlb_(iotlb_capacity, iotlb_assoc, policy, seed) {}

std::size_t RemappingUnit::add_page_table() {
  tables_.emplace_back();
  return tables_.size() - 1;
}

void RemappingUnit::attach_device(DeviceId device, std::size_t table) {
  if (table >= tables_.size()) throw SimError("attach_device: no such page table");
  context_[device.packed()] = table;
  context_cache_.erase(device.packed());
}

PageTable& RemappingUnit::table_of(DeviceId device) {
  auto it = context_.find(device.packed());
  if (it == context_.end()) throw SimError("device not registered with the IOMMU");
  return tables_[it->second];
}

void RemappingUnit::map_page(DeviceId device, Addr dev_vaddr, const Pte& pte) {
  table_of(device).map(dev_vaddr, pte);
  iotlb_.invalidate_page(page_number(dev_vaddr));
}

RemappingUnit::Translation RemappingUnit::walk(DeviceId device, Addr dev_addr) {
  Translation t;
  auto it = context_.find(device.packed());
  if (it == context_.end()) {
    t.outcome = Outcome::UnknownDevice;
    return t;
  }
  const std::uint64_t page = page_number(dev_addr);
  if (caching_) {
    if (auto hit = iotlb_.lookup(static_cast<std::uint16_t>(it->second), page)) {
      t.outcome = Outcome::Mapped;
      t.pte = *hit;
      t.phys = (hit->frame << kPageShift) | page_offset(dev_addr);
      t.iotlb_hit = true;
      return t;
    }
  }
  if (!caching_ || context_cache_.insert(device.packed()).second) t.mem_accesses += kContextMissAccesses;
  const auto res = tables_[it->second].walk(dev_addr);
  t.mem_accesses += res.levels;
  if (!res.pte) {
    t.outcome = Outcome::Unmapped;
    return t;
  }
  t.outcome = Outcome::Mapped;
  t.pte = *res.pte;
  t.phys = (res.pte->frame << kPageShift) | page_offset(dev_addr);
  if (caching_) iotlb_.insert(static_cast<std::uint16_t>(it->second), page, *res.pte);
  return t;
}

}  // namespace aasim
