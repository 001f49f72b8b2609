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

// The extended IOMMU: access logs with hole-based reassembly, the fault log,
// tag and flushing buffers, and the packet-processing pipeline.

#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "aasim/common.hpp"
#include "aasim/config.hpp"
#include "aasim/engine.hpp"
#include "aasim/paging.hpp"
#include "aasim/pcie.hpp"

namespace aasim {

/// Device-virtual base of every node's memory window.
inline constexpr Addr kWindowBase = 0x10'0000'0000;
/// Device-virtual flushing pages: one per IUID at kFlushBase + iuid * 4096.
inline constexpr Addr kFlushBase = 0xF000'0000'0000;

inline constexpr Addr flush_page_addr(std::uint16_t iuid) { return kFlushBase + Addr{iuid} * kPageSize; }

inline constexpr std::size_t kRecordHeaderBytes = 24;

/// Fixed 24-byte little-endian record header:
/// op_kind(1) device_id(2) iuid(2) dev_addr(8) length(2) flags(1) seq_no(8).
struct LogRecordHeader {
  static constexpr std::uint8_t kDataPresent = 0x1;
  static constexpr std::uint8_t kBlocked = 0x2;

  AccessKind op_kind = AccessKind::Put;
  std::uint16_t device_id = 0;
  std::uint16_t iuid = 0;
  Addr dev_addr = 0;
  std::uint16_t length = 0;
  std::uint8_t flags = 0;
  std::uint64_t seq_no = 0;

  bool data_present() const { return flags & kDataPresent; }
  bool blocked() const { return flags & kBlocked; }

  std::array<std::uint8_t, kRecordHeaderBytes> encode() const;
  static LogRecordHeader decode(std::span<const std::uint8_t> bytes);
  bool operator==(const LogRecordHeader&) const = default;
};

/// Bytes a record occupies in the ring.
inline std::uint64_t record_bytes(std::uint64_t length, bool data_present) {
  return kRecordHeaderBytes + (data_present ? round_up(length, 8) : 0);
}

/// A decoded record as handed to handlers.
struct LogRecord {
  LogRecordHeader header;
  Bytes payload;  // `length` bytes when data_present, else empty

  std::uint64_t word(std::size_t i = 0) const;
};

/// Per-IUID ring buffer. Offsets are monotone 64-bit logical positions;
/// the physical address is base + offset mod size.
///
/// tail <= visible_head <= committed_head <= head.
class AccessLog {
 public:
  AccessLog(std::uint16_t iuid, Addr base, std::uint64_t size);

  struct Reservation {
    std::uint64_t offset;
    std::uint64_t seq_no;
  };
  /// nullopt when free space is too small (WouldBlock).
  std::optional<Reservation> reserve(std::uint64_t bytes);
  /// Marks a reserved record as fully written.
  void complete(std::uint64_t offset);
  /// Advances committed_head over the completed prefix; returns the number
  /// of bytes that became committed.
  std::uint64_t commit_holes();
  /// Makes committed records visible to the consumer; returns how many
  /// records became visible.
  std::uint64_t publish() {
    visible_head_ = committed_head_;
    return std::exchange(unpublished_records_, 0);
  }
  void consume(std::uint64_t bytes);

  Addr phys(std::uint64_t offset) const { return base_ + (offset & (size_ - 1)); }
  void write(PhysMemory& mem, std::uint64_t offset, std::span<const std::uint8_t> data) const;
  void read(const PhysMemory& mem, std::uint64_t offset, std::span<std::uint8_t> out) const;
  /// Decodes the record starting at `offset`.
  LogRecord read_record(const PhysMemory& mem, std::uint64_t offset) const;

  std::uint16_t iuid() const { return iuid_; }
  Addr base() const { return base_; }
  std::uint64_t size() const { return size_; }
  std::uint64_t head() const { return head_; }
  std::uint64_t committed_head() const { return committed_head_; }
  std::uint64_t visible_head() const { return visible_head_; }
  std::uint64_t tail() const { return tail_; }
  std::uint64_t free_space() const { return size_ - (head_ - tail_); }
  std::uint64_t next_seq() const { return next_seq_; }
  std::uint64_t committed_records() const { return committed_records_; }
  std::size_t pending() const { return pending_.size(); }

 private:
  struct Pending {
    std::uint64_t bytes;
    bool complete;
  };
  std::uint16_t iuid_;
  Addr base_;
  std::uint64_t size_;
  std::uint64_t head_ = 0;
  std::uint64_t committed_head_ = 0;
  std::uint64_t visible_head_ = 0;
  std::uint64_t tail_ = 0;
  std::uint64_t next_seq_ = 0;
  std::uint64_t committed_records_ = 0;
  std::uint64_t unpublished_records_ = 0;
  std::map<std::uint64_t, Pending> pending_;
};

/// System-wide metadata-only log; drops entries when full.
class FaultLog {
 public:
  explicit FaultLog(std::uint32_t capacity) : capacity_(capacity) {}
  bool push(const LogRecordHeader& h);
  std::optional<LogRecordHeader> pop();
  std::size_t size() const { return entries_.size(); }
  std::uint32_t capacity() const { return capacity_; }
  std::uint64_t recorded() const { return recorded_; }
  std::uint64_t dropped() const { return dropped_; }

 private:
  std::uint32_t capacity_;
  std::deque<LogRecordHeader> entries_;
  std::uint64_t recorded_ = 0;
  std::uint64_t dropped_ = 0;
};

enum class TagKind : std::uint8_t { Put, GetReplica };

struct TagEntry {
  std::uint16_t iuid = 0;
  std::uint64_t record_offset = 0;
  std::uint32_t bytes_remaining = 0;
  TagKind kind = TagKind::Put;
  Addr dev_addr = 0;
  std::uint32_t length = 0;
  bool log_data = false;
};

/// Transactions with a reserved log region, keyed by (requester, tag).
class TagBuffer {
 public:
  static std::uint32_t key(DeviceId requester, std::uint8_t tag) {
    return std::uint32_t{requester.packed()} << 8 | tag;
  }
  TagEntry* find(DeviceId requester, std::uint8_t tag);
  void insert(DeviceId requester, std::uint8_t tag, const TagEntry& e);
  void erase(DeviceId requester, std::uint8_t tag);
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::uint32_t, TagEntry> entries_;
};

struct FlushRequest {
  DeviceId requester;
  std::uint8_t tag = 0;
  std::uint64_t txn_id = 0;
  std::uint64_t log_mark = 0;  // log head at interception
  std::uint64_t seq_mark = 0;  // first seq_no reserved after interception
};

/// One flushing-buffer entry. The active request is the front of `queue`;
/// later flushes to the same page wait behind it.
struct FlushEntry {
  Addr address = 0;
  std::uint16_t iuid = 0;
  bool active = false;
  DeviceId requester;
  std::uint8_t tag = 0;
  std::uint64_t log_mark = 0;
  std::deque<FlushRequest> queue;
};

/// Wake-up time of the log consumer after new records become visible.
Nanos wakeup_time(NotificationMode mode, Nanos now, Nanos interrupt_ns, Nanos scratchpad_ns,
                  Nanos poll_interval_ns);

/// Memory accesses plus fixed extra time charged for one pipeline item.
struct Work {
  std::uint32_t accesses = 0;  // reads: the pipeline waits for them
  std::uint32_t posted = 0;    // writes: occupy the channel, no wait
  Nanos extra_ns = 0;
};

class ExtendedIommu {
 public:
  struct Hooks {
    /// A packet taken from the ingress link has been fully processed.
    std::function<void()> release_credit;
    /// Outbound packet towards the NIC (completions).
    std::function<void(Tlp)> emit;
    /// `records` new records became visible in log `iuid`.
    std::function<void(std::uint16_t iuid, std::uint64_t records)> on_commit;
    /// A flush get is waiting on log `iuid`.
    std::function<void(std::uint16_t iuid)> on_flush_pending;
    /// The pipeline stalled on a full log.
    std::function<void(std::uint16_t iuid)> on_blocked;
    /// The last packet of a posted write transaction was processed.
    std::function<void(const Tlp&)> on_put_done;
    /// Observer of every record reservation (tests).
    std::function<void(std::uint16_t iuid, const AccessLog::Reservation&)> on_reserve;
    /// Observer of every intercepted flush get (tests).
    std::function<void(std::uint16_t iuid, const FlushRequest&)> on_flush_intercept;
  };

  ExtendedIommu(Engine& engine, PhysMemory& memory, MemoryChannel& channel, const SimConfig& cfg,
                std::uint64_t seed);

  Hooks& hooks() { return hooks_; }
  RemappingUnit& remapping() { return remap_; }
  bool enabled() const { return enabled_; }

  /// Creates the access log and flushing-buffer entry for an IUID.
  AccessLog& register_log(std::uint16_t iuid, Addr base_phys, std::uint64_t size);
  bool has_log(std::uint16_t iuid) const { return logs_.count(iuid) != 0; }
  AccessLog& log(std::uint16_t iuid);
  const std::map<std::uint16_t, AccessLog>& logs() const { return logs_; }
  FaultLog& fault_log() { return fault_log_; }
  TagBuffer& tag_buffer() { return tags_; }
  const FlushEntry* flush_entry(std::uint16_t iuid) const;

  // Synchronous interception. Each returns the work done, or nullopt when
  // a log reservation would block (no state was changed then).
  std::optional<Work> intercept_write(const Tlp& tlp);
  std::optional<Work> intercept_read_request(const Tlp& tlp);
  Work intercept_read_completion(const Tlp& tlp);
  Work intercept_atomic(const Tlp& tlp);
  bool is_flush_get(const Tlp& tlp) const;
  void handle_flush_get(const Tlp& tlp);

  /// Runs every memory-side completion through intercept_read_completion.
  Work drain_memory_side();
  /// Outbound packets produced so far (completions), in order.
  std::vector<Tlp> take_outbox();
  /// Publishes committed records of touched logs and fires on_commit.
  void publish();

  /// The consumer advanced the tail of log `iuid`.
  void tail_advanced(std::uint16_t iuid, std::uint64_t bytes);

  /// Pipeline entry for packets arriving from the ingress link.
  void accept(Tlp tlp);
  bool stalled() const { return stalled_; }
  std::size_t queued() const { return inbox_.size() + memory_side_.size(); }
  bool idle() const { return !busy_ && inbox_.empty() && memory_side_.empty(); }

  std::uint64_t records_logged() const { return records_logged_; }
  std::uint64_t blocked_accesses() const { return blocked_accesses_; }
  std::uint64_t active_flushes() const { return active_flushes_; }
  std::uint64_t backpressure_stalls() const { return stalls_; }
  std::uint64_t items_processed() const { return items_; }

 private:
  struct Translated {
    bool ok = false;
    Pte pte;
    Addr phys = 0;
    std::uint32_t accesses = 0;
  };
  Translated translate(const Tlp& tlp);
  void fault_entry(const Tlp& tlp, AccessKind kind, bool blocked, Work& w);
  void finish_record(std::uint16_t iuid, std::uint64_t offset, Work& w);
  std::optional<AccessLog::Reservation> reserve(AccessLog& log, std::uint64_t bytes);
  void try_complete_flushes(std::uint16_t iuid, bool immediate);
  void send(Tlp t, bool immediate);

  std::optional<Work> process(const Tlp& tlp);
  void pump();
  void finish(bool from_link);

  Engine* engine_;
  PhysMemory* memory_;
  MemoryChannel* channel_;
  bool enabled_;
  NotificationMode mode_;
  Nanos proc_ns_;
  Nanos scratchpad_ns_;
  std::uint32_t max_payload_;

  RemappingUnit remap_;
  std::map<std::uint16_t, AccessLog> logs_;
  FaultLog fault_log_;
  TagBuffer tags_;
  std::map<std::uint16_t, FlushEntry> flush_;
  Hooks hooks_;

  std::deque<Tlp> inbox_;
  std::deque<Tlp> memory_side_;
  std::vector<Tlp> outbox_;
  std::vector<Tlp> done_puts_;
  std::set<std::uint16_t> dirty_;
  bool busy_ = false;
  bool stalled_ = false;
  std::uint16_t block_iuid_ = 0;
  std::uint64_t block_bytes_ = 0;

  std::uint64_t records_logged_ = 0;
  std::uint64_t blocked_accesses_ = 0;
  std::uint64_t active_flushes_ = 0;
  std::uint64_t stalls_ = 0;
  std::uint64_t items_ = 0;
};

}  // namespace aasim
