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

// PCIe-like transaction packets, tags, and a credit-limited FIFO link.

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "aasim/common.hpp"
#include "aasim/engine.hpp"

namespace aasim {

inline constexpr std::uint32_t kMaxTransactionBytes = 4096;

enum class TlpKind : std::uint8_t { PostedWrite, ReadRequest, ReadCompletion, AtomicRequest };
enum class AtomicOp : std::uint8_t { FetchAdd, Swap, CompareSwap };
enum class TlpStatus : std::uint8_t { Success, Blocked };

struct Tlp {
  TlpKind kind = TlpKind::PostedWrite;
  DeviceId requester;
  std::uint8_t tag = 0;
  Addr address = 0;  // completions: low 7 bits only
  std::uint32_t length = 0;
  Bytes payload;
  TlpStatus status = TlpStatus::Success;

  // Simulator-internal bookkeeping, not part of the wire format.
  std::uint64_t txn_id = 0;
  std::uint32_t seq_in_txn = 0;
  std::uint32_t txn_offset = 0;
  std::uint32_t txn_total_bytes = 0;
  AtomicOp atomic = AtomicOp::FetchAdd;
  std::uint64_t operand = 0;
  std::uint64_t compare = 0;

  bool last_in_txn() const { return txn_offset + length >= txn_total_bytes; }
};

/// Bytes one packet occupies on the wire.
inline std::uint64_t wire_bytes(const Tlp& t, std::uint32_t header_bytes) {
  return t.payload.size() + header_bytes;
}

/// Completions needed for a read of `length` bytes (a zero-length read
/// still gets one).
inline std::uint32_t completion_count(std::uint32_t length, std::uint32_t max_payload) {
  return length == 0 ? 1 : static_cast<std::uint32_t>(ceil_div(length, max_payload));
}

std::vector<Tlp> split_put(Addr dst_addr, std::span<const std::uint8_t> data, DeviceId requester,
                           std::uint8_t tag, std::uint64_t txn_id, std::uint32_t max_payload);

struct GetSplit {
  Tlp request;
  std::uint32_t completions;
};
GetSplit split_get(Addr src_addr, std::uint32_t length, DeviceId requester, std::uint8_t tag,
                   std::uint64_t txn_id, std::uint32_t max_payload);

/// Memory-side completions for a read request. `data` must hold the
/// requested bytes (ignored when blocked: one empty completion is produced).
std::vector<Tlp> make_completions(const Tlp& request, std::span<const std::uint8_t> data,
                                  std::uint32_t max_payload, TlpStatus status);

Tlp make_atomic(Addr addr, AtomicOp op, std::uint64_t operand, std::uint64_t compare, DeviceId requester,
                std::uint8_t tag, std::uint64_t txn_id);

/// Seeded merge of per-transaction packet streams: keeps the order inside
/// each stream, interleaves streams arbitrarily.
std::vector<Tlp> interleave(std::vector<std::vector<Tlp>> streams, Rng& rng);

struct CreditState {
  std::uint32_t capacity;
  std::uint32_t available;

  explicit CreditState(std::uint32_t cap) : capacity(cap), available(cap) {}
  bool take() {
    if (available == 0) return false;
    --available;
    return true;
  }
  void give() {
    if (available == capacity) throw SimError("credit returned twice");
    ++available;
  }
};

/// 8-bit tag space of one NIC. Tags are handed out round-robin and are
/// reusable once released; requesters wait FIFO when all are in use.
class TagPool {
 public:
  explicit TagPool(Engine& engine, std::uint32_t size = 256);

  /// Awaitable yielding a tag.
  Task<std::uint8_t> acquire();
  bool try_acquire(std::uint8_t& tag);
  void release(std::uint8_t tag);

  std::uint32_t in_use() const { return in_use_count_; }
  std::uint64_t waits() const { return waits_; }

 private:
  Engine* engine_;
  std::vector<bool> in_use_;
  std::uint32_t next_ = 0;
  std::uint32_t in_use_count_ = 0;
  std::uint64_t waits_ = 0;
  std::deque<Completion<std::uint8_t>> waiters_;
};

/// Point-to-point FIFO link: fixed latency plus serialization at a fixed
/// bandwidth. A packet leaves the queue only with a receiver credit; the
/// receiver returns the credit when it has finished with the packet.
class Link {
 public:
  using Receiver = std::function<void(Tlp)>;

  Link(Engine& engine, std::string name, Nanos latency_ns, double bytes_per_ns, std::uint32_t credits,
       std::uint32_t header_bytes);

  void set_receiver(Receiver r) { receiver_ = std::move(r); }
  /// Called on every transmitted packet (for accounting).
  void set_observer(std::function<void(const Tlp&, std::uint64_t wire)> o) { observer_ = std::move(o); }

  /// Queues a packet; never drops.
  void submit(Tlp tlp);
  void release_credit();

  const CreditState& credits() const { return credits_; }
  std::size_t queued() const { return queue_.size(); }
  std::uint64_t stalls() const { return stalls_; }
  std::uint64_t delivered() const { return delivered_; }
  const std::string& name() const { return name_; }
  Nanos serialization_ns(std::uint64_t bytes) const;

 private:
  void pump();

  Engine* engine_;
  std::string name_;
  Nanos latency_;
  double bw_;
  std::uint32_t header_;
  CreditState credits_;
  Nanos busy_until_ = 0;
  std::deque<Tlp> queue_;
  Receiver receiver_;
  std::function<void(const Tlp&, std::uint64_t)> observer_;
  std::uint64_t stalls_ = 0;
  std::uint64_t delivered_ = 0;
  bool stalled_ = false;
};

}  // namespace aasim
