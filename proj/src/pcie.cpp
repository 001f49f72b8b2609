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

#include "aasim/pcie.hpp"

#include <cmath>

namespace aasim {

std::vector<Tlp> split_put(Addr dst_addr, std::span<const std::uint8_t> data, DeviceId requester,
                           std::uint8_t tag, std::uint64_t txn_id, std::uint32_t max_payload) {
  if (data.size() > kMaxTransactionBytes) {
    throw OversizeError("put of " + std::to_string(data.size()) + " bytes exceeds the 4096-byte transaction cap");
  }
  if (data.empty()) throw SimError("empty put");
  const auto total = static_cast<std::uint32_t>(data.size());
  std::vector<Tlp> out;
  out.reserve(ceil_div(total, max_payload));
  for (std::uint32_t off = 0, seq = 0; off < total; off += max_payload, ++seq) {
    const std::uint32_t len = std::min(max_payload, total - off);
    Tlp t;
    t.kind = TlpKind::PostedWrite;
    t.requester = requester;
    t.tag = tag;
    t.address = dst_addr + off;
    t.length = len;
    t.payload.assign(data.begin() + off, data.begin() + off + len);
    t.txn_id = txn_id;
    t.seq_in_txn = seq;
    t.txn_offset = off;
    t.txn_total_bytes = total;
    out.push_back(std::move(t));
  }
  return out;
}

GetSplit split_get(Addr src_addr, std::uint32_t length, DeviceId requester, std::uint8_t tag,
                   std::uint64_t txn_id, std::uint32_t max_payload) {
  if (length > kMaxTransactionBytes) {
    throw OversizeError("get of " + std::to_string(length) + " bytes exceeds the 4096-byte transaction cap");
  }
  Tlp t;
  t.kind = TlpKind::ReadRequest;
  t.requester = requester;
  t.tag = tag;
  t.address = src_addr;
  t.length = length;
  t.txn_id = txn_id;
  t.txn_total_bytes = length;
  return {std::move(t), completion_count(length, max_payload)};
}

std::vector<Tlp> make_completions(const Tlp& request, std::span<const std::uint8_t> data,
                                  std::uint32_t max_payload, TlpStatus status) {
  auto base = [&](std::uint32_t off, std::uint32_t len, std::uint32_t seq, std::uint32_t total) {
    Tlp c;
    c.kind = TlpKind::ReadCompletion;
    c.requester = request.requester;
    c.tag = request.tag;
    c.address = (request.address + off) & 0x7f;
    c.length = len;
    c.status = status;
    c.txn_id = request.txn_id;
    c.seq_in_txn = seq;
    c.txn_offset = off;
    c.txn_total_bytes = total;
    return c;
  };
  std::vector<Tlp> out;
  if (status == TlpStatus::Blocked || request.length == 0) {
    out.push_back(base(0, 0, 0, 0));
    return out;
  }
  if (data.size() < request.length) throw SimError("make_completions: short data");
  for (std::uint32_t off = 0, seq = 0; off < request.length; off += max_payload, ++seq) {
    const std::uint32_t len = std::min(max_payload, request.length - off);
    Tlp c = base(off, len, seq, request.length);
    c.payload.assign(data.begin() + off, data.begin() + off + len);
    out.push_back(std::move(c));
  }
  return out;
}

Tlp make_atomic(Addr addr, AtomicOp op, std::uint64_t operand, std::uint64_t compare, DeviceId requester,
                std::uint8_t tag, std::uint64_t txn_id) {
  Tlp t;
  t.kind = TlpKind::AtomicRequest;
  t.requester = requester;
  t.tag = tag;
  t.address = addr;
  t.length = 8;
  t.atomic = op;
  t.operand = operand;
  t.compare = compare;
  // Operand words travel as payload: one for fetch-add/swap, two for CAS.
  t.payload.assign(op == AtomicOp::CompareSwap ? 16 : 8, 0);
  t.txn_id = txn_id;
  t.txn_total_bytes = 8;
  return t;
}

std::vector<Tlp> interleave(std::vector<std::vector<Tlp>> streams, Rng& rng) {
  std::vector<std::size_t> pos(streams.size(), 0);
  std::vector<std::size_t> live;
  std::size_t total = 0;
  for (std::size_t i = 0; i < streams.size(); ++i) {
    if (!streams[i].empty()) live.push_back(i);
    total += streams[i].size();
  }
  std::vector<Tlp> out;
  out.reserve(total);
  while (!live.empty()) {
    const std::size_t k = rng.below(live.size());
    const std::size_t s = live[k];
    out.push_back(std::move(streams[s][pos[s]++]));
    if (pos[s] == streams[s].size()) live.erase(live.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return out;
}

// ---- TagPool --------------------------------------------------------------

TagPool::TagPool(Engine& engine, std::uint32_t size) : engine_(&engine), in_use_(size, false) {
  if (size == 0 || size > 256) throw ConfigError("tag pool size must be in [1, 256]");
}

bool TagPool::try_acquire(std::uint8_t& tag) {
  if (in_use_count_ == in_use_.size()) return false;
  const auto n = static_cast<std::uint32_t>(in_use_.size());
  while (in_use_[next_]) next_ = (next_ + 1) % n;
  tag = static_cast<std::uint8_t>(next_);
  in_use_[next_] = true;
  ++in_use_count_;
  next_ = (next_ + 1) % n;
  return true;
}

Task<std::uint8_t> TagPool::acquire() {
  std::uint8_t tag = 0;
  if (waiters_.empty() && try_acquire(tag)) co_return tag;
  ++waits_;
  Completion<std::uint8_t> slot(*engine_);
  waiters_.push_back(slot);
  co_return co_await slot;
}

void TagPool::release(std::uint8_t tag) {
  if (tag >= in_use_.size() || !in_use_[tag]) throw SimError("release of a free tag");
  if (!waiters_.empty()) {
    // Hand the tag straight to the oldest waiter.
    auto w = waiters_.front();
    waiters_.pop_front();
    w.set(tag);
    return;
  }
  in_use_[tag] = false;
  --in_use_count_;
}

// ---- Link -----------------------------------------------------------------

Link::Link(Engine& engine, std::string name, Nanos latency_ns, double bytes_per_ns, std::uint32_t credits,
           std::uint32_t header_bytes)
    : engine_(&engine),
      name_(std::move(name)),
      latency_(latency_ns),
      bw_(bytes_per_ns),
      header_(header_bytes),
      credits_(credits) {}

Nanos Link::serialization_ns(std::uint64_t bytes) const {
  return static_cast<Nanos>(std::ceil(static_cast<double>(bytes) / bw_));
}

void Link::submit(Tlp tlp) {
  queue_.push_back(std::move(tlp));
  pump();
}

void Link::release_credit() {
  credits_.give();
  pump();
}

void Link::pump() {
  while (!queue_.empty()) {
    if (!credits_.take()) {
      if (!stalled_) {
        stalled_ = true;
        ++stalls_;
      }
      return;
    }
    stalled_ = false;
    Tlp t = std::move(queue_.front());
    queue_.pop_front();
    const std::uint64_t wire = wire_bytes(t, header_);
    if (observer_) observer_(t, wire);
    const Nanos start = std::max(engine_->now(), busy_until_);
    busy_until_ = start + serialization_ns(wire);
    ++delivered_;
    engine_->at(busy_until_ + latency_, [this, t = std::move(t)]() mutable { receiver_(std::move(t)); });
  }
}

}  // namespace aasim
