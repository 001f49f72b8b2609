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

#include "aasim/iommu.hpp"

#include <sstream>

namespace aasim {

namespace {

template <typename T>
void put_le(std::uint8_t* p, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) p[i] = static_cast<std::uint8_t>(static_cast<std::uint64_t>(v) >> (8 * i));
}

template <typename T>
T get_le(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (std::size_t i = sizeof(T); i > 0; --i) v = v << 8 | p[i - 1];
  return static_cast<T>(v);
}

}  // namespace

// ---- records --------------------------------------------------------------

std::array<std::uint8_t, kRecordHeaderBytes> LogRecordHeader::encode() const {
  std::array<std::uint8_t, kRecordHeaderBytes> b{};
  b[0] = static_cast<std::uint8_t>(op_kind);
  put_le<std::uint16_t>(&b[1], device_id);
  put_le<std::uint16_t>(&b[3], iuid);
  put_le<std::uint64_t>(&b[5], dev_addr);
  put_le<std::uint16_t>(&b[13], length);
  b[15] = flags;
  put_le<std::uint64_t>(&b[16], seq_no);
  return b;
}

LogRecordHeader LogRecordHeader::decode(std::span<const std::uint8_t> b) {
  if (b.size() < kRecordHeaderBytes) throw SimError("short record header");
  LogRecordHeader h;
  h.op_kind = static_cast<AccessKind>(b[0]);
  h.device_id = get_le<std::uint16_t>(&b[1]);
  h.iuid = get_le<std::uint16_t>(&b[3]);
  h.dev_addr = get_le<std::uint64_t>(&b[5]);
  h.length = get_le<std::uint16_t>(&b[13]);
  h.flags = b[15];
  h.seq_no = get_le<std::uint64_t>(&b[16]);
  return h;
}

std::uint64_t LogRecord::word(std::size_t i) const {
  if (payload.size() < 8 * (i + 1)) throw SimError("record payload too short for word " + std::to_string(i));
  return get_le<std::uint64_t>(payload.data() + 8 * i);
}

// ---- AccessLog ------------------------------------------------------------

AccessLog::AccessLog(std::uint16_t iuid, Addr base, std::uint64_t size) : iuid_(iuid), base_(base), size_(size) {
  if (size == 0 || (size & (size - 1)) != 0) throw ConfigError("access log size must be a power of two");
  if (!page_aligned(base)) throw AlignmentError("access log base must be page-aligned");
}

std::optional<AccessLog::Reservation> AccessLog::reserve(std::uint64_t bytes) {
  if (bytes > size_) throw SimError("record larger than the access log");
  if (free_space() < bytes) return std::nullopt;
  Reservation r{head_, next_seq_++};
  pending_.emplace(head_, Pending{bytes, false});
  head_ += bytes;
  return r;
}

void AccessLog::complete(std::uint64_t offset) {
  auto it = pending_.find(offset);
  if (it == pending_.end() || it->second.complete) throw SimError("complete() on an unknown log region");
  it->second.complete = true;
}

std::uint64_t AccessLog::commit_holes() {
  const std::uint64_t before = committed_head_;
  while (!pending_.empty()) {
    auto it = pending_.begin();
    if (it->first != committed_head_ || !it->second.complete) break;
    committed_head_ += it->second.bytes;
    ++committed_records_;
    ++unpublished_records_;
    pending_.erase(it);
  }
  return committed_head_ - before;
}

void AccessLog::consume(std::uint64_t bytes) {
  if (tail_ + bytes > visible_head_) throw SimError("consumer overtook the visible head");
  tail_ += bytes;
}

void AccessLog::write(PhysMemory& mem, std::uint64_t offset, std::span<const std::uint8_t> data) const {
  std::size_t done = 0;
  while (done < data.size()) {
    const std::uint64_t ring = (offset + done) & (size_ - 1);
    const std::size_t n = std::min<std::size_t>(data.size() - done, size_ - ring);
    mem.write(base_ + ring, data.subspan(done, n));
    done += n;
  }
}

void AccessLog::read(const PhysMemory& mem, std::uint64_t offset, std::span<std::uint8_t> out) const {
  std::size_t done = 0;
  while (done < out.size()) {
    const std::uint64_t ring = (offset + done) & (size_ - 1);
    const std::size_t n = std::min<std::size_t>(out.size() - done, size_ - ring);
    mem.read(base_ + ring, out.subspan(done, n));
    done += n;
  }
}

LogRecord AccessLog::read_record(const PhysMemory& mem, std::uint64_t offset) const {
  std::array<std::uint8_t, kRecordHeaderBytes> hb{};
  read(mem, offset, hb);
  LogRecord r;
  r.header = LogRecordHeader::decode(hb);
  if (r.header.data_present()) {
    r.payload.resize(r.header.length);
    read(mem, offset + kRecordHeaderBytes, r.payload);
  }
  return r;
}

// ---- FaultLog / TagBuffer -------------------------------------------------

bool FaultLog::push(const LogRecordHeader& h) {
  if (entries_.size() >= capacity_) {
    ++dropped_;
    return false;
  }
  entries_.push_back(h);
  ++recorded_;
  return true;
}

std::optional<LogRecordHeader> FaultLog::pop() {
  if (entries_.empty()) return std::nullopt;
  auto h = entries_.front();
  entries_.pop_front();
  return h;
}

TagEntry* TagBuffer::find(DeviceId requester, std::uint8_t tag) {
  auto it = entries_.find(key(requester, tag));
  return it == entries_.end() ? nullptr : &it->second;
}

void TagBuffer::insert(DeviceId requester, std::uint8_t tag, const TagEntry& e) {
  if (!entries_.emplace(key(requester, tag), e).second) throw SimError("tag buffer: duplicate (requester, tag)");
}

void TagBuffer::erase(DeviceId requester, std::uint8_t tag) { entries_.erase(key(requester, tag)); }

Nanos wakeup_time(NotificationMode mode, Nanos now, Nanos interrupt_ns, Nanos scratchpad_ns,
                  Nanos poll_interval_ns) {
  switch (mode) {
    case NotificationMode::Interrupt: return now + interrupt_ns;
    case NotificationMode::Scratchpad: return now + scratchpad_ns;
    case NotificationMode::Poll: return (now / poll_interval_ns + 1) * poll_interval_ns;
  }
  return now;
}

// ---- ExtendedIommu --------------------------------------------------------

ExtendedIommu::ExtendedIommu(Engine& engine, PhysMemory& memory, MemoryChannel& channel, const SimConfig& cfg,
                             std::uint64_t seed)
    : engine_(&engine),
      memory_(&memory),
      channel_(&channel),
      enabled_(cfg.iommu_enabled),
      mode_(cfg.notification),
      proc_ns_(cfg.iommu_enabled ? cfg.iommu_proc_ns : 0),
      scratchpad_ns_(cfg.scratchpad_ns),
      max_payload_(cfg.max_payload),
      remap_(cfg.iotlb_size, cfg.iotlb_assoc, cfg.iotlb_policy, seed),
      fault_log_(cfg.fault_log_entries) {}

AccessLog& ExtendedIommu::register_log(std::uint16_t iuid, Addr base_phys, std::uint64_t size) {
  if (iuid > Pte::kMaxIuid) throw SimError("iuid out of range");
  if (has_log(iuid)) throw SimError("access log already registered for iuid " + std::to_string(iuid));
  auto [it, ok] = logs_.emplace(iuid, AccessLog(iuid, base_phys, size));
  FlushEntry fe;
  fe.address = flush_page_addr(iuid);
  fe.iuid = iuid;
  flush_.emplace(iuid, fe);
  return it->second;
}

AccessLog& ExtendedIommu::log(std::uint16_t iuid) {
  auto it = logs_.find(iuid);
  if (it == logs_.end()) throw SimError("no access log for iuid " + std::to_string(iuid));
  return it->second;
}

const FlushEntry* ExtendedIommu::flush_entry(std::uint16_t iuid) const {
  auto it = flush_.find(iuid);
  return it == flush_.end() ? nullptr : &it->second;
}

ExtendedIommu::Translated ExtendedIommu::translate(const Tlp& tlp) {
  Translated t;
  if (!enabled_) {
    // No remapping: device addresses map linearly onto host memory.
    if (tlp.address < kWindowBase) return t;
    t.ok = true;
    t.pte.r = t.pte.w = true;
    t.phys = tlp.address - kWindowBase;
    return t;
  }
  const auto tr = remap_.walk(tlp.requester, tlp.address);
  t.accesses = tr.mem_accesses;
  if (tr.outcome != RemappingUnit::Outcome::Mapped) return t;
  t.ok = true;
  t.pte = tr.pte;
  t.phys = tr.phys;
  return t;
}

void ExtendedIommu::fault_entry(const Tlp& tlp, AccessKind kind, bool blocked, Work& w) {
  LogRecordHeader h;
  h.op_kind = kind;
  h.device_id = tlp.requester.packed();
  h.dev_addr = tlp.address;
  h.length = static_cast<std::uint16_t>(tlp.txn_total_bytes);
  h.flags = blocked ? LogRecordHeader::kBlocked : 0;
  if (fault_log_.push(h)) w.posted += 1;
}

std::optional<AccessLog::Reservation> ExtendedIommu::reserve(AccessLog& log, std::uint64_t bytes) {
  auto r = log.reserve(bytes);
  if (!r) {
    block_iuid_ = log.iuid();
    block_bytes_ = bytes;
    return std::nullopt;
  }
  if (hooks_.on_reserve) hooks_.on_reserve(log.iuid(), *r);
  return r;
}

void ExtendedIommu::finish_record(std::uint16_t iuid, std::uint64_t offset, Work& w) {
  AccessLog& l = log(iuid);
  l.complete(offset);
  ++records_logged_;
  if (l.commit_holes() > 0) {
    dirty_.insert(iuid);
    // Pointer update: a memory write, or a scratchpad store.
    if (mode_ == NotificationMode::Scratchpad) {
      w.extra_ns += scratchpad_ns_;
    } else {
      w.posted += 1;
    }
  }
}

namespace {

LogRecordHeader make_header(const Tlp& tlp, AccessKind kind, const ActionSet& a, std::uint64_t seq) {
  LogRecordHeader h;
  h.op_kind = kind;
  h.device_id = tlp.requester.packed();
  h.iuid = a.iuid;
  h.dev_addr = tlp.address - tlp.txn_offset;
  h.length = static_cast<std::uint16_t>(tlp.txn_total_bytes);
  h.flags = static_cast<std::uint8_t>((a.log_data ? LogRecordHeader::kDataPresent : 0) |
                                      (a.blocked ? LogRecordHeader::kBlocked : 0));
  h.seq_no = seq;
  return h;
}

}  // namespace

std::optional<Work> ExtendedIommu::intercept_write(const Tlp& tlp) {
  Work w;
  const Translated tr = translate(tlp);
  w.accesses += tr.accesses;
  const bool first = tlp.seq_in_txn == 0;
  if (!tr.ok) {
    if (first) {
      fault_entry(tlp, AccessKind::Put, true, w);
      ++blocked_accesses_;
    }
    if (tlp.last_in_txn()) done_puts_.push_back(tlp);
    return w;
  }
  const ActionSet a = classify(tr.pte, AccessKind::Put);
  if (a.logs() && a.destination == LogDestination::AccessLog) {
    AccessLog& l = log(a.iuid);
    TagEntry* te = tags_.find(tlp.requester, tlp.tag);
    if (te == nullptr) {
      const std::uint64_t bytes = record_bytes(tlp.txn_total_bytes, a.log_data);
      const auto r = reserve(l, bytes);
      if (!r) return std::nullopt;
      Bytes head(bytes, 0);
      const auto hb = make_header(tlp, AccessKind::Put, a, r->seq_no).encode();
      std::copy(hb.begin(), hb.end(), head.begin());
      l.write(*memory_, r->offset, head);
      TagEntry e;
      e.iuid = a.iuid;
      e.record_offset = r->offset;
      e.bytes_remaining = tlp.txn_total_bytes;
      e.kind = TagKind::Put;
      e.dev_addr = tlp.address - tlp.txn_offset;
      e.length = tlp.txn_total_bytes;
      e.log_data = a.log_data;
      tags_.insert(tlp.requester, tlp.tag, e);
      te = tags_.find(tlp.requester, tlp.tag);
      w.posted += 1;
    }
    if (te->log_data) {
      l.write(*memory_, te->record_offset + kRecordHeaderBytes + tlp.txn_offset, tlp.payload);
      if (tlp.seq_in_txn > 0) w.posted += 1;
    }
    te->bytes_remaining -= std::min(te->bytes_remaining, tlp.length);
    if (te->bytes_remaining == 0) {
      const std::uint64_t off = te->record_offset;
      tags_.erase(tlp.requester, tlp.tag);
      finish_record(a.iuid, off, w);
    }
  } else if (a.logs() && first) {
    fault_entry(tlp, AccessKind::Put, a.blocked, w);
  }
  if (a.memory_effect) {
    memory_->write(tr.phys, tlp.payload);
    w.posted += 1;
  } else if (first) {
    ++blocked_accesses_;
  }
  if (tlp.last_in_txn()) {
    Tlp done = tlp;
    done.payload.clear();
    done_puts_.push_back(std::move(done));
  }
  return w;
}

std::optional<Work> ExtendedIommu::intercept_read_request(const Tlp& tlp) {
  Work w;
  if (is_flush_get(tlp)) {
    handle_flush_get(tlp);
    return w;
  }
  const Translated tr = translate(tlp);
  w.accesses += tr.accesses;
  if (!tr.ok) {
    fault_entry(tlp, AccessKind::Get, true, w);
    ++blocked_accesses_;
    for (auto& c : make_completions(tlp, {}, max_payload_, TlpStatus::Blocked)) memory_side_.push_back(std::move(c));
    return w;
  }
  const ActionSet a = classify(tr.pte, AccessKind::Get);
  if (a.logs() && a.destination == LogDestination::AccessLog) {
    AccessLog& l = log(a.iuid);
    const std::uint64_t bytes = record_bytes(tlp.length, a.log_data);
    const auto r = reserve(l, bytes);
    if (!r) return std::nullopt;
    Bytes head(bytes, 0);
    const auto hb = make_header(tlp, AccessKind::Get, a, r->seq_no).encode();
    std::copy(hb.begin(), hb.end(), head.begin());
    l.write(*memory_, r->offset, head);
    w.posted += 1;
    if (a.log_data && tlp.length > 0) {
      TagEntry e;
      e.iuid = a.iuid;
      e.record_offset = r->offset;
      e.bytes_remaining = tlp.length;
      e.kind = TagKind::GetReplica;
      e.dev_addr = tlp.address;
      e.length = tlp.length;
      e.log_data = true;
      tags_.insert(tlp.requester, tlp.tag, e);
    } else {
      finish_record(a.iuid, r->offset, w);
    }
  } else if (a.logs()) {
    fault_entry(tlp, AccessKind::Get, a.blocked, w);
  }
  if (a.memory_effect) {
    Bytes data(tlp.length);
    memory_->read(tr.phys, data);
    w.accesses += 1;
    for (auto& c : make_completions(tlp, data, max_payload_, TlpStatus::Success)) {
      memory_side_.push_back(std::move(c));
    }
  } else {
    ++blocked_accesses_;
    for (auto& c : make_completions(tlp, {}, max_payload_, TlpStatus::Blocked)) memory_side_.push_back(std::move(c));
  }
  return w;
}

Work ExtendedIommu::intercept_read_completion(const Tlp& tlp) {
  Work w;
  TagEntry* te = tags_.find(tlp.requester, tlp.tag);
  if (te != nullptr && te->kind == TagKind::GetReplica) {
    AccessLog& l = log(te->iuid);
    l.write(*memory_, te->record_offset + kRecordHeaderBytes + tlp.txn_offset, tlp.payload);
    w.posted += 1;
    te->bytes_remaining -= std::min(te->bytes_remaining, tlp.length);
    if (te->bytes_remaining == 0) {
      const std::uint16_t iuid = te->iuid;
      const std::uint64_t off = te->record_offset;
      tags_.erase(tlp.requester, tlp.tag);
      finish_record(iuid, off, w);
    }
  }
  outbox_.push_back(tlp);
  return w;
}

Work ExtendedIommu::intercept_atomic(const Tlp& tlp) {
  Work w;
  const Translated tr = translate(tlp);
  w.accesses += tr.accesses;
  Tlp c;
  c.kind = TlpKind::ReadCompletion;
  c.requester = tlp.requester;
  c.tag = tlp.tag;
  c.address = tlp.address & 0x7f;
  c.txn_id = tlp.txn_id;
  c.txn_total_bytes = 8;
  c.length = 8;
  c.payload.assign(8, 0);
  if (!tr.ok || !tr.pte.r || !tr.pte.w || (tr.phys & 7) != 0) {
    if (!tr.ok) fault_entry(tlp, AccessKind::Put, true, w);
    ++blocked_accesses_;
    c.status = TlpStatus::Blocked;
  } else {
    const std::uint64_t old = memory_->load_u64(tr.phys);
    std::uint64_t next = old;
    switch (tlp.atomic) {
      case AtomicOp::FetchAdd: next = old + tlp.operand; break;
      case AtomicOp::Swap: next = tlp.operand; break;
      case AtomicOp::CompareSwap: next = old == tlp.compare ? tlp.operand : old; break;
    }
    memory_->store_u64(tr.phys, next);
    w.accesses += 2;
    put_le<std::uint64_t>(c.payload.data(), old);
  }
  outbox_.push_back(std::move(c));
  return w;
}

bool ExtendedIommu::is_flush_get(const Tlp& tlp) const {
  if (tlp.kind != TlpKind::ReadRequest || tlp.address < kFlushBase) return false;
  const std::uint64_t idx = (tlp.address - kFlushBase) >> kPageShift;
  return idx <= Pte::kMaxIuid && flush_.count(static_cast<std::uint16_t>(idx)) != 0;
}

void ExtendedIommu::handle_flush_get(const Tlp& tlp) {
  const auto iuid = static_cast<std::uint16_t>((tlp.address - kFlushBase) >> kPageShift);
  FlushEntry& fe = flush_.at(iuid);
  const AccessLog& l = log(iuid);
  fe.queue.push_back(FlushRequest{tlp.requester, tlp.tag, tlp.txn_id, l.head(), l.next_seq()});
  if (hooks_.on_flush_intercept) hooks_.on_flush_intercept(iuid, fe.queue.back());
  if (!fe.active) {
    fe.active = true;
    fe.requester = tlp.requester;
    fe.tag = tlp.tag;
    fe.log_mark = l.head();
  }
  ++active_flushes_;
  try_complete_flushes(iuid, false);
  if (!fe.queue.empty() && hooks_.on_flush_pending) hooks_.on_flush_pending(iuid);
}

void ExtendedIommu::try_complete_flushes(std::uint16_t iuid, bool immediate) {
  auto it = flush_.find(iuid);
  if (it == flush_.end()) return;
  FlushEntry& fe = it->second;
  const AccessLog& l = log(iuid);
  while (!fe.queue.empty() && l.tail() >= fe.queue.front().log_mark) {
    const FlushRequest fr = fe.queue.front();
    fe.queue.pop_front();
    Tlp c;
    c.kind = TlpKind::ReadCompletion;
    c.requester = fr.requester;
    c.tag = fr.tag;
    c.address = fe.address & 0x7f;
    c.length = 8;
    c.payload.assign(8, 0);
    c.txn_id = fr.txn_id;
    c.txn_total_bytes = 8;
    send(std::move(c), immediate);
    if (fe.queue.empty()) {
      fe.active = false;
      fe.requester = DeviceId{};
      fe.tag = 0;
      fe.log_mark = 0;
    } else {
      fe.requester = fe.queue.front().requester;
      fe.tag = fe.queue.front().tag;
      fe.log_mark = fe.queue.front().log_mark;
    }
  }
}

void ExtendedIommu::send(Tlp t, bool immediate) {
  if (immediate && hooks_.emit) {
    hooks_.emit(std::move(t));
  } else {
    outbox_.push_back(std::move(t));
  }
}

Work ExtendedIommu::drain_memory_side() {
  Work total;
  while (!memory_side_.empty()) {
    Tlp c = std::move(memory_side_.front());
    memory_side_.pop_front();
    const Work w = intercept_read_completion(c);
    total.accesses += w.accesses;
    total.posted += w.posted;
    total.extra_ns += w.extra_ns;
  }
  return total;
}

std::vector<Tlp> ExtendedIommu::take_outbox() { return std::exchange(outbox_, {}); }

void ExtendedIommu::publish() {
  for (const std::uint16_t iuid : std::exchange(dirty_, {})) {
    const std::uint64_t n = log(iuid).publish();
    if (n > 0 && hooks_.on_commit) hooks_.on_commit(iuid, n);
  }
}

void ExtendedIommu::tail_advanced(std::uint16_t iuid, std::uint64_t bytes) {
  log(iuid).consume(bytes);
  try_complete_flushes(iuid, true);
  if (stalled_ && iuid == block_iuid_) pump();
}

void ExtendedIommu::accept(Tlp tlp) {
  inbox_.push_back(std::move(tlp));
  pump();
}

std::optional<Work> ExtendedIommu::process(const Tlp& tlp) {
  switch (tlp.kind) {
    case TlpKind::PostedWrite: return intercept_write(tlp);
    case TlpKind::ReadRequest: return intercept_read_request(tlp);
    case TlpKind::AtomicRequest: return intercept_atomic(tlp);
    case TlpKind::ReadCompletion: break;
  }
  throw SimError("IOMMU received a completion on its ingress link");
}

void ExtendedIommu::pump() {
  if (busy_) return;
  std::optional<Work> work;
  bool from_link = false;
  if (!memory_side_.empty()) {
    Tlp c = std::move(memory_side_.front());
    memory_side_.pop_front();
    work = intercept_read_completion(c);
  } else {
    for (std::size_t i = 0; i < inbox_.size(); ++i) {
      const Tlp& t = inbox_[i];
      if (i == 0) {
        // A stalled head is retried only once its log has room.
        if (stalled_ && log(block_iuid_).free_space() < block_bytes_) continue;
      } else {
        // Behind a stalled head only continuation packets of transactions
        // that already own a log region may proceed.
        const TagEntry* te = t.kind == TlpKind::PostedWrite ? tags_.find(t.requester, t.tag) : nullptr;
        if (te == nullptr || te->kind != TagKind::Put) continue;
      }
      work = process(t);
      if (work) {
        if (i == 0) stalled_ = false;
        inbox_.erase(inbox_.begin() + static_cast<std::ptrdiff_t>(i));
        from_link = true;
        break;
      }
      if (!stalled_) {
        stalled_ = true;
        ++stalls_;
        if (hooks_.on_blocked) hooks_.on_blocked(block_iuid_);
      }
    }
    if (!work) return;
  }
  busy_ = true;
  ++items_;
  const Nanos start = engine_->now() + proc_ns_ + work->extra_ns;
  const Nanos done = channel_->reserve(start, work->accesses);
  channel_->reserve(done, work->posted);
  engine_->at(done, [this, from_link] { finish(from_link); });
}

void ExtendedIommu::finish(bool from_link) {
  busy_ = false;
  if (from_link && hooks_.release_credit) hooks_.release_credit();
  for (auto& t : take_outbox()) {
    if (hooks_.emit) hooks_.emit(std::move(t));
  }
  publish();
  for (const auto& p : std::exchange(done_puts_, {})) {
    if (hooks_.on_put_done) hooks_.on_put_done(p);
  }
  pump();
}

}  // namespace aasim
