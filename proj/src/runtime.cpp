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

#include "aasim/runtime.hpp"

#include <bit>
#include <sstream>

namespace aasim {

namespace {

std::uint32_t pending_key(Rank target, std::uint8_t tag) { return target << 8 | tag; }

std::uint64_t word_of(const Bytes& b) {
  std::uint64_t v = 0;
  for (std::size_t i = std::min<std::size_t>(b.size(), 8); i > 0; --i) v = v << 8 | b[i - 1];
  return v;
}

}  // namespace

std::uint64_t OpResult::word() const {
  if (status != TlpStatus::Success) throw SimError("word() of a blocked access");
  return word_of(data);
}

// ---- HandlerContext -------------------------------------------------------

std::uint64_t HandlerContext::load(Addr va) {
  ++accesses_;
  return proc_->load(va);
}

void HandlerContext::store(Addr va, std::uint64_t v) {
  ++accesses_;
  proc_->store(va, v);
}

std::uint64_t HandlerContext::cas(Addr va, std::uint64_t compare, std::uint64_t desired) {
  ++accesses_;
  const std::uint64_t old = proc_->load(va);
  if (old == compare) proc_->store(va, desired);
  return old;
}

std::uint64_t HandlerContext::fao(FaoOp op, std::uint64_t value, Addr va) {
  ++accesses_;
  const std::uint64_t old = proc_->load(va);
  proc_->store(va, op == FaoOp::Sum ? old + value : value);
  return old;
}

void HandlerContext::reply(Rank source, std::uint64_t ack) {
  if (source >= proc_->cluster().size() || proc_->cluster().proc(source).reply_page() == 0) {
    throw SimError("reply: no reply page registered at rank " + std::to_string(source));
  }
  proc_->reply_queue_[source].push_back(ack);
}

// ---- Node -----------------------------------------------------------------

Node::Node(Cluster& cluster, Rank rank, const SimConfig& cfg)
    : id(rank),
      memory(rank, 1ull << 40),
      channel(cfg.mem_access_ns),
      main_cpu(cluster.engine(), &channel),
      helper_cpu(cluster.engine(), &channel),
      iommu(cluster.engine(), memory, channel, cfg, cfg.seed * 0x9E3779B97F4A7C15ull + rank),
      ingress(cluster.engine(), "ingress" + std::to_string(rank), cfg.link_latency_ns, cfg.link_bw_bytes_per_ns,
              cfg.credit_capacity, cfg.wire_header_bytes),
      egress(cluster.engine(), "egress" + std::to_string(rank), cfg.link_latency_ns, cfg.link_bw_bytes_per_ns,
             cfg.credit_capacity, cfg.wire_header_bytes),
      tags(cluster.engine()) {}

// ---- Process --------------------------------------------------------------

Process::Process(Cluster& cluster, Node& node) : cluster_(&cluster), node_(&node), rank_(node.id) {}

Engine& Process::engine() { return cluster_->engine(); }
const SimConfig& Process::config() const { return cluster_->config(); }

Addr Process::alloc(std::uint64_t bytes, std::uint64_t align) {
  if (align == 0 || (align & (align - 1)) != 0) throw SimError("alloc: alignment must be a power of two");
  const std::uint64_t mapped_end = round_up(brk_, kPageSize);
  brk_ = round_up(brk_, align);
  const Addr phys = brk_;
  brk_ += std::max<std::uint64_t>(bytes, 1);
  if (brk_ > node_->memory.size()) throw SimError("alloc: node memory exhausted");
  auto& remap = node_->iommu.remapping();
  for (std::uint64_t p = mapped_end; p < brk_; p += kPageSize) {
    Pte pte;
    pte.frame = p >> kPageShift;
    pte.r = pte.w = true;
    remap.map_page(device(), kWindowBase + p, pte);
  }
  return kWindowBase + phys;
}

Addr Process::phys(Addr va) const {
  if (!owns(va)) {
    std::ostringstream os;
    os << "rank " << rank_ << ": address 0x" << std::hex << va << " is not owned";
    throw SimError(os.str());
  }
  return va - kWindowBase;
}

std::uint64_t Process::load(Addr va) const { return node_->memory.load_u64(phys(va)); }
void Process::store(Addr va, std::uint64_t v) { node_->memory.store_u64(phys(va), v); }
void Process::read(Addr va, std::span<std::uint8_t> out) const { node_->memory.read(phys(va), out); }
void Process::write(Addr va, std::span<const std::uint8_t> in) { node_->memory.write(phys(va), in); }

std::uint32_t Process::register_handler(Handler h) {
  handlers_.push_back(std::move(h));
  return static_cast<std::uint32_t>(handlers_.size() - 1);
}

std::uint16_t Process::iuid_of(std::uint32_t handler_id) const {
  auto it = handler_iuid_.find(handler_id);
  if (it == handler_iuid_.end()) throw SimError("handler has no associated pages");
  return it->second;
}

std::uint16_t Process::assoc_page(Addr va, PageActions act, std::uint32_t handler_id) {
  if (!page_aligned(va)) throw AlignmentError("assoc_page: address not page-aligned");
  if (!owns(va)) throw SimError("assoc_page: page not owned by rank " + std::to_string(rank_));
  if (handler_id >= handlers_.size()) throw SimError("assoc_page: unknown handler id");
  std::uint16_t iuid = 0;
  if (auto it = handler_iuid_.find(handler_id); it != handler_iuid_.end()) {
    iuid = it->second;
  } else {
    if (next_iuid_ > Pte::kMaxIuid) throw SimError("assoc_page: IUID space exhausted");
    iuid = next_iuid_++;
    const std::uint64_t size = config().access_log_size;
    const Addr base = alloc(size, kPageSize);
    node_->iommu.register_log(iuid, phys(base), size);
    handler_iuid_[handler_id] = iuid;
    iuid_handler_[iuid] = handler_id;
  }
  Pte pte;
  pte.frame = phys(va) >> kPageShift;
  pte.r = act.r;
  pte.w = act.w;
  pte.wl = act.wl;
  pte.wld = act.wld;
  pte.rl = act.rl;
  pte.rld = act.rld;
  pte.e = act.e;
  pte.iuid = iuid;
  node_->iommu.remapping().map_page(device(), va, pte);
  return iuid;
}

std::uint16_t Process::assoc_pages(Addr va, std::uint64_t bytes, PageActions act, std::uint32_t handler_id) {
  std::uint16_t iuid = 0;
  for (Addr p = va; p < va + bytes; p += kPageSize) iuid = assoc_page(p, act, handler_id);
  return iuid;
}

std::uint64_t Process::next_txn() { return cluster_->next_txn(); }

Task<> Process::issue(Cpu* cpu) {
  ++cluster_->metrics().remote_ops;
  ++ops_issued_;
  co_await cpu->run(config().issue_ns);
}

Task<> Process::send_put(Rank target, Addr addr, Bytes data) {
  if (data.size() > kMaxTransactionBytes) {
    throw OversizeError("put of " + std::to_string(data.size()) + " bytes exceeds the 4096-byte transaction cap");
  }
  Node& t = cluster_->node(target);
  const std::uint8_t tag = co_await t.tags.acquire();
  for (auto& p : split_put(addr, data, device(), tag, next_txn(), config().max_payload)) {
    t.ingress.submit(std::move(p));
  }
}

Task<Completion<OpResult>> Process::send_read(Rank target, Addr addr, std::uint32_t len) {
  if (len > kMaxTransactionBytes) {
    throw OversizeError("get of " + std::to_string(len) + " bytes exceeds the 4096-byte transaction cap");
  }
  Node& t = cluster_->node(target);
  const std::uint8_t tag = co_await t.tags.acquire();
  Completion<OpResult> done(engine());
  pending_.emplace(pending_key(target, tag), Pending{done, len, 0, Bytes(len)});
  auto split = split_get(addr, len, device(), tag, next_txn(), config().max_payload);
  t.ingress.submit(std::move(split.request));
  co_return done;
}

Task<Completion<OpResult>> Process::send_atomic(Rank target, Addr addr, AtomicOp op, std::uint64_t operand,
                                                std::uint64_t compare) {
  Node& t = cluster_->node(target);
  const std::uint8_t tag = co_await t.tags.acquire();
  Completion<OpResult> done(engine());
  pending_.emplace(pending_key(target, tag), Pending{done, 8, 0, Bytes(8)});
  t.ingress.submit(make_atomic(addr, op, operand, compare, device(), tag, next_txn()));
  co_return done;
}

void Process::on_completion(Rank from, Tlp tlp) {
  auto it = pending_.find(pending_key(from, tlp.tag));
  if (it == pending_.end()) throw SimError("rank " + std::to_string(rank_) + ": unexpected completion");
  Pending& p = it->second;
  bool done = tlp.status == TlpStatus::Blocked;
  if (!done) {
    std::copy(tlp.payload.begin(), tlp.payload.end(), p.data.begin() + tlp.txn_offset);
    p.received += tlp.length;
    done = p.received >= p.expected;
  }
  if (!done) return;
  OpResult r;
  r.status = tlp.status;
  if (r.status == TlpStatus::Success) r.data = std::move(p.data);
  auto c = p.done;
  pending_.erase(it);
  cluster_->node(from).tags.release(tlp.tag);
  cluster_->touch();
  c.set(std::move(r));
}

Task<> Process::put(Rank target, Addr addr, Bytes data) {
  co_await issue(&node_->main_cpu);
  co_await send_put(target, addr, std::move(data));
}

Task<> Process::put_word(Rank target, Addr addr, std::uint64_t v) { return put(target, addr, word_bytes(v)); }

Task<OpResult> Process::get(Rank target, Addr addr, std::uint32_t len) {
  auto c = co_await get_async(target, addr, len);
  co_return co_await c;
}

Task<Completion<OpResult>> Process::get_async(Rank target, Addr addr, std::uint32_t len) {
  co_await issue(&node_->main_cpu);
  co_return co_await send_read(target, addr, len);
}

Task<std::uint64_t> Process::cas(Rank target, Addr addr, std::uint64_t compare, std::uint64_t desired) {
  co_await issue(&node_->main_cpu);
  auto c = co_await send_atomic(target, addr, AtomicOp::CompareSwap, desired, compare);
  const OpResult r = co_await c;
  if (r.status != TlpStatus::Success) throw SimError("remote cas blocked by page permissions");
  co_return r.word();
}

Task<std::uint64_t> Process::fao(Rank target, FaoOp op, std::uint64_t value, Addr addr) {
  co_await issue(&node_->main_cpu);
  auto c = co_await send_atomic(target, addr, op == FaoOp::Sum ? AtomicOp::FetchAdd : AtomicOp::Swap, value, 0);
  const OpResult r = co_await c;
  if (r.status != TlpStatus::Success) throw SimError("remote fao blocked by page permissions");
  co_return r.word();
}

Task<> Process::flush(Rank target) {
  co_await issue(&node_->main_cpu);
  std::vector<std::uint16_t> iuids;
  for (const auto& [iuid, hid] : cluster_->proc(target).iuid_handler_) iuids.push_back(iuid);
  if (iuids.empty()) {
    auto c = co_await send_read(target, kWindowBase, 0);
    co_await c;
    co_return;
  }
  std::vector<Completion<OpResult>> waits;
  for (const std::uint16_t iuid : iuids) waits.push_back(co_await send_read(target, flush_page_addr(iuid), 8));
  for (auto& w : waits) co_await w;
}

Task<> Process::rma_put(Rank target, Addr addr, Bytes data) { return put(target, addr, std::move(data)); }

Task<OpResult> Process::rma_get(Rank target, Addr addr, std::uint32_t len) { return get(target, addr, len); }

Task<> Process::rma_flush(Rank target) {
  co_await issue(&node_->main_cpu);
  // A zero-length read: completes after every earlier write to the target.
  auto c = co_await send_read(target, kWindowBase, 0);
  co_await c;
}

Task<> Process::am_send(Rank target, Bytes msg) {
  if (msg.size() > 64) throw OversizeError("active message larger than its 64-byte mailbox slot");
  co_await issue(&node_->main_cpu);
  co_await send_put(target, cluster_->am_slot(rank_), std::move(msg));
}

Task<> Process::compute(Nanos ns) { co_await node_->main_cpu.run(ns); }

// ---- consumer -------------------------------------------------------------

Cpu& Process::consumer_cpu() {
  return config().notification == NotificationMode::Interrupt ? node_->main_cpu : node_->helper_cpu;
}

void Process::on_commit(std::uint16_t iuid, std::uint64_t records) {
  const auto& cfg = config();
  if (cfg.notification != NotificationMode::Interrupt) {
    kick(wakeup_time(cfg.notification, engine().now(), cfg.interrupt_ns, cfg.scratchpad_ns, cfg.poll_interval_ns));
    return;
  }
  irq_records_ += records;
  if (draining_) return;
  const FlushEntry* fe = node_->iommu.flush_entry(iuid);
  if (irq_records_ >= cfg.interrupt_batch || (fe != nullptr && fe->active)) {
    raise_interrupt();
    return;
  }
  if (!irq_timer_armed_) {
    irq_timer_armed_ = true;
    const std::uint64_t gen = ++irq_timer_gen_;
    engine().after(cfg.interrupt_timeout_ns, [this, gen] {
      if (gen != irq_timer_gen_) return;
      irq_timer_armed_ = false;
      if (irq_records_ > 0 && !draining_) raise_interrupt();
    });
  }
}

void Process::on_flush_pending(std::uint16_t) {
  const auto& cfg = config();
  if (cfg.notification == NotificationMode::Interrupt) {
    raise_interrupt();
  } else {
    kick(wakeup_time(cfg.notification, engine().now(), cfg.interrupt_ns, cfg.scratchpad_ns, cfg.poll_interval_ns));
  }
}

void Process::on_blocked(std::uint16_t iuid) { on_flush_pending(iuid); }

void Process::kick(Nanos at) {
  if (draining_) return;
  if (wake_scheduled_ && wake_at_ <= at) return;
  wake_scheduled_ = true;
  wake_at_ = at;
  engine().at(at, [this, at] {
    if (!wake_scheduled_ || wake_at_ != at) return;
    wake_scheduled_ = false;
    if (draining_) return;
    draining_ = true;
    engine().spawn(drain(&node_->helper_cpu), "consumer@" + std::to_string(rank_));
  });
}

void Process::raise_interrupt() {
  if (irq_pending_ || draining_) return;
  irq_pending_ = true;
  ++irq_timer_gen_;
  irq_timer_armed_ = false;
  ++interrupts_;
  const Nanos t = node_->main_cpu.reserve(config().interrupt_ns);
  engine().at(t, [this] {
    irq_pending_ = false;
    if (draining_) return;
    draining_ = true;
    engine().spawn(drain(&node_->main_cpu), "interrupt@" + std::to_string(rank_));
  });
}

Task<> Process::drain(Cpu* cpu) {
  const auto& cfg = config();
  for (;;) {
    // Read the log pointers.
    if (cfg.notification == NotificationMode::Scratchpad) {
      co_await cpu->run(cfg.scratchpad_ns);
    } else {
      co_await cpu->run(0, 1);
    }
    const std::uint64_t n = co_await poll_step(cpu);
    if (n == 0) break;
  }
  // Partial reply batches go out once the logs are empty.
  if (!reply_queue_.empty()) {
    auto queued = std::exchange(reply_queue_, {});
    for (auto& [source, acks] : queued) {
      Bytes payload;
      for (const auto a : acks) {
        const Bytes b = word_bytes(a);
        payload.insert(payload.end(), b.begin(), b.end());
      }
      co_await issue(cpu);
      co_await send_put(source, cluster_->proc(source).reply_page(), std::move(payload));
    }
  }
  draining_ = false;
  irq_records_ = 0;
  cluster_->touch();
}

Task<> Process::send_replies(Cpu* cpu) {
  const std::uint32_t batch = config().reply_batch;
  for (auto& [source, acks] : reply_queue_) {
    while (acks.size() >= batch) {
      Bytes payload;
      for (std::uint32_t i = 0; i < batch; ++i) {
        const Bytes b = word_bytes(acks[i]);
        payload.insert(payload.end(), b.begin(), b.end());
      }
      acks.erase(acks.begin(), acks.begin() + batch);
      const Rank dst = source;
      co_await issue(cpu);
      co_await send_put(dst, cluster_->proc(dst).reply_page(), std::move(payload));
    }
  }
  std::erase_if(reply_queue_, [](const auto& kv) { return kv.second.empty(); });
}

Task<std::uint64_t> Process::poll_step(Cpu* cpu) {
  const auto& cfg = config();
  std::uint64_t consumed = 0;
  for (const auto& [iuid, hid] : iuid_handler_) {
    AccessLog& l = node_->iommu.log(iuid);
    while (l.tail() < l.visible_head()) {
      const LogRecord rec = l.read_record(node_->memory, l.tail());
      const std::uint64_t bytes = record_bytes(rec.header.length, rec.header.data_present());
      HandlerContext ctx(*this, rec);
      try {
        handlers_[hid](ctx);
      } catch (const std::exception& e) {
        std::ostringstream os;
        os << "handler " << hid << " (iuid " << iuid << ") on rank " << rank_ << " failed on record seq "
           << rec.header.seq_no << ": " << e.what();
        throw SimError(os.str());
      }
      co_await cpu->run(cfg.handler_cost_ns, 1 + ctx.accesses());
      ++consumed;
      ++records_consumed_;
      ++handler_invocations_;
      node_->iommu.tail_advanced(iuid, bytes);
      if (!reply_queue_.empty()) co_await send_replies(cpu);
    }
  }
  co_return consumed;
}

void Process::on_am_message(Rank from, Bytes msg) {
  am_inbox_.emplace_back(from, std::move(msg));
  kick_am();
}

void Process::kick_am() {
  if (am_scheduled_ || am_draining_) return;
  am_scheduled_ = true;
  const Nanos interval = config().am_poll_interval_ns;
  const Nanos t = (engine().now() / interval + 1) * interval;
  engine().at(t, [this] {
    am_scheduled_ = false;
    am_draining_ = true;
    engine().spawn(am_drain(), "am-poll@" + std::to_string(rank_));
  });
}

Task<> Process::am_drain() {
  const auto& cfg = config();
  if (!am_handler_) throw SimError("rank " + std::to_string(rank_) + " received an active message without a handler");
  for (;;) {
    co_await node_->main_cpu.run(0, 1);  // poll the mailbox
    if (am_inbox_.empty()) break;
    auto batch = std::exchange(am_inbox_, {});
    for (auto& [from, msg] : batch) {
      LogRecord rec;
      rec.header.op_kind = AccessKind::Put;
      rec.header.device_id = DeviceId{1, static_cast<std::uint8_t>(from)}.packed();
      rec.header.dev_addr = cluster_->am_slot(from);
      rec.header.length = static_cast<std::uint16_t>(msg.size());
      rec.header.flags = LogRecordHeader::kDataPresent;
      rec.payload = std::move(msg);
      HandlerContext ctx(*this, rec);
      am_handler_(ctx);
      co_await node_->main_cpu.run(cfg.handler_cost_ns, 1 + ctx.accesses());
      ++handler_invocations_;
    }
  }
  am_draining_ = false;
  cluster_->touch();
}

// ---- Cluster --------------------------------------------------------------

namespace {
Nanos barrier_cost(const SimConfig& cfg) {
  const auto rounds = static_cast<Nanos>(std::bit_width(std::max<std::uint32_t>(cfg.num_procs, 2) - 1));
  return 2 * cfg.link_latency_ns * rounds;
}
}  // namespace

Cluster::Cluster(SimConfig cfg)
    : cfg_(std::move(cfg)), barrier_(engine_, cfg_.num_procs, barrier_cost(cfg_)) {
  cfg_.validate();
  if (cfg_.num_procs > 255) throw ConfigError("num_procs must be at most 255");
  for (Rank r = 0; r < cfg_.num_procs; ++r) {
    nodes_.push_back(std::make_unique<Node>(*this, r, cfg_));
  }
  for (Rank r = 0; r < cfg_.num_procs; ++r) {
    Node& n = *nodes_[r];
    auto& remap = n.iommu.remapping();
    const std::size_t table = remap.add_page_table();
    for (Rank s = 0; s < cfg_.num_procs; ++s) remap.attach_device(DeviceId{1, static_cast<std::uint8_t>(s)}, table);
    n.process = std::make_unique<Process>(*this, n);

    auto account = [this](const Tlp& t, std::uint64_t wire) {
      metrics_.bytes_wire += wire;
      metrics_.payload_bytes += t.payload.size();
      ++metrics_.tlps;
    };
    n.ingress.set_observer(account);
    n.egress.set_observer(account);
    n.ingress.set_receiver([&n](Tlp t) { n.iommu.accept(std::move(t)); });
    n.egress.set_receiver([this, &n](Tlp t) {
      n.egress.release_credit();
      proc(t.requester.devfn).on_completion(n.id, std::move(t));
    });

    auto& h = n.iommu.hooks();
    h.release_credit = [&n] { n.ingress.release_credit(); };
    h.emit = [&n](Tlp t) { n.egress.submit(std::move(t)); };
    h.on_commit = [&n](std::uint16_t iuid, std::uint64_t k) { n.process->on_commit(iuid, k); };
    h.on_flush_pending = [&n](std::uint16_t iuid) { n.process->on_flush_pending(iuid); };
    h.on_blocked = [&n](std::uint16_t iuid) { n.process->on_blocked(iuid); };
    h.on_put_done = [this, &n](const Tlp& t) {
      n.tags.release(t.tag);
      const Addr start = t.address - t.txn_offset;
      if (start >= am_mailbox_ && start < am_mailbox_ + Addr{cfg_.num_procs} * 64) {
        Bytes msg(t.txn_total_bytes);
        n.process->read(start, msg);
        n.process->on_am_message(t.requester.devfn, std::move(msg));
      }
    };
  }
  // Symmetric layout: the first allocation on every rank is the AM mailbox.
  for (Rank r = 0; r < cfg_.num_procs; ++r) {
    am_mailbox_ = proc(r).alloc(round_up(Addr{cfg_.num_procs} * 64, kPageSize), kPageSize);
  }
  engine_.add_diagnostic([this] {
    std::ostringstream os;
    for (const auto& n : nodes_) {
      if (n->iommu.stalled() || n->ingress.queued() > 0 || n->iommu.queued() > 0) {
        os << "node " << n->id << ": iommu " << (n->iommu.stalled() ? "stalled" : "running") << " with "
           << n->iommu.queued() << " queued, ingress queue " << n->ingress.queued() << ", tags in use "
           << n->tags.in_use() << "; ";
      }
    }
    return os.str();
  });
}

void Cluster::collect() {
  Metrics& m = metrics_;
  m.iotlb_hits = m.iotlb_misses = m.records_logged = m.records_consumed = m.handler_invocations = 0;
  m.fault_log_entries = m.fault_log_drops = m.interrupts = m.active_flushes = 0;
  m.backpressure_stalls = m.blocked_accesses = 0;
  for (const auto& n : nodes_) {
    m.iotlb_hits += n->iommu.remapping().iotlb().hits();
    m.iotlb_misses += n->iommu.remapping().iotlb().misses();
    m.records_logged += n->iommu.records_logged();
    m.records_consumed += n->process->records_consumed();
    m.handler_invocations += n->process->handler_invocations();
    m.fault_log_entries += n->iommu.fault_log().recorded();
    m.fault_log_drops += n->iommu.fault_log().dropped();
    m.interrupts += n->process->interrupts();
    m.active_flushes += n->iommu.active_flushes();
    m.backpressure_stalls += n->iommu.backpressure_stalls() + n->ingress.stalls() + n->tags.waits();
    m.blocked_accesses += n->iommu.blocked_accesses();
  }
  m.sim_time_ns = last_activity_;
  m.energy_joules = energy(m.bytes_wire, cfg_.joules_per_byte);
}

Metrics Cluster::run() {
  engine_.run();
  collect();
  return metrics_;
}

}  // namespace aasim
