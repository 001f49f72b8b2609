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

// Cluster of nodes (NIC links + extended IOMMU + memory + one process) and
// the per-process programming interface: puts, gets, atomics, active
// accesses, flushes, and the log consumer that runs handlers.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "aasim/common.hpp"
#include "aasim/config.hpp"
#include "aasim/engine.hpp"
#include "aasim/iommu.hpp"
#include "aasim/metrics.hpp"
#include "aasim/paging.hpp"
#include "aasim/pcie.hpp"

namespace aasim {

class Cluster;
class Process;

/// Page action bits for assoc_page.
struct PageActions {
  bool r = true;
  bool w = true;
  bool wl = false;
  bool wld = false;
  bool rl = false;
  bool rld = false;
  bool e = true;

  static PageActions plain() { return {}; }
  /// Puts are logged with data and never reach memory.
  static PageActions active_put() { return {true, false, true, true, false, false, true}; }
  /// Puts reach memory and are logged without data.
  static PageActions counted_put() { return {true, true, true, false, false, false, true}; }
  /// Gets are served and the returned data is logged.
  static PageActions logged_get() { return {true, false, false, false, true, true, true}; }
};

enum class FaoOp : std::uint8_t { Sum, Replace };

struct OpResult {
  TlpStatus status = TlpStatus::Success;
  Bytes data;

  std::uint64_t word() const;
};

/// Handler view of one record: the record itself plus access to the local
/// memory. Every memory operation is charged one memory access.
class HandlerContext {
 public:
  HandlerContext(Process& proc, const LogRecord& record) : proc_(&proc), record_(&record) {}

  const LogRecord& record() const { return *record_; }
  Process& process() { return *proc_; }

  std::uint64_t load(Addr va);
  void store(Addr va, std::uint64_t v);
  /// Returns the previous value.
  std::uint64_t cas(Addr va, std::uint64_t compare, std::uint64_t desired);
  std::uint64_t fao(FaoOp op, std::uint64_t value, Addr va);
  void charge(std::uint32_t accesses) { accesses_ += accesses; }

  /// Queues an acknowledgment to `source`'s reply page.
  void reply(Rank source, std::uint64_t ack);

  std::uint32_t accesses() const { return accesses_; }

 private:
  Process* proc_;
  const LogRecord* record_;
  std::uint32_t accesses_ = 0;
};

using Handler = std::function<void(HandlerContext&)>;

struct Node {
  Node(Cluster& cluster, Rank id, const SimConfig& cfg);

  Rank id;
  PhysMemory memory;
  MemoryChannel channel;
  Cpu main_cpu;
  Cpu helper_cpu;  // hyperthread running the log consumer in poll/scratchpad mode
  ExtendedIommu iommu;
  Link ingress;  // network -> this node's IOMMU
  Link egress;   // this node's IOMMU -> network
  TagPool tags;
  std::unique_ptr<Process> process;
};

class Process {
 public:
  Process(Cluster& cluster, Node& node);

  Rank rank() const { return rank_; }
  Cluster& cluster() { return *cluster_; }
  Node& node() { return *node_; }
  Engine& engine();
  const SimConfig& config() const;
  DeviceId device() const { return DeviceId{1, static_cast<std::uint8_t>(rank_)}; }

  // ---- local memory (process virtual == device virtual addresses) ----
  Addr alloc(std::uint64_t bytes, std::uint64_t align = 8);
  bool owns(Addr va) const { return va >= kWindowBase && va < kWindowBase + brk_; }
  Addr phys(Addr va) const;
  std::uint64_t load(Addr va) const;
  void store(Addr va, std::uint64_t v);
  void read(Addr va, std::span<std::uint8_t> out) const;
  void write(Addr va, std::span<const std::uint8_t> in);

  // ---- active access setup ----
  std::uint32_t register_handler(Handler h);
  /// Installs the page bits, binds the handler, and allocates the IUID's
  /// access log on first use. Returns the IUID.
  std::uint16_t assoc_page(Addr va, PageActions actions, std::uint32_t handler_id);
  std::uint16_t assoc_pages(Addr va, std::uint64_t bytes, PageActions actions, std::uint32_t handler_id);
  std::uint16_t iuid_of(std::uint32_t handler_id) const;
  void set_reply_page(Addr va) { reply_page_ = va; }
  Addr reply_page() const { return reply_page_; }
  void set_am_handler(Handler h) { am_handler_ = std::move(h); }

  // ---- remote operations (each counts one remote op) ----
  Task<> put(Rank target, Addr addr, Bytes data);
  Task<> put_word(Rank target, Addr addr, std::uint64_t v);
  Task<OpResult> get(Rank target, Addr addr, std::uint32_t len);
  /// Issues a get and returns without waiting for the data.
  Task<Completion<OpResult>> get_async(Rank target, Addr addr, std::uint32_t len);
  Task<std::uint64_t> cas(Rank target, Addr addr, std::uint64_t compare, std::uint64_t desired);
  Task<std::uint64_t> fao(Rank target, FaoOp op, std::uint64_t value, Addr addr);
  /// Returns once every earlier active access to `target` was handled.
  Task<> flush(Rank target);
  Task<> rma_put(Rank target, Addr addr, Bytes data);
  Task<OpResult> rma_get(Rank target, Addr addr, std::uint32_t len);
  /// Returns once the caller's earlier plain puts to `target` completed.
  Task<> rma_flush(Rank target);
  /// Active-message send to `target`'s mailbox (plain page; the receiver
  /// polls for messages).
  Task<> am_send(Rank target, Bytes msg);

  /// Local computation on the main CPU.
  Task<> compute(Nanos ns);

  // ---- consumer side ----
  /// Drains all visible records of every owned log (one poll step).
  Task<std::uint64_t> poll_step(Cpu* cpu);
  std::uint64_t outstanding() const { return pending_.size(); }

  // Called by the cluster wiring.
  void on_completion(Rank from, Tlp tlp);
  void on_commit(std::uint16_t iuid, std::uint64_t records);
  void on_flush_pending(std::uint16_t iuid);
  void on_blocked(std::uint16_t iuid);
  void on_am_message(Rank from, Bytes msg);

  /// Remote operations issued by this process (including handler replies).
  std::uint64_t ops_issued() const { return ops_issued_; }
  std::uint64_t interrupts() const { return interrupts_; }
  std::uint64_t records_consumed() const { return records_consumed_; }
  std::uint64_t handler_invocations() const { return handler_invocations_; }

 private:
  friend class HandlerContext;
  struct Pending {
    Completion<OpResult> done;
    std::uint32_t expected = 0;
    std::uint32_t received = 0;
    Bytes data;
  };

  Task<> issue(Cpu* cpu);
  Task<> send_put(Rank target, Addr addr, Bytes data);
  Task<Completion<OpResult>> send_read(Rank target, Addr addr, std::uint32_t len);
  Task<Completion<OpResult>> send_atomic(Rank target, Addr addr, AtomicOp op, std::uint64_t operand,
                                         std::uint64_t compare);
  std::uint64_t next_txn();

  Cpu& consumer_cpu();
  void kick(Nanos at);
  void raise_interrupt();
  Task<> drain(Cpu* cpu);
  Task<> send_replies(Cpu* cpu);
  void kick_am();
  Task<> am_drain();

  Cluster* cluster_;
  Node* node_;
  Rank rank_;
  std::uint64_t brk_ = 0;
  std::uint16_t next_iuid_ = 1;
  std::vector<Handler> handlers_;
  std::map<std::uint32_t, std::uint16_t> handler_iuid_;
  std::map<std::uint16_t, std::uint32_t> iuid_handler_;
  Addr reply_page_ = 0;
  std::map<Rank, std::vector<std::uint64_t>> reply_queue_;
  std::map<std::uint32_t, Pending> pending_;  // key: target << 8 | tag

  bool draining_ = false;
  bool wake_scheduled_ = false;
  Nanos wake_at_ = 0;
  bool irq_pending_ = false;
  std::uint64_t irq_records_ = 0;
  std::uint64_t irq_timer_gen_ = 0;
  bool irq_timer_armed_ = false;

  Handler am_handler_;
  std::vector<std::pair<Rank, Bytes>> am_inbox_;
  bool am_scheduled_ = false;
  bool am_draining_ = false;

  std::uint64_t records_consumed_ = 0;
  std::uint64_t handler_invocations_ = 0;
  std::uint64_t interrupts_ = 0;
  std::uint64_t ops_issued_ = 0;
};

/// The simulated machine: one node per rank, all-to-all through per-node
/// ingress/egress links.
class Cluster {
 public:
  explicit Cluster(SimConfig cfg);
  Cluster(const Cluster&) = delete;
  Cluster& operator=(const Cluster&) = delete;

  Engine& engine() { return engine_; }
  const SimConfig& config() const { return cfg_; }
  Metrics& metrics() { return metrics_; }
  std::uint32_t size() const { return static_cast<std::uint32_t>(nodes_.size()); }
  Node& node(Rank r) { return *nodes_.at(r); }
  Process& proc(Rank r) { return *nodes_.at(r)->process; }
  Barrier& barrier() { return barrier_; }

  /// Device-virtual address of the AM mailbox slot for messages from `source`.
  Addr am_slot(Rank source) const { return am_mailbox_ + Addr{source} * 64; }
  Addr am_mailbox() const { return am_mailbox_; }

  std::uint64_t next_txn() { return ++txn_; }

  /// Records that useful work finished at the current time; sim_time is the
  /// latest such point (stale timer events do not count).
  void touch() { last_activity_ = std::max(last_activity_, engine_.now()); }
  Nanos last_activity() const { return last_activity_; }

  /// Runs to quiescence and finalizes sim_time, energy and counters.
  Metrics run();
  /// Copies IOMMU/consumer counters into metrics().
  void collect();

 private:
  SimConfig cfg_;
  Engine engine_;
  Metrics metrics_;
  std::vector<std::unique_ptr<Node>> nodes_;
  Barrier barrier_;
  Addr am_mailbox_ = 0;
  std::uint64_t txn_ = 0;
  Nanos last_activity_ = 0;
};

}  // namespace aasim
