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

#include "aasim/apps.hpp"

#include <algorithm>
#include <bit>
#include <map>

#include "aasim/dht.hpp"
#include "aasim/runtime.hpp"

namespace aasim {

namespace {

Rank other_rank(Rank self, std::uint32_t procs, Rng& rng) {
  if (procs == 1) return 0;
  return static_cast<Rank>((self + 1 + rng.below(procs - 1)) % procs);
}

// n log2 n comparisons at 1ns each.
Nanos sort_cost(std::uint64_t n) { return n < 2 ? 0 : static_cast<Nanos>(n * std::bit_width(n - 1)); }

}  // namespace

// ---- access counter -----------------------------------------------------------

CounterScheme parse_counter_scheme(std::string_view s) {
  if (s == "aa") return CounterScheme::Aa;
  if (s == "rma-atomics") return CounterScheme::RmaAtomics;
  if (s == "allreduce") return CounterScheme::Allreduce;
  throw ConfigError("unknown counter scheme '" + std::string(s) + "' (expected aa|rma-atomics|allreduce)");
}

std::string to_string(CounterScheme s) {
  switch (s) {
    case CounterScheme::Aa: return "AA";
    case CounterScheme::RmaAtomics: return "RMA-atomics";
    case CounterScheme::Allreduce: return "Allreduce";
  }
  return "?";
}

CounterTrace make_counter_trace(std::uint32_t procs, std::uint64_t per_proc, std::uint32_t pages, Rng& rng) {
  CounterTrace t(procs);
  for (Rank r = 0; r < procs; ++r) {
    for (std::uint64_t i = 0; i < per_proc; ++i) {
      CounterAccess a;
      a.target = other_rank(r, procs, rng);
      a.page = static_cast<std::uint32_t>(rng.below(pages));
      a.offset = static_cast<std::uint32_t>(rng.below(kPageSize / 8) * 8);
      a.kind = rng.chance(0.5) ? AccessKind::Put : AccessKind::Get;
      t[r].push_back(a);
    }
  }
  return t;
}

AccessCounts counter_oracle(const CounterTrace& trace, std::uint32_t procs, std::uint32_t pages) {
  AccessCounts c;
  c.puts.assign(procs, std::vector<std::uint64_t>(pages, 0));
  c.gets.assign(procs, std::vector<std::uint64_t>(pages, 0));
  for (const auto& accesses : trace) {
    for (const auto& a : accesses) {
      (a.kind == AccessKind::Put ? c.puts : c.gets)[a.target][a.page]++;
    }
  }
  return c;
}

namespace {

struct CounterRun {
  Cluster* cluster = nullptr;
  CounterScheme scheme{};
  const CounterTrace* trace = nullptr;
  std::uint32_t pages = 0;
  Addr data = 0;
  Addr counters = 0;
  Addr reduce = 0;

  Addr slot(std::uint32_t page, AccessKind kind) const {
    return counters + (std::uint64_t{page} * 2 + (kind == AccessKind::Get ? 1 : 0)) * 8;
  }
};

// Puts `bytes` into `dst` at `target` in transaction-sized pieces.
Task<> put_chunked(Process* p, Rank target, Addr dst, Bytes bytes) {
  for (std::size_t off = 0; off < bytes.size(); off += kMaxTransactionBytes) {
    const std::size_t n = std::min<std::size_t>(kMaxTransactionBytes, bytes.size() - off);
    co_await p->rma_put(target, dst + off, Bytes(bytes.begin() + off, bytes.begin() + off + n));
  }
}

Task<> counter_body(CounterRun* run, Rank r) {
  Cluster& c = *run->cluster;
  Process* p = &c.proc(r);
  const std::uint32_t procs = c.size();
  const std::uint64_t per_target = std::uint64_t{run->pages} * 2;
  std::vector<std::uint64_t> mine(procs * per_target, 0);
  std::uint64_t i = 0;
  for (const auto& a : (*run->trace)[r]) {
    const Addr addr = run->data + std::uint64_t{a.page} * kPageSize + a.offset;
    if (a.kind == AccessKind::Put) {
      co_await p->put(a.target, addr, word_bytes(++i));
    } else {
      co_await p->get(a.target, addr, 8);
    }
    if (run->scheme == CounterScheme::RmaAtomics) {
      co_await p->fao(a.target, FaoOp::Sum, 1, run->slot(a.page, a.kind));
    } else if (run->scheme == CounterScheme::Allreduce) {
      ++mine[a.target * per_target + a.page * 2 + (a.kind == AccessKind::Get ? 1 : 0)];
    }
  }
  if (run->scheme == CounterScheme::Allreduce) {
    // Reduce to rank 0, which then hands every rank its totals.
    const std::uint64_t vec_bytes = mine.size() * 8;
    Bytes out;
    for (const auto v : mine) {
      const Bytes b = word_bytes(v);
      out.insert(out.end(), b.begin(), b.end());
    }
    co_await put_chunked(p, 0, run->reduce + r * vec_bytes, std::move(out));
    co_await p->rma_flush(0);
    co_await c.barrier().arrive();
    if (r == 0) {
      for (Rank t = 0; t < procs; ++t) {
        Bytes totals;
        for (std::uint64_t k = 0; k < per_target; ++k) {
          std::uint64_t sum = 0;
          for (Rank s = 0; s < procs; ++s) sum += p->load(run->reduce + s * vec_bytes + (t * per_target + k) * 8);
          co_await p->compute(static_cast<Nanos>(procs));
          const Bytes b = word_bytes(sum);
          totals.insert(totals.end(), b.begin(), b.end());
        }
        co_await put_chunked(p, t, run->counters, std::move(totals));
        co_await p->rma_flush(t);
      }
    }
    co_await c.barrier().arrive();
  }
  c.touch();
}

}  // namespace

CounterResult run_counter(SimConfig cfg, CounterScheme scheme, const CounterTrace& trace, std::uint32_t pages) {
  if (trace.size() != cfg.num_procs) throw ConfigError("trace rank count does not match num_procs");
  if (pages == 0) throw ConfigError("counter needs at least one page");
  Cluster cluster(cfg);
  CounterRun run;
  run.cluster = &cluster;
  run.scheme = scheme;
  run.trace = &trace;
  run.pages = pages;
  const std::uint32_t procs = cfg.num_procs;
  for (Rank r = 0; r < procs; ++r) {
    Process& p = cluster.proc(r);
    run.data = p.alloc(std::uint64_t{pages} * kPageSize, kPageSize);
    run.counters = p.alloc(std::uint64_t{pages} * 16, kPageSize);
    run.reduce = p.alloc(std::uint64_t{procs} * procs * pages * 16, kPageSize);
  }
  if (scheme == CounterScheme::Aa) {
    for (Rank r = 0; r < procs; ++r) {
      Process& p = cluster.proc(r);
      const CounterRun* rp = &run;
      const auto h = p.register_handler([rp](HandlerContext& ctx) {
        const auto& hd = ctx.record().header;
        const auto page = static_cast<std::uint32_t>((hd.dev_addr - rp->data) >> kPageShift);
        ctx.fao(FaoOp::Sum, 1, rp->slot(page, hd.op_kind));
      });
      PageActions counted;
      counted.r = counted.w = counted.wl = counted.rl = counted.e = true;
      p.assoc_pages(run.data, std::uint64_t{pages} * kPageSize, counted, h);
    }
  }
  for (Rank r = 0; r < procs; ++r) cluster.engine().spawn(counter_body(&run, r), "counter" + std::to_string(r));

  CounterResult res;
  res.metrics = cluster.run();
  for (const auto& t : trace) res.ops += t.size();
  res.extra_ops = res.metrics.remote_ops - res.ops;
  res.counts.puts.assign(procs, std::vector<std::uint64_t>(pages, 0));
  res.counts.gets.assign(procs, std::vector<std::uint64_t>(pages, 0));
  for (Rank r = 0; r < procs; ++r) {
    for (std::uint32_t pg = 0; pg < pages; ++pg) {
      res.counts.puts[r][pg] = cluster.proc(r).load(run.slot(pg, AccessKind::Put));
      res.counts.gets[r][pg] = cluster.proc(r).load(run.slot(pg, AccessKind::Get));
    }
  }
  return res;
}

// ---- get logging ---------------------------------------------------------------

GetlogScheme parse_getlog_scheme(std::string_view s) {
  if (s == "aa") return GetlogScheme::Aa;
  if (s == "rma-sendback") return GetlogScheme::RmaSendback;
  if (s == "no-ft") return GetlogScheme::NoFt;
  throw ConfigError("unknown scheme '" + std::string(s) + "' (expected aa|rma-sendback|no-ft)");
}

std::string to_string(GetlogScheme s) {
  switch (s) {
    case GetlogScheme::Aa: return "AA";
    case GetlogScheme::RmaSendback: return "RMA-sendback";
    case GetlogScheme::NoFt: return "No-FT";
  }
  return "?";
}

namespace {

constexpr std::uint32_t kGetlogPages = 16;

struct LoggedGet {
  Rank source = 0;
  Bytes data;
};

struct GetlogRun {
  Cluster* cluster = nullptr;
  GetlogScheme scheme{};
  std::uint64_t gets = 0;
  std::uint32_t len = 0;
  Addr data = 0;
  Addr sendback = 0;
  std::vector<std::vector<std::pair<Rank, Bytes>>> fetched;  // [source] -> (target, data)
  std::vector<std::vector<LoggedGet>> logged;               // [target], AA handler output
  std::vector<std::vector<std::uint64_t>> sent;             // [source][target] sendback slots used

  Addr sendback_slot(Rank source, std::uint64_t idx) const { return sendback + (source * gets + idx) * len; }
};

Task<> getlog_body(GetlogRun* run, Rank r) {
  Cluster& c = *run->cluster;
  Process* p = &c.proc(r);
  Rng rng(c.config().seed * 1000003 + r);
  const std::uint64_t region = std::uint64_t{kGetlogPages} * kPageSize;
  for (std::uint64_t i = 0; i < run->gets; ++i) {
    const Rank t = other_rank(r, c.size(), rng);
    const Addr addr = run->data + rng.below((region - run->len) / 8 + 1) * 8;
    OpResult got = co_await p->get(t, addr, run->len);
    if (run->scheme == GetlogScheme::RmaSendback) {
      co_await p->rma_put(t, run->sendback_slot(r, run->sent[r][t]++), got.data);
    }
    run->fetched[r].emplace_back(t, std::move(got.data));
  }
  c.touch();
}

}  // namespace

GetlogResult run_getlog(SimConfig cfg, GetlogScheme scheme, std::uint64_t gets_per_proc, std::uint32_t get_bytes) {
  if (get_bytes == 0 || get_bytes > kMaxTransactionBytes || get_bytes % 8 != 0) {
    throw ConfigError("get size must be a multiple of 8 in [8, 4096]");
  }
  if (get_bytes > kGetlogPages * kPageSize) throw ConfigError("get size exceeds the data region");
  const std::uint32_t procs = cfg.num_procs;
  Cluster cluster(cfg);
  GetlogRun run;
  run.cluster = &cluster;
  run.scheme = scheme;
  run.gets = gets_per_proc;
  run.len = get_bytes;
  run.fetched.resize(procs);
  run.logged.resize(procs);
  run.sent.assign(procs, std::vector<std::uint64_t>(procs, 0));
  for (Rank r = 0; r < procs; ++r) {
    Process& p = cluster.proc(r);
    run.data = p.alloc(std::uint64_t{kGetlogPages} * kPageSize, kPageSize);
    run.sendback = p.alloc(std::uint64_t{procs} * gets_per_proc * get_bytes, kPageSize);
    Rng fill(cfg.seed * 7919 + r);
    for (std::uint64_t w = 0; w < kGetlogPages * kPageSize / 8; ++w) p.store(run.data + w * 8, fill.next());
    if (scheme == GetlogScheme::Aa) {
      GetlogRun* rp = &run;
      const auto h = p.register_handler([rp, r](HandlerContext& ctx) {
        const auto& rec = ctx.record();
        ctx.charge(static_cast<std::uint32_t>(ceil_div(rec.payload.size(), 64)));
        rp->logged[r].push_back({DeviceId::unpack(rec.header.device_id).devfn, rec.payload});
      });
      p.assoc_pages(run.data, std::uint64_t{kGetlogPages} * kPageSize, PageActions::logged_get(), h);
    }
  }
  for (Rank r = 0; r < procs; ++r) cluster.engine().spawn(getlog_body(&run, r), "getlog" + std::to_string(r));

  GetlogResult res;
  res.metrics = cluster.run();
  res.ops = gets_per_proc * procs;
  if (scheme == GetlogScheme::NoFt) return res;

  // Replay: per (source, target), the logged values in order must equal the
  // values the source fetched from that target.
  bool ok = true;
  for (Rank s = 0; s < procs; ++s) {
    for (Rank t = 0; t < procs; ++t) {
      std::vector<Bytes> want;
      for (const auto& [target, data] : run.fetched[s]) {
        if (target == t) want.push_back(data);
      }
      std::vector<Bytes> got;
      if (scheme == GetlogScheme::Aa) {
        for (const auto& e : run.logged[t]) {
          if (e.source == s) got.push_back(e.data);
        }
      } else {
        for (std::uint64_t i = 0; i < run.sent[s][t]; ++i) {
          Bytes b(get_bytes);
          cluster.proc(t).read(run.sendback_slot(s, i), b);
          got.push_back(std::move(b));
        }
      }
      ok = ok && got == want;
    }
  }
  res.replay_ok = ok;
  return res;
}

// ---- incremental checkpoint ----------------------------------------------------

CheckpointTrace make_checkpoint_trace(std::uint32_t procs, std::uint32_t pages, std::uint32_t epochs,
                                      std::uint64_t writes_per_proc, Rng& rng) {
  CheckpointTrace t;
  t.pages = pages;
  t.remote.assign(epochs, std::vector<std::vector<RemoteWrite>>(procs));
  t.local_dirty.assign(epochs, std::vector<std::set<std::uint32_t>>(procs));
  for (std::uint32_t e = 0; e < epochs; ++e) {
    for (Rank r = 0; r < procs; ++r) {
      // A skewed page choice so that pages repeat within an epoch.
      const std::uint32_t hot = static_cast<std::uint32_t>(1 + rng.below(pages));
      for (std::uint64_t i = 0; i < writes_per_proc; ++i) {
        RemoteWrite w;
        w.target = other_rank(r, procs, rng);
        w.page = static_cast<std::uint32_t>(rng.below(hot));
        w.offset = static_cast<std::uint32_t>(rng.below(kPageSize / 8) * 8);
        t.remote[e][r].push_back(w);
      }
      const std::uint64_t locals = rng.below(4);
      for (std::uint64_t i = 0; i < locals; ++i) t.local_dirty[e][r].insert(static_cast<std::uint32_t>(rng.below(pages)));
    }
  }
  return t;
}

DirtySets checkpoint_oracle(const CheckpointTrace& trace, std::uint32_t procs) {
  DirtySets d(trace.remote.size(), std::vector<std::set<std::uint32_t>>(procs));
  for (std::size_t e = 0; e < trace.remote.size(); ++e) {
    for (const auto& writes : trace.remote[e]) {
      for (const auto& w : writes) d[e][w.target].insert(w.page);
    }
    for (Rank r = 0; r < procs; ++r) d[e][r].insert(trace.local_dirty[e][r].begin(), trace.local_dirty[e][r].end());
  }
  return d;
}

namespace {

struct CheckpointRun {
  Cluster* cluster = nullptr;
  const CheckpointTrace* trace = nullptr;
  Addr region = 0;
  std::vector<std::set<std::uint32_t>> current;  // [rank], filled by the handler
  DirtySets dirty;
};

Task<> checkpoint_body(CheckpointRun* run, Rank r) {
  Cluster& c = *run->cluster;
  Process* p = &c.proc(r);
  for (std::size_t e = 0; e < run->trace->remote.size(); ++e) {
    std::uint64_t v = 0;
    for (const auto& w : run->trace->remote[e][r]) {
      co_await p->put(w.target, run->region + std::uint64_t{w.page} * kPageSize + w.offset, word_bytes(++v));
    }
    for (Rank t = 0; t < c.size(); ++t) co_await p->flush(t);
    co_await c.barrier().arrive();
    // Checkpoint: take the dirty set and start the next epoch empty.
    auto taken = std::exchange(run->current[r], {});
    const auto& local = run->trace->local_dirty[e][r];
    taken.insert(local.begin(), local.end());
    run->dirty[e][r] = std::move(taken);
    co_await c.barrier().arrive();
  }
  c.touch();
}

}  // namespace

CheckpointResult run_checkpoint(SimConfig cfg, const CheckpointTrace& trace) {
  const std::uint32_t procs = cfg.num_procs;
  for (const auto& epoch : trace.remote) {
    if (epoch.size() != procs) throw ConfigError("trace rank count does not match num_procs");
  }
  Cluster cluster(cfg);
  CheckpointRun run;
  run.cluster = &cluster;
  run.trace = &trace;
  run.current.resize(procs);
  run.dirty.assign(trace.remote.size(), std::vector<std::set<std::uint32_t>>(procs));
  const std::uint64_t bytes = std::uint64_t{trace.pages} * kPageSize;
  for (Rank r = 0; r < procs; ++r) run.region = cluster.proc(r).alloc(bytes, kPageSize);
  for (Rank r = 0; r < procs; ++r) {
    Process& p = cluster.proc(r);
    CheckpointRun* rp = &run;
    const auto h = p.register_handler([rp, r](HandlerContext& ctx) {
      rp->current[r].insert(static_cast<std::uint32_t>((ctx.record().header.dev_addr - rp->region) >> kPageShift));
    });
    p.assoc_pages(run.region, bytes, PageActions::counted_put(), h);
  }
  for (Rank r = 0; r < procs; ++r) cluster.engine().spawn(checkpoint_body(&run, r), "checkpoint" + std::to_string(r));
  CheckpointResult res;
  res.metrics = cluster.run();
  for (const auto& epoch : trace.remote) {
    for (const auto& w : epoch) res.ops += w.size();
  }
  res.dirty = std::move(run.dirty);
  return res;
}

// ---- sample sort -----------------------------------------------------------------

namespace {

struct SortRun {
  Cluster* cluster = nullptr;
  GetlogScheme scheme{};
  std::uint64_t n = 0;  // words per rank
  Addr data = 0;
  Addr samples = 0;
  Addr offsets = 0;
  Addr sendback = 0;
  std::vector<std::vector<std::uint64_t>> input;
  std::vector<std::vector<std::uint64_t>> output;
};

std::vector<std::uint64_t> words_of(const Bytes& b) {
  std::vector<std::uint64_t> w(b.size() / 8);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = read_word(&b[i * 8]);
  return w;
}

Task<> sort_body(SortRun* run, Rank r) {
  Cluster& c = *run->cluster;
  Process* p = &c.proc(r);
  const std::uint32_t procs = c.size();
  const std::uint64_t n = run->n;

  std::vector<std::uint64_t> v = run->input[r];
  std::sort(v.begin(), v.end());
  co_await p->compute(sort_cost(n));
  for (std::uint64_t i = 0; i < n; ++i) p->store(run->data + i * 8, v[i]);
  for (std::uint32_t i = 1; i < procs; ++i) p->store(run->samples + (i - 1) * 8, v[i * n / procs]);
  co_await c.barrier().arrive();

  std::vector<std::uint64_t> all;
  if (procs > 1) {
    for (Rank i = 0; i < procs; ++i) {
      const OpResult s = co_await p->get(i, run->samples, (procs - 1) * 8);
      const auto w = words_of(s.data);
      all.insert(all.end(), w.begin(), w.end());
    }
  }
  std::sort(all.begin(), all.end());
  std::vector<std::uint64_t> off(procs + 1, 0);
  for (std::uint32_t j = 1; j < procs; ++j) {
    const std::uint64_t splitter = all[j * (procs - 1)];
    off[j] = static_cast<std::uint64_t>(std::lower_bound(v.begin(), v.end(), splitter) - v.begin());
  }
  off[procs] = n;
  for (std::uint32_t j = 0; j <= procs; ++j) p->store(run->offsets + j * 8, off[j]);
  co_await c.barrier().arrive();

  // Exchange: fetch bucket r from every rank.
  std::vector<std::uint64_t> mine;
  for (std::uint32_t k = 0; k < procs; ++k) {
    const Rank i = static_cast<Rank>((r + k) % procs);
    const OpResult range = co_await p->get(i, run->offsets + r * 8, 16);
    const std::uint64_t lo = read_word(&range.data[0]) * 8;
    const std::uint64_t hi = read_word(&range.data[8]) * 8;
    for (std::uint64_t pos = lo; pos < hi; pos += kMaxTransactionBytes) {
      const auto len = static_cast<std::uint32_t>(std::min<std::uint64_t>(kMaxTransactionBytes, hi - pos));
      OpResult chunk = co_await p->get(i, run->data + pos, len);
      if (run->scheme == GetlogScheme::RmaSendback) {
        co_await p->rma_put(i, run->sendback + r * n * 8 + (pos - lo), chunk.data);
      }
      const auto w = words_of(chunk.data);
      mine.insert(mine.end(), w.begin(), w.end());
    }
  }
  std::sort(mine.begin(), mine.end());
  co_await p->compute(sort_cost(mine.size()));
  run->output[r] = std::move(mine);
  c.touch();
}

}  // namespace

SortResult run_sort(SimConfig cfg, GetlogScheme scheme, std::uint64_t total_words) {
  const std::uint32_t procs = cfg.num_procs;
  if (total_words == 0 || total_words % procs != 0) throw ConfigError("sort size must be a positive multiple of num_procs");
  Cluster cluster(cfg);
  SortRun run;
  run.cluster = &cluster;
  run.scheme = scheme;
  run.n = total_words / procs;
  run.output.resize(procs);
  const std::uint64_t data_bytes = round_up(run.n * 8, kPageSize);
  for (Rank r = 0; r < procs; ++r) {
    Process& p = cluster.proc(r);
    run.data = p.alloc(data_bytes, kPageSize);
    run.samples = p.alloc(std::uint64_t{procs} * 8, kPageSize);
    run.offsets = p.alloc(std::uint64_t{procs + 1} * 8, kPageSize);
    run.sendback = p.alloc(std::uint64_t{procs} * run.n * 8, kPageSize);
    Rng rng(cfg.seed * 104729 + r);
    std::vector<std::uint64_t> in(run.n);
    for (auto& w : in) w = rng.next();
    run.input.push_back(std::move(in));
    if (scheme == GetlogScheme::Aa) {
      const auto h = p.register_handler([](HandlerContext& ctx) {
        ctx.charge(static_cast<std::uint32_t>(ceil_div(ctx.record().payload.size(), 64)));
      });
      p.assoc_pages(run.data, data_bytes, PageActions::logged_get(), h);
    }
  }
  for (Rank r = 0; r < procs; ++r) cluster.engine().spawn(sort_body(&run, r), "sort" + std::to_string(r));
  SortResult res;
  res.metrics = cluster.run();
  res.ops = total_words;

  std::vector<std::uint64_t> expect;
  for (const auto& in : run.input) expect.insert(expect.end(), in.begin(), in.end());
  std::sort(expect.begin(), expect.end());
  std::vector<std::uint64_t> got;
  for (const auto& out : run.output) got.insert(got.end(), out.begin(), out.end());
  res.sorted = got == expect;
  return res;
}

// ---- put stream ----------------------------------------------------------------

namespace {

constexpr std::uint64_t kStreamPages = 64;

Task<> stream_body(Cluster* c, Addr region, std::uint64_t puts, std::uint32_t bytes) {
  Process* p = &c->proc(0);
  const std::uint64_t span = kStreamPages * kPageSize;
  for (std::uint64_t i = 0; i < puts; ++i) {
    const Addr dst = region + (i * bytes) % span;
    co_await p->put(1, dst, Bytes(bytes, static_cast<std::uint8_t>(i)));
  }
  co_await p->rma_flush(1);
  c->touch();
}

}  // namespace

StreamResult run_stream(SimConfig cfg, std::uint64_t puts, std::uint32_t bytes) {
  if (bytes == 0 || bytes > kMaxTransactionBytes || (kStreamPages * kPageSize) % bytes != 0) {
    throw ConfigError("stream put size must divide the 256 KiB region and be at most 4096 bytes");
  }
  cfg.num_procs = 2;
  Cluster cluster(cfg);
  Addr region = 0;
  for (Rank r = 0; r < 2; ++r) region = cluster.proc(r).alloc(kStreamPages * kPageSize, kPageSize);
  cluster.engine().spawn(stream_body(&cluster, region, puts, bytes), "stream");
  StreamResult res;
  res.metrics = cluster.run();
  res.bytes = puts * bytes;
  res.bandwidth_bytes_per_ns =
      res.metrics.sim_time_ns == 0 ? 0 : static_cast<double>(res.bytes) / static_cast<double>(res.metrics.sim_time_ns);
  return res;
}

// ---- IOTLB sweep -----------------------------------------------------------------

std::vector<SweepPoint> run_iotlb_sweep(const SimConfig& base, std::uint64_t keys_per_source) {
  constexpr std::uint32_t kSources = 16;
  SimConfig cfg = base;
  cfg.num_procs = kSources + 1;
  cfg.vol_size = 1ull << 18;
  Rng rng(cfg.seed);
  DhtStream stream;
  stream.phases.emplace_back(cfg.num_procs);
  // One popularity ranking shared by all sources, dealt round-robin; each
  // source replays its share twice.
  const auto keys = make_zipf_keys(keys_per_source * kSources, 0, cfg.num_procs, cfg.vol_size, rng);
  for (int loop = 0; loop < 2; ++loop) {
    for (std::size_t i = 0; i < keys.size(); ++i) {
      stream.phases[0][1 + i % kSources].push_back({DhtOp::Kind::Insert, keys[i]});
    }
  }
  std::vector<SweepPoint> points;
  for (const std::uint32_t size : {16u, 32u, 64u, 128u}) {
    for (const std::uint32_t assoc : {1u, 2u, 4u, 0u}) {
      for (const auto policy : {ReplacementPolicy::Lru, ReplacementPolicy::Random}) {
        cfg.iotlb_size = size;
        cfg.iotlb_assoc = assoc;
        cfg.iotlb_policy = policy;
        const DhtResult r = run_dht(cfg, DhtScheme::AaPoll, stream);
        SweepPoint pt;
        pt.size = size;
        pt.assoc = assoc;
        pt.policy = policy;
        pt.metrics = r.metrics;
        pt.ops = r.ops;
        const std::uint64_t lookups = r.metrics.iotlb_hits + r.metrics.iotlb_misses;
        pt.hit_rate = lookups == 0 ? 0 : static_cast<double>(r.metrics.iotlb_hits) / static_cast<double>(lookups);
        pt.insert_rate = static_cast<double>(r.ops) * 1e9 / static_cast<double>(r.metrics.sim_time_ns);
        points.push_back(pt);
      }
    }
  }
  return points;
}

}  // namespace aasim
