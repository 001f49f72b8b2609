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

#include "aasim/dht.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <set>
#include <unordered_set>

#include "aasim/runtime.hpp"

namespace aasim {

DhtScheme parse_dht_scheme(std::string_view s) {
  if (s == "aa-int") return DhtScheme::AaInt;
  if (s == "aa-poll") return DhtScheme::AaPoll;
  if (s == "aa-sp") return DhtScheme::AaSp;
  if (s == "rma") return DhtScheme::Rma;
  if (s == "am") return DhtScheme::Am;
  throw ConfigError("unknown dht scheme '" + std::string(s) + "' (expected aa-int|aa-poll|aa-sp|rma|am)");
}

std::string to_string(DhtScheme s) {
  switch (s) {
    case DhtScheme::AaInt: return "AA-Int";
    case DhtScheme::AaPoll: return "AA-Poll";
    case DhtScheme::AaSp: return "AA-SP";
    case DhtScheme::Rma: return "RMA";
    case DhtScheme::Am: return "AM";
  }
  return "?";
}

bool is_active(DhtScheme s) { return s == DhtScheme::AaInt || s == DhtScheme::AaPoll || s == DhtScheme::AaSp; }

// ---- hashing and key generation ---------------------------------------------

std::uint64_t DhtHash::unmix(std::uint64_t h) {
  // Newton iteration for the inverse of an odd number modulo 2^64.
  std::uint64_t inv = kMul;
  for (int i = 0; i < 6; ++i) inv *= 2 - kMul * inv;
  return h * inv;
}

std::uint64_t DhtHash::make_key(Rank owner, std::uint64_t bucket, unsigned table_bits, std::uint32_t procs,
                                Rng& rng) {
  if (table_bits == 0 || table_bits > 32) throw ConfigError("table size must be between 2 and 2^32 buckets");
  const unsigned mid_bits = 32 - table_bits;
  for (;;) {
    const std::uint64_t lo = rng.below((1ull << 32) / procs) * procs + owner;
    const std::uint64_t mid = mid_bits == 0 ? 0 : rng.below(1ull << mid_bits);
    const std::uint64_t h = bucket << (64 - table_bits) | mid << 32 | lo;
    if (h != 0) return unmix(h);
  }
}

unsigned table_bits_for(std::uint64_t vol_size) { return static_cast<unsigned>(std::countr_zero(vol_size / 2)); }

std::vector<std::uint64_t> make_insert_keys(std::uint64_t n, std::uint32_t procs, std::uint64_t vol_size,
                                            double r_cols, Rng& rng) {
  const unsigned bits = table_bits_for(vol_size);
  const std::uint64_t table = vol_size / 2;
  std::uint64_t reuse = n == 0 ? 0 : static_cast<std::uint64_t>(std::llround(static_cast<double>(n) * r_cols));
  if (n > 0) reuse = std::min(reuse, n - 1);
  if (n - reuse > std::uint64_t{procs} * table) throw ConfigError("more distinct buckets requested than exist");

  std::vector<std::uint64_t> order(n > 0 ? n - 1 : 0);
  for (std::uint64_t i = 0; i < order.size(); ++i) order[i] = i + 1;
  rng.shuffle(order);
  std::vector<bool> is_reuse(n, false);
  for (std::uint64_t i = 0; i < reuse; ++i) is_reuse[order[i]] = true;

  std::vector<std::pair<Rank, std::uint64_t>> used;
  std::unordered_set<std::uint64_t> used_ids;
  std::unordered_set<std::uint64_t> seen;
  std::vector<std::uint64_t> keys;
  keys.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    std::pair<Rank, std::uint64_t> slot;
    if (is_reuse[i]) {
      slot = used[rng.below(used.size())];
    } else {
      do {
        slot = {static_cast<Rank>(rng.below(procs)), rng.below(table)};
      } while (!used_ids.insert(slot.first * table + slot.second).second);
      used.push_back(slot);
    }
    std::uint64_t key = 0;
    do {
      key = DhtHash::make_key(slot.first, slot.second, bits, procs, rng);
    } while (!seen.insert(key).second);
    keys.push_back(key);
  }
  return keys;
}

std::vector<std::uint64_t> make_zipf_keys(std::uint64_t n, Rank owner, std::uint32_t procs, std::uint64_t vol_size,
                                          Rng& rng) {
  const unsigned bits = table_bits_for(vol_size);
  const std::uint64_t table = vol_size / 2;
  const std::uint64_t per_page = kPageSize / 16;
  const std::uint64_t pages = std::max<std::uint64_t>(1, table / per_page);
  std::vector<std::uint64_t> perm(pages);
  for (std::uint64_t i = 0; i < pages; ++i) perm[i] = i;
  rng.shuffle(perm);
  std::vector<double> cdf(pages);
  double sum = 0;
  for (std::uint64_t i = 0; i < pages; ++i) cdf[i] = sum += 1.0 / static_cast<double>(i + 1);
  std::unordered_set<std::uint64_t> seen;
  std::vector<std::uint64_t> keys;
  keys.reserve(n);
  while (keys.size() < n) {
    const double u = rng.uniform() * sum;
    const auto rank = static_cast<std::uint64_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    const std::uint64_t page = perm[std::min(rank, pages - 1)];
    const std::uint64_t bucket = std::min(page * per_page + rng.below(per_page), table - 1);
    const std::uint64_t key = DhtHash::make_key(owner, bucket, bits, procs, rng);
    if (seen.insert(key).second) keys.push_back(key);
  }
  return keys;
}

// ---- streams -----------------------------------------------------------------

std::uint64_t DhtStream::count(DhtOp::Kind kind) const {
  std::uint64_t n = 0;
  for (const auto& phase : phases) {
    for (const auto& ops : phase) {
      n += static_cast<std::uint64_t>(std::count_if(ops.begin(), ops.end(), [&](const DhtOp& o) { return o.kind == kind; }));
    }
  }
  return n;
}

DhtStream insert_stream(const std::vector<std::uint64_t>& keys, std::uint32_t procs) {
  DhtStream s;
  s.phases.emplace_back(procs);
  for (std::size_t i = 0; i < keys.size(); ++i) s.phases[0][i % procs].push_back({DhtOp::Kind::Insert, keys[i]});
  return s;
}

DhtStream mixed_stream(std::uint64_t ops, std::uint32_t procs, std::uint64_t vol_size, double r_cols, Rng& rng) {
  constexpr std::uint64_t kInsertBlock = 1500;
  constexpr std::uint64_t kDeleteBlock = 500;
  const std::uint64_t blocks = ceil_div(ops, kInsertBlock + kDeleteBlock);
  std::uint64_t inserts = 0;
  std::uint64_t deletes = 0;
  for (std::uint64_t b = 0, left = ops; b < blocks; ++b) {
    const std::uint64_t i = std::min(left, kInsertBlock);
    left -= i;
    const std::uint64_t d = std::min(left, kDeleteBlock);
    left -= d;
    inserts += i;
    deletes += d;
  }
  const auto keys = make_insert_keys(inserts, procs, vol_size, r_cols, rng);
  const std::unordered_set<std::uint64_t> key_set(keys.begin(), keys.end());
  const unsigned bits = table_bits_for(vol_size);

  DhtStream s;
  std::vector<std::uint64_t> live;
  std::size_t next_key = 0;
  for (std::uint64_t left = ops; left > 0;) {
    const std::uint64_t i = std::min(left, kInsertBlock);
    left -= i;
    auto& ins = s.phases.emplace_back(procs);
    for (std::uint64_t k = 0; k < i; ++k) {
      const std::uint64_t key = keys[next_key++];
      ins[k % procs].push_back({DhtOp::Kind::Insert, key});
      live.push_back(key);
    }
    const std::uint64_t d = std::min(left, kDeleteBlock);
    left -= d;
    if (d == 0) break;
    auto& del = s.phases.emplace_back(procs);
    for (std::uint64_t k = 0; k < d; ++k) {
      std::uint64_t key = 0;
      if (rng.below(8) == 0 || live.empty()) {
        do {
          key = DhtHash::make_key(static_cast<Rank>(rng.below(procs)), rng.below(vol_size / 2), bits, procs, rng);
        } while (key_set.count(key) != 0);
      } else {
        const std::size_t j = rng.below(live.size());
        key = live[j];
        live[j] = live.back();
        live.pop_back();
      }
      del[k % procs].push_back({DhtOp::Kind::Delete, key});
    }
  }
  return s;
}

// ---- sequential oracle -------------------------------------------------------

LocalVolume::LocalVolume(std::uint64_t vol_size)
    : table_size_(vol_size / 2),
      table_bits_(table_bits_for(vol_size)),
      cells_(vol_size),
      last_ptr_(vol_size / 2, 0),
      next_free_(vol_size / 2) {}

bool LocalVolume::insert(std::uint64_t key) {
  const std::uint64_t pos = DhtHash::bucket(key, table_bits_);
  if (cells_[pos].elem == 0) {
    cells_[pos].elem = key;
    return false;
  }
  if (next_free_ >= cells_.size()) throw SimError("oracle volume heap overflow");
  const std::uint64_t free = next_free_++;
  cells_[free].elem = key;
  const std::uint64_t prev = std::exchange(last_ptr_[pos], free);
  if (cells_[pos].ptr == 0) {
    cells_[pos].ptr = free;
  } else {
    cells_[prev].ptr = free;
  }
  return true;
}

std::uint64_t LocalVolume::remove(std::uint64_t key) {
  std::uint64_t n = 0;
  const std::uint64_t pos = DhtHash::bucket(key, table_bits_);
  if (cells_[pos].elem == key) {
    cells_[pos].elem = 0;
    ++n;
  }
  for (std::uint64_t i = table_size_; i < next_free_; ++i) {
    if (cells_[i].elem == key) {
      cells_[i].elem = 0;
      ++n;
    }
  }
  return n;
}

std::uint64_t LocalVolume::lookup(std::uint64_t key) const { return cells_[DhtHash::bucket(key, table_bits_)].elem; }

std::vector<std::uint64_t> LocalVolume::contents() const {
  std::vector<std::uint64_t> out;
  for (std::uint64_t i = 0; i < next_free_; ++i) {
    if (cells_[i].elem != 0) out.push_back(cells_[i].elem);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::vector<std::uint64_t>> dht_oracle(const DhtStream& stream, std::uint32_t procs,
                                                   std::uint64_t vol_size) {
  std::vector<LocalVolume> vols(procs, LocalVolume(vol_size));
  for (const auto& phase : stream.phases) {
    for (const auto& ops : phase) {
      for (const auto& op : ops) {
        auto& v = vols[DhtHash::owner(op.key, procs)];
        if (op.kind == DhtOp::Kind::Insert) v.insert(op.key);
        if (op.kind == DhtOp::Kind::Delete) v.remove(op.key);
      }
    }
  }
  std::vector<std::vector<std::uint64_t>> out;
  for (const auto& v : vols) out.push_back(v.contents());
  return out;
}

// ---- simulated variants ------------------------------------------------------

namespace {

struct Layout {
  Addr elems = 0;
  Addr last_ptr = 0;
  Addr next_free = 0;
  Addr del_page = 0;
  std::uint64_t vol = 0;
  std::uint64_t table = 0;
  unsigned bits = 0;

  Addr cell(std::uint64_t i) const { return elems + i * 16; }
};

struct Run {
  Cluster* cluster = nullptr;
  DhtScheme scheme{};
  const DhtStream* stream = nullptr;
  Layout layout;
  DhtResult* result = nullptr;
};

[[noreturn]] void heap_overflow(Rank r, std::uint64_t free) {
  throw SimError("heap overflow in the volume of rank " + std::to_string(r) + " (next free cell " +
                 std::to_string(free) + "); resize the volume (vol_size)");
}

// Local insert, executed by the owner.
void local_insert(HandlerContext& ctx, const Layout& l, std::uint64_t key, Run& run) {
  const std::uint64_t pos = DhtHash::bucket(key, l.bits);
  const Addr cell = l.cell(pos);
  if (ctx.cas(cell, 0, key) == 0) return;
  ++run.result->colliding_inserts;
  ++run.cluster->metrics().collisions;
  const std::uint64_t free = ctx.fao(FaoOp::Sum, 1, l.next_free);
  if (free >= l.vol) heap_overflow(ctx.process().rank(), free);
  ctx.store(l.cell(free), key);
  const std::uint64_t prev = ctx.fao(FaoOp::Replace, free, l.last_ptr + pos * 8);
  if (ctx.cas(cell + 8, 0, free) != 0) ctx.store(l.cell(prev) + 8, free);
}

void local_delete(HandlerContext& ctx, const Layout& l, std::uint64_t key) {
  const Addr cell = l.cell(DhtHash::bucket(key, l.bits));
  if (ctx.load(cell) == key) ctx.store(cell, 0);
  const std::uint64_t end = std::min(ctx.load(l.next_free), l.vol);
  for (std::uint64_t i = l.table; i < end; ++i) {
    if (ctx.load(l.cell(i)) == key) ctx.store(l.cell(i), 0);
  }
}

Task<> rma_insert(Process* p, Run* run, std::uint64_t key) {
  const Layout& l = run->layout;
  const Rank t = DhtHash::owner(key, run->cluster->size());
  const std::uint64_t pos = DhtHash::bucket(key, l.bits);
  const Addr cell = l.cell(pos);
  const std::uint64_t ops0 = p->ops_issued();
  if (co_await p->cas(t, cell, 0, key) != 0) {
    ++run->result->colliding_inserts;
    ++run->cluster->metrics().collisions;
    const std::uint64_t free = co_await p->fao(t, FaoOp::Sum, 1, l.next_free);
    if (free >= l.vol) heap_overflow(t, free);
    co_await p->rma_put(t, l.cell(free), word_bytes(key));
    co_await p->rma_flush(t);
    const std::uint64_t prev = co_await p->fao(t, FaoOp::Replace, free, l.last_ptr + pos * 8);
    if (co_await p->cas(t, cell + 8, 0, free) != 0) {
      co_await p->rma_put(t, l.cell(prev) + 8, word_bytes(free));
      co_await p->rma_flush(t);
    }
    const std::uint64_t n = p->ops_issued() - ops0;
    auto& r = *run->result;
    r.min_ops_colliding = r.min_ops_colliding == 0 ? n : std::min(r.min_ops_colliding, n);
    r.max_ops_colliding = std::max(r.max_ops_colliding, n);
  }
  run->result->max_ops_per_insert = std::max(run->result->max_ops_per_insert, p->ops_issued() - ops0);
}

Task<> rma_delete(Process* p, Run* run, std::uint64_t key) {
  const Layout& l = run->layout;
  const Rank t = DhtHash::owner(key, run->cluster->size());
  co_await p->cas(t, l.cell(DhtHash::bucket(key, l.bits)), key, 0);
  const std::uint64_t end = std::min((co_await p->rma_get(t, l.next_free, 8)).word(), l.vol);
  constexpr std::uint64_t kChunk = kMaxTransactionBytes / 16;
  for (std::uint64_t base = l.table; base < end; base += kChunk) {
    const std::uint64_t n = std::min(kChunk, end - base);
    const OpResult chunk = co_await p->rma_get(t, l.cell(base), static_cast<std::uint32_t>(n * 16));
    for (std::uint64_t i = 0; i < n; ++i) {
      if (read_word(&chunk.data[i * 16]) == key) co_await p->cas(t, l.cell(base + i), key, 0);
    }
  }
}

Task<> do_op(Process* p, Run* run, DhtOp op) {
  const Layout& l = run->layout;
  const Rank t = DhtHash::owner(op.key, run->cluster->size());
  const Addr cell = l.cell(DhtHash::bucket(op.key, l.bits));
  switch (op.kind) {
    case DhtOp::Kind::Lookup: {
      const OpResult r = co_await p->rma_get(t, cell, 8);
      run->result->lookups[p->rank()].push_back(r.word());
      co_return;
    }
    case DhtOp::Kind::Insert:
      if (run->scheme == DhtScheme::Rma) {
        co_await rma_insert(p, run, op.key);
      } else if (run->scheme == DhtScheme::Am) {
        Bytes msg = word_bytes(0);
        const Bytes k = word_bytes(op.key);
        msg.insert(msg.end(), k.begin(), k.end());
        co_await p->am_send(t, std::move(msg));
      } else {
        const std::uint64_t ops0 = p->ops_issued();
        co_await p->put(t, cell, word_bytes(op.key));
        run->result->max_ops_per_insert = std::max(run->result->max_ops_per_insert, p->ops_issued() - ops0);
      }
      co_return;
    case DhtOp::Kind::Delete:
      if (run->scheme == DhtScheme::Rma) {
        co_await rma_delete(p, run, op.key);
      } else if (run->scheme == DhtScheme::Am) {
        Bytes msg = word_bytes(1);
        const Bytes k = word_bytes(op.key);
        msg.insert(msg.end(), k.begin(), k.end());
        co_await p->am_send(t, std::move(msg));
      } else {
        co_await p->put(t, l.del_page, word_bytes(op.key));
      }
      co_return;
  }
}

Task<> rank_body(Run* run, Rank r) {
  Cluster& c = *run->cluster;
  Process* p = &c.proc(r);
  const double r_comp = c.config().r_comp;
  Nanos compute = 0;
  bool calibrated = r_comp <= 0.0;
  const auto& phases = run->stream->phases;
  for (std::size_t ph = 0; ph < phases.size(); ++ph) {
    const auto& ops = phases[ph][r];
    std::size_t i = 0;
    if (!calibrated) {
      // Warm-up: mean communication time per op without compute.
      const std::size_t warm = std::clamp<std::size_t>(ops.size() / 10, std::min<std::size_t>(1, ops.size()), 100);
      const Nanos t0 = c.engine().now();
      for (; i < warm; ++i) co_await do_op(p, run, ops[i]);
      if (warm > 0) {
        const double mean = static_cast<double>(c.engine().now() - t0) / static_cast<double>(warm);
        compute = static_cast<Nanos>(std::llround(r_comp / (1.0 - r_comp) * mean));
        calibrated = true;
      }
      if (r == 0) run->result->compute_ns = compute;
    }
    for (; i < ops.size(); ++i) {
      if (compute > 0) co_await p->compute(compute);
      co_await do_op(p, run, ops[i]);
    }
    if (phases.size() > 1) {
      if (is_active(run->scheme)) {
        for (Rank t = 0; t < c.size(); ++t) co_await p->flush(t);
      }
      co_await c.barrier().arrive();
    }
  }
  c.touch();
}

}  // namespace

DhtResult run_dht(SimConfig cfg, DhtScheme scheme, const DhtStream& stream) {
  switch (scheme) {
    case DhtScheme::AaInt: cfg.notification = NotificationMode::Interrupt; break;
    case DhtScheme::AaPoll: cfg.notification = NotificationMode::Poll; break;
    case DhtScheme::AaSp: cfg.notification = NotificationMode::Scratchpad; break;
    default: break;
  }
  const std::uint32_t procs = cfg.num_procs;
  for (const auto& phase : stream.phases) {
    if (phase.size() != procs) throw ConfigError("stream rank count does not match num_procs");
  }
  if (scheme == DhtScheme::Am && stream.phases.size() > 1) {
    throw ConfigError("the AM variant has no flush and supports single-phase streams only");
  }

  Cluster cluster(cfg);
  DhtResult result;
  result.lookups.resize(procs);
  Run run;
  run.cluster = &cluster;
  run.scheme = scheme;
  run.stream = &stream;
  run.result = &result;

  Layout& l = run.layout;
  l.vol = cfg.vol_size;
  l.table = cfg.vol_size / 2;
  l.bits = table_bits_for(cfg.vol_size);
  for (Rank r = 0; r < procs; ++r) {
    Process& p = cluster.proc(r);
    Layout mine = l;
    mine.elems = p.alloc(l.vol * 16, kPageSize);
    mine.last_ptr = p.alloc(l.table * 8, kPageSize);
    mine.next_free = p.alloc(kPageSize, kPageSize);
    mine.del_page = p.alloc(kPageSize, kPageSize);
    if (r > 0 && (mine.elems != l.elems || mine.del_page != l.del_page)) throw SimError("asymmetric volume layout");
    l = mine;
    p.store(l.next_free, l.table);
  }
  for (Rank r = 0; r < procs; ++r) {
    Process& p = cluster.proc(r);
    const Layout lay = l;
    Run* rp = &run;
    if (is_active(scheme)) {
      const auto ins = p.register_handler([lay, rp](HandlerContext& ctx) {
        local_insert(ctx, lay, ctx.record().word(0), *rp);
      });
      const auto del = p.register_handler([lay](HandlerContext& ctx) { local_delete(ctx, lay, ctx.record().word(0)); });
      p.assoc_pages(l.elems, l.table * 16, PageActions::active_put(), ins);
      p.assoc_page(l.del_page, PageActions::active_put(), del);
    } else if (scheme == DhtScheme::Am) {
      p.set_am_handler([lay, rp](HandlerContext& ctx) {
        const std::uint64_t kind = ctx.record().word(0);
        const std::uint64_t key = ctx.record().word(1);
        if (kind == 0) {
          local_insert(ctx, lay, key, *rp);
        } else {
          local_delete(ctx, lay, key);
        }
      });
    }
  }
  for (Rank r = 0; r < procs; ++r) cluster.engine().spawn(rank_body(&run, r), "dht-rank" + std::to_string(r));
  result.metrics = cluster.run();

  for (Rank r = 0; r < procs; ++r) {
    Process& p = cluster.proc(r);
    std::vector<std::uint64_t> v;
    const std::uint64_t end = std::min(p.load(l.next_free), l.vol);
    for (std::uint64_t i = 0; i < end; ++i) {
      const std::uint64_t e = p.load(l.cell(i));
      if (e != 0) v.push_back(e);
    }
    std::sort(v.begin(), v.end());
    result.volumes.push_back(std::move(v));
  }
  result.ops = stream.count(DhtOp::Kind::Insert) + stream.count(DhtOp::Kind::Delete) +
               stream.count(DhtOp::Kind::Lookup);
  return result;
}

}  // namespace aasim
