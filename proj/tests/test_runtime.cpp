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

// Process-level remote operations, active pages and log consumption.

#include <vector>

#include "aasim/runtime.hpp"
#include "doctest.h"

using namespace aasim;

namespace {

struct Seen {
  std::vector<std::uint64_t> words;
  std::uint64_t get_value = 0;
  std::uint64_t cas_old = 0;
  std::uint64_t fao_old = 0;
  std::uint64_t after_flush = 0;
  TlpStatus blocked_status = TlpStatus::Success;
};

Task<> client(Cluster* c, Addr plain, Addr active, Addr locked, Seen* s) {
  Process& p = c->proc(0);
  co_await p.put_word(1, plain, 11);
  s->get_value = (co_await p.get(1, plain, 8)).word();
  s->cas_old = co_await p.cas(1, plain, 11, 12);
  s->fao_old = co_await p.fao(1, FaoOp::Sum, 5, plain);
  for (std::uint64_t v = 1; v <= 4; ++v) co_await p.put_word(1, active + 8 * v, v * 100);
  co_await p.flush(1);
  s->after_flush = c->proc(1).handler_invocations();
  s->blocked_status = (co_await p.get(1, locked, 8)).status;
}

Seen run_basic(NotificationMode mode) {
  SimConfig cfg;
  cfg.num_procs = 2;
  cfg.notification = mode;
  Cluster cluster(cfg);
  Addr plain = 0;
  Addr active = 0;
  Addr locked = 0;
  Seen seen;
  for (Rank r = 0; r < 2; ++r) {
    Process& p = cluster.proc(r);
    plain = p.alloc(kPageSize, kPageSize);
    active = p.alloc(kPageSize, kPageSize);
    const auto h = p.register_handler([&seen](HandlerContext& ctx) { seen.words.push_back(ctx.record().word()); });
    p.assoc_page(active, PageActions::active_put(), h);
    locked = p.alloc(kPageSize, kPageSize);
    p.assoc_page(locked, PageActions{false, false, false, false, false, false, false}, h);
  }
  cluster.engine().spawn(client(&cluster, plain, active, locked, &seen), "client");
  const Metrics m = cluster.run();
  CHECK(cluster.proc(1).load(plain) == 17);
  CHECK(cluster.proc(1).load(active + 8) == 0);  // active puts have no memory effect
  CHECK(m.records_consumed == 4);
  CHECK(m.sim_time_ns > 0);
  return seen;
}

}  // namespace

TEST_SUITE("runtime") {
  TEST_CASE("remote ops and active puts in every notification mode") {
    for (auto mode : {NotificationMode::Poll, NotificationMode::Scratchpad, NotificationMode::Interrupt}) {
      CAPTURE(to_string(mode));
      const Seen s = run_basic(mode);
      CHECK(s.get_value == 11);
      CHECK(s.cas_old == 11);
      CHECK(s.fao_old == 12);
      CHECK(s.words == std::vector<std::uint64_t>{100, 200, 300, 400});
      CHECK(s.after_flush == 4);  // flush returns after every handler ran
      CHECK(s.blocked_status == TlpStatus::Blocked);
    }
  }

  TEST_CASE("allocation is aligned and bounded") {
    SimConfig cfg;
    cfg.num_procs = 1;
    Cluster cluster(cfg);
    Process& p = cluster.proc(0);
    const Addr a = p.alloc(24);
    const Addr b = p.alloc(8, kPageSize);
    CHECK(a >= kWindowBase);
    CHECK(b % kPageSize == 0);
    CHECK(b > a);
    CHECK(p.owns(b));
    p.store(b, 9);
    CHECK(p.load(b) == 9);
  }

  TEST_CASE("scratchpad notification finishes no later than polling") {
    auto time_for = [](NotificationMode mode) {
      SimConfig cfg;
      cfg.num_procs = 2;
      cfg.notification = mode;
      Cluster cluster(cfg);
      Addr active = 0;
      for (Rank r = 0; r < 2; ++r) {
        active = cluster.proc(r).alloc(kPageSize, kPageSize);
        const auto h = cluster.proc(r).register_handler([](HandlerContext&) {});
        cluster.proc(r).assoc_page(active, PageActions::active_put(), h);
      }
      struct Body {
        static Task<> run(Cluster* c, Addr a) {
          for (int i = 0; i < 50; ++i) co_await c->proc(0).put_word(1, a, 1);
          co_await c->proc(0).flush(1);
        }
      };
      cluster.engine().spawn(Body::run(&cluster, active), "body");
      return cluster.run().sim_time_ns;
    };
    CHECK(time_for(NotificationMode::Scratchpad) <= time_for(NotificationMode::Poll));
  }
}
