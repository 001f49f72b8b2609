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

// Event ordering, coroutine activities, and the shared resources.

#include <stdexcept>
#include <string>
#include <vector>

#include "aasim/engine.hpp"
#include "doctest.h"

using namespace aasim;

namespace {

Task<int> add_later(Engine* e, Nanos dt, int v) {
  co_await e->sleep_for(dt);
  co_return v + 1;
}

Task<> chain(Engine* e, std::vector<std::string>* log) {
  const int a = co_await add_later(e, 10, 1);
  const int b = co_await add_later(e, 5, a);
  log->push_back("chain " + std::to_string(b) + " @" + std::to_string(e->now()));
}

Task<> wait_on(Completion<int> c, std::vector<int>* out) { out->push_back(co_await c); }

Task<> thrower(Engine* e) {
  co_await e->sleep_for(3);
  throw std::runtime_error("boom");
}

Task<> party(Engine* e, Barrier* b, Nanos arrive, std::vector<Nanos>* out) {
  co_await e->sleep_until(arrive);
  co_await b->arrive();
  out->push_back(e->now());
}

}  // namespace

TEST_SUITE("engine") {
  TEST_CASE("events run in time order, ties in insertion order") {
    Engine e;
    std::vector<int> order;
    e.at(20, [&] { order.push_back(3); });
    e.at(10, [&] { order.push_back(1); });
    e.at(10, [&] { order.push_back(2); });
    e.at(30, [&] { e.after(0, [&] { order.push_back(5); }); order.push_back(4); });
    e.run();
    CHECK(order == std::vector<int>{1, 2, 3, 4, 5});
    CHECK(e.now() == 30);
    CHECK(e.events_executed() == 5);
  }

  TEST_CASE("nested tasks return values and advance time") {
    Engine e;
    std::vector<std::string> log;
    e.spawn(chain(&e, &log), "chain");
    e.run();
    REQUIRE(log.size() == 1);
    CHECK(log[0] == "chain 3 @15");
    CHECK(e.live_activities() == 0);
  }

  TEST_CASE("completion resumes its waiter with the value") {
    Engine e;
    Completion<int> c(e);
    std::vector<int> out;
    e.spawn(wait_on(c, &out), "waiter");
    e.at(7, [c]() mutable { c.set(42); });
    e.run();
    CHECK(out == std::vector<int>{42});
    CHECK_THROWS_AS(c.set(1), SimError);
  }

  TEST_CASE("an activity blocked forever is a deadlock") {
    Engine e;
    Completion<int> never(e);
    std::vector<int> out;
    e.spawn(wait_on(never, &out), "stuck");
    CHECK_THROWS_AS(e.run(), DeadlockError);
  }

  TEST_CASE("activity exceptions propagate out of run") {
    Engine e;
    e.spawn(thrower(&e), "thrower");
    CHECK_THROWS_WITH(e.run(), "boom");
  }

  TEST_CASE("barrier releases every party after the last arrival plus cost") {
    Engine e;
    Barrier b(e, 3, 100);
    std::vector<Nanos> out;
    e.spawn(party(&e, &b, 5, &out), "a");
    e.spawn(party(&e, &b, 50, &out), "b");
    e.spawn(party(&e, &b, 20, &out), "c");
    e.run();
    CHECK(out == std::vector<Nanos>{150, 150, 150});
  }

  TEST_CASE("memory channel serializes accesses") {
    MemoryChannel ch(70);
    CHECK(ch.reserve(0, 0) == 0);
    CHECK(ch.reserve(0, 2) == 140);
    CHECK(ch.reserve(100, 1) == 210);
    CHECK(ch.reserve(1000, 1) == 1070);
    CHECK(ch.accesses() == 4);
  }

  TEST_CASE("cpu reserves compute then memory in FIFO order") {
    Engine e;
    MemoryChannel ch(70);
    Cpu cpu(e, &ch);
    CHECK(cpu.reserve(100, 1) == 170);
    CHECK(cpu.reserve(10) == 180);
    CHECK(cpu.busy_total() == 180);
  }
}
