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

// Deterministic discrete-event core. Simulated activities are C++20
// coroutines (Task<T>) that suspend on engine awaitables; every resumption
// goes through the event queue, ordered by (time, insertion sequence).

#include <coroutine>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "aasim/common.hpp"

namespace aasim {

template <typename T = void>
class Task;

namespace detail {

struct TaskPromiseBase {
  std::coroutine_handle<> continuation = std::noop_coroutine();
  std::exception_ptr error;

  std::suspend_always initial_suspend() noexcept { return {}; }

  struct FinalAwaiter {
    bool await_ready() noexcept { return false; }
    template <typename P>
    std::coroutine_handle<> await_suspend(std::coroutine_handle<P> h) noexcept {
      return h.promise().continuation;
    }
    void await_resume() noexcept {}
  };
  FinalAwaiter final_suspend() noexcept { return {}; }
  void unhandled_exception() noexcept { error = std::current_exception(); }
};

}  // namespace detail

/// Lazily started coroutine; runs when awaited and resumes the awaiter on
/// completion (symmetric transfer).
template <typename T>
class [[nodiscard]] Task {
 public:
  struct promise_type : detail::TaskPromiseBase {
    std::optional<T> value;
    Task get_return_object() { return Task{std::coroutine_handle<promise_type>::from_promise(*this)}; }
    void return_value(T v) { value = std::move(v); }
  };

  Task(Task&& other) noexcept : h_(std::exchange(other.h_, {})) {}
  Task& operator=(Task&& other) noexcept {
    if (this != &other) {
      if (h_) h_.destroy();
      h_ = std::exchange(other.h_, {});
    }
    return *this;
  }
  Task(const Task&) = delete;
  Task& operator=(const Task&) = delete;
  ~Task() {
    if (h_) h_.destroy();
  }

  bool await_ready() const noexcept { return false; }
  std::coroutine_handle<> await_suspend(std::coroutine_handle<> awaiting) noexcept {
    h_.promise().continuation = awaiting;
    return h_;
  }
  T await_resume() {
    auto& p = h_.promise();
    if (p.error) std::rethrow_exception(p.error);
    return std::move(*p.value);
  }

 private:
  explicit Task(std::coroutine_handle<promise_type> h) : h_(h) {}
  std::coroutine_handle<promise_type> h_;
};

template <>
class [[nodiscard]] Task<void> {
 public:
  struct promise_type : detail::TaskPromiseBase {
    Task get_return_object() { return Task{std::coroutine_handle<promise_type>::from_promise(*this)}; }
    void return_void() {}
  };

  Task(Task&& other) noexcept : h_(std::exchange(other.h_, {})) {}
  Task& operator=(Task&& other) noexcept {
    if (this != &other) {
      if (h_) h_.destroy();
      h_ = std::exchange(other.h_, {});
    }
    return *this;
  }
  Task(const Task&) = delete;
  Task& operator=(const Task&) = delete;
  ~Task() {
    if (h_) h_.destroy();
  }

  bool await_ready() const noexcept { return false; }
  std::coroutine_handle<> await_suspend(std::coroutine_handle<> awaiting) noexcept {
    h_.promise().continuation = awaiting;
    return h_;
  }
  void await_resume() {
    if (h_.promise().error) std::rethrow_exception(h_.promise().error);
  }

 private:
  explicit Task(std::coroutine_handle<promise_type> h) : h_(h) {}
  std::coroutine_handle<promise_type> h_;
};

class Engine {
 public:
  Engine() = default;
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  Nanos now() const { return now_; }
  std::uint64_t events_executed() const { return executed_; }
  std::size_t pending_events() const { return queue_.size(); }

  /// Schedules fn at absolute time t; scheduling in the past is an error.
  void at(Nanos t, std::function<void()> fn);
  void after(Nanos dt, std::function<void()> fn) { at(now_ + dt, std::move(fn)); }

  /// Starts a detached activity at the current time. Activities still
  /// suspended when the queue drains are reported as a deadlock by run().
  void spawn(Task<> task, std::string name);

  /// Runs until the queue is empty. Rethrows the first exception raised by
  /// a spawned activity; throws DeadlockError if activities remain blocked.
  void run();

  /// Executes one event; false when the queue is empty.
  bool step();

  /// Extra text appended to deadlock diagnostics (e.g. link stall state).
  void add_diagnostic(std::function<std::string()> fn) { diagnostics_.push_back(std::move(fn)); }

  std::size_t live_activities() const { return live_.size(); }

  struct SleepAwaiter {
    Engine* engine;
    Nanos wake;
    bool await_ready() const noexcept { return wake <= engine->now_; }
    void await_suspend(std::coroutine_handle<> h) {
      engine->at(wake, [h] { h.resume(); });
    }
    void await_resume() const noexcept {}
  };

  SleepAwaiter sleep_until(Nanos t) { return SleepAwaiter{this, t}; }
  SleepAwaiter sleep_for(Nanos dt) { return SleepAwaiter{this, now_ + dt}; }

  /// Yields to the event loop, resuming at the current time after events
  /// already queued for it.
  auto yield() {
    struct Awaiter {
      Engine* engine;
      bool await_ready() const noexcept { return false; }
      void await_suspend(std::coroutine_handle<> h) {
        engine->at(engine->now_, [h] { h.resume(); });
      }
      void await_resume() const noexcept {}
    };
    return Awaiter{this};
  }

 private:
  struct Event {
    Nanos time;
    std::uint64_t seq;
    std::function<void()> fn;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.time != b.time ? a.time > b.time : a.seq > b.seq;
    }
  };

  struct Detached;
  static Detached drive(Engine* engine, Task<> task, std::uint64_t id);
  void finished(std::uint64_t id) { live_.erase(id); }
  void failed(std::exception_ptr e) {
    if (!failure_) failure_ = e;
  }

  Nanos now_ = 0;
  std::uint64_t seq_ = 0;
  std::uint64_t executed_ = 0;
  std::uint64_t next_activity_ = 0;
  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  std::map<std::uint64_t, std::string> live_;
  std::exception_ptr failure_;
  std::vector<std::function<std::string()>> diagnostics_;
};

/// One-shot value slot with a single awaiting coroutine. Copies share state.
template <typename T = std::monostate>
class Completion {
 public:
  explicit Completion(Engine& engine) : s_(std::make_shared<State>(State{&engine, {}, {}})) {}

  void set(T v) {
    if (s_->value) throw SimError("completion set twice");
    s_->value = std::move(v);
    if (auto w = std::exchange(s_->waiter, {})) {
      s_->engine->at(s_->engine->now(), [w] { w.resume(); });
    }
  }
  bool ready() const { return s_->value.has_value(); }
  const T& value() const { return *s_->value; }

  auto operator co_await() const {
    struct Awaiter {
      std::shared_ptr<typename Completion::State> s;
      bool await_ready() const noexcept { return s->value.has_value(); }
      void await_suspend(std::coroutine_handle<> h) {
        if (s->waiter) throw SimError("completion already awaited");
        s->waiter = h;
      }
      T await_resume() { return *s->value; }
    };
    return Awaiter{s_};
  }

 private:
  struct State {
    Engine* engine;
    std::optional<T> value;
    std::coroutine_handle<> waiter;
  };
  std::shared_ptr<State> s_;
};

/// Serialized memory channel of one node: each access occupies it for
/// access_ns.
class MemoryChannel {
 public:
  explicit MemoryChannel(Nanos access_ns) : access_ns_(access_ns) {}

  /// Reserves `accesses` back-to-back accesses starting no earlier than
  /// `earliest`; returns the completion time.
  Nanos reserve(Nanos earliest, std::uint32_t accesses) {
    if (accesses == 0) return earliest;
    const Nanos start = std::max(earliest, busy_until_);
    busy_until_ = start + access_ns_ * accesses;
    accesses_ += accesses;
    return busy_until_;
  }
  Nanos access_ns() const { return access_ns_; }
  Nanos busy_until() const { return busy_until_; }
  std::uint64_t accesses() const { return accesses_; }

 private:
  Nanos access_ns_;
  Nanos busy_until_ = 0;
  std::uint64_t accesses_ = 0;
};

/// A hardware thread. Work is reserved in FIFO order: compute time, then
/// memory accesses during which the thread stalls.
class Cpu {
 public:
  Cpu(Engine& engine, MemoryChannel* memory) : engine_(&engine), memory_(memory) {}

  Engine::SleepAwaiter run(Nanos compute_ns, std::uint32_t accesses = 0) {
    return engine_->sleep_until(reserve(compute_ns, accesses));
  }

  Nanos reserve(Nanos compute_ns, std::uint32_t accesses = 0) {
    const Nanos start = std::max(engine_->now(), busy_until_);
    Nanos end = start + compute_ns;
    if (accesses > 0 && memory_ != nullptr) end = memory_->reserve(end, accesses);
    busy_total_ += end - start;
    busy_until_ = end;
    return end;
  }

  Nanos busy_until() const { return busy_until_; }
  Nanos busy_total() const { return busy_total_; }

 private:
  Engine* engine_;
  MemoryChannel* memory_;
  Nanos busy_until_ = 0;
  Nanos busy_total_ = 0;
};

/// Reusable barrier; all parties resume `cost_ns` after the last arrival.
class Barrier {
 public:
  Barrier(Engine& engine, std::size_t parties, Nanos cost_ns)
      : engine_(&engine), parties_(parties), cost_ns_(cost_ns) {}

  auto arrive() {
    struct Awaiter {
      Barrier* b;
      bool await_ready() const noexcept { return false; }
      void await_suspend(std::coroutine_handle<> h) {
        b->waiting_.push_back(h);
        if (b->waiting_.size() == b->parties_) {
          auto batch = std::exchange(b->waiting_, {});
          const Nanos t = b->engine_->now() + b->cost_ns_;
          for (auto w : batch) b->engine_->at(t, [w] { w.resume(); });
        }
      }
      void await_resume() const noexcept {}
    };
    return Awaiter{this};
  }

 private:
  Engine* engine_;
  std::size_t parties_;
  Nanos cost_ns_;
  std::vector<std::coroutine_handle<>> waiting_;
};

}  // namespace aasim
