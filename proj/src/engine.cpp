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

#include "aasim/engine.hpp"

#include <sstream>

namespace aasim {

struct Engine::Detached {
  struct promise_type {
    Detached get_return_object() noexcept { return {}; }
    std::suspend_never initial_suspend() noexcept { return {}; }
    std::suspend_never final_suspend() noexcept { return {}; }
    void return_void() noexcept {}
    void unhandled_exception() noexcept { std::terminate(); }
  };
};

void Engine::at(Nanos t, std::function<void()> fn) {
  if (t < now_) {
    std::ostringstream os;
    os << "event scheduled in the past: t=" << t << " now=" << now_;
    throw SimError(os.str());
  }
  queue_.push(Event{t, seq_++, std::move(fn)});
}

Engine::Detached Engine::drive(Engine* engine, Task<> task, std::uint64_t id) {
  try {
    co_await task;
  } catch (...) {
    engine->failed(std::current_exception());
  }
  engine->finished(id);
}

void Engine::spawn(Task<> task, std::string name) {
  const std::uint64_t id = next_activity_++;
  live_.emplace(id, std::move(name));
  // The task is parked in a shared slot until its start event fires.
  auto slot = std::make_shared<std::optional<Task<>>>(std::move(task));
  at(now_, [this, slot, id] { drive(this, std::move(**slot), id); });
}

bool Engine::step() {
  if (queue_.empty()) return false;
  // Moving out of top() is safe: ordering only reads time and seq.
  Event ev = std::move(const_cast<Event&>(queue_.top()));
  queue_.pop();
  now_ = ev.time;
  ++executed_;
  ev.fn();
  return true;
}

void Engine::run() {
  while (!failure_ && step()) {
  }
  if (failure_) {
    auto e = std::exchange(failure_, nullptr);
    std::rethrow_exception(e);
  }
  if (!live_.empty()) {
    std::ostringstream os;
    os << "deadlock at t=" << now_ << ": " << live_.size() << " activities blocked with an empty event queue:";
    std::size_t shown = 0;
    for (const auto& [id, name] : live_) {
      if (shown++ == 8) {
        os << " ...";
        break;
      }
      os << " [" << name << "]";
    }
    for (const auto& d : diagnostics_) os << "; " << d();
    throw DeadlockError(os.str());
  }
}

}  // namespace aasim
