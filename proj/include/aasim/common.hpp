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

#include <compare>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace aasim {

using Nanos = std::int64_t;
using Addr = std::uint64_t;
using Rank = std::uint32_t;
using Bytes = std::vector<std::uint8_t>;

/// Little-endian 64-bit word as 8 bytes.
inline Bytes word_bytes(std::uint64_t v) {
  Bytes b(8);
  for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
  return b;
}

/// Little-endian 64-bit word at `p`.
inline std::uint64_t read_word(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = v << 8 | p[i];
  return v;
}

inline constexpr std::uint64_t kPageSize = 4096;
inline constexpr unsigned kPageShift = 12;

constexpr std::uint64_t page_number(Addr a) { return a >> kPageShift; }
constexpr std::uint64_t page_offset(Addr a) { return a & (kPageSize - 1); }
constexpr bool page_aligned(Addr a) { return page_offset(a) == 0; }
constexpr std::uint64_t round_up(std::uint64_t v, std::uint64_t m) { return (v + m - 1) / m * m; }
constexpr std::uint64_t ceil_div(std::uint64_t v, std::uint64_t d) { return (v + d - 1) / d; }

enum class AccessKind : std::uint8_t { Put = 0, Get = 1 };

enum class ReplacementPolicy : std::uint8_t { Lru, Random };

/// How the IOMMU tells a process that new access-log records are visible.
enum class NotificationMode : std::uint8_t { Interrupt, Poll, Scratchpad };

/// PCIe requester identity: bus number plus device/function byte.
struct DeviceId {
  std::uint8_t bus = 0;
  std::uint8_t devfn = 0;

  constexpr std::uint16_t packed() const { return static_cast<std::uint16_t>(bus << 8 | devfn); }
  static constexpr DeviceId unpack(std::uint16_t v) {
    return DeviceId{static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v & 0xff)};
  }
  auto operator<=>(const DeviceId&) const = default;
};

class SimError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public SimError {
 public:
  using SimError::SimError;
};

class AlignmentError : public SimError {
 public:
  using SimError::SimError;
};

class OversizeError : public SimError {
 public:
  using SimError::SimError;
};

class DeadlockError : public SimError {
 public:
  using SimError::SimError;
};

// std::mt19937_64 is bit-exact across standard libraries; the distributions
// are not, so sampling is done by hand.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 1) : gen_(seed) {}

  std::uint64_t next() { return gen_(); }
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : gen_() % n; }
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  bool chance(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace aasim
