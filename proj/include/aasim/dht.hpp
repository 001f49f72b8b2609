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

// Distributed hashtable: one volume per rank (bucket table + overflow heap),
// key generation with an exact collision count, and the AA, RMA and AM
// insert variants plus a sequential oracle.

#include <cstdint>
#include <string>
#include <vector>

#include "aasim/common.hpp"
#include "aasim/config.hpp"
#include "aasim/metrics.hpp"

namespace aasim {

enum class DhtScheme : std::uint8_t { AaInt, AaPoll, AaSp, Rma, Am };

DhtScheme parse_dht_scheme(std::string_view s);
std::string to_string(DhtScheme s);
bool is_active(DhtScheme s);

/// Multiplicative hash; owner and bucket are taken from disjoint bit ranges.
struct DhtHash {
  static constexpr std::uint64_t kMul = 0x9E3779B97F4A7C15ull;
  static std::uint64_t mix(std::uint64_t key) { return key * kMul; }
  static std::uint64_t unmix(std::uint64_t h);
  static Rank owner(std::uint64_t key, std::uint32_t procs) {
    return static_cast<Rank>((mix(key) & 0xffffffffull) % procs);
  }
  static std::uint64_t bucket(std::uint64_t key, unsigned table_bits) { return mix(key) >> (64 - table_bits); }
  /// A fresh key whose owner and bucket are fixed.
  static std::uint64_t make_key(Rank owner, std::uint64_t bucket, unsigned table_bits, std::uint32_t procs,
                                Rng& rng);
};

unsigned table_bits_for(std::uint64_t vol_size);

/// `n` distinct keys; exactly round(n * r_cols) of them land in a bucket
/// already used by an earlier key.
std::vector<std::uint64_t> make_insert_keys(std::uint64_t n, std::uint32_t procs, std::uint64_t vol_size,
                                            double r_cols, Rng& rng);

/// `n` keys owned by `owner` whose pages follow a Zipf(1) popularity over
/// the bucket table.
std::vector<std::uint64_t> make_zipf_keys(std::uint64_t n, Rank owner, std::uint32_t procs, std::uint64_t vol_size,
                                          Rng& rng);

struct DhtOp {
  enum class Kind : std::uint8_t { Insert, Delete, Lookup };
  Kind kind = Kind::Insert;
  std::uint64_t key = 0;
};

/// phases[p][rank] is the op list of `rank` in phase p. Phases are separated
/// by a flush to every rank and a barrier.
struct DhtStream {
  std::vector<std::vector<std::vector<DhtOp>>> phases;

  std::uint64_t count(DhtOp::Kind kind) const;
};

/// Keys dealt round-robin to ranks, one insert-only phase.
DhtStream insert_stream(const std::vector<std::uint64_t>& keys, std::uint32_t procs);

/// Alternating insert and delete phases totalling `ops` operations. Deletes
/// target earlier inserted keys, with one in eight absent.
DhtStream mixed_stream(std::uint64_t ops, std::uint32_t procs, std::uint64_t vol_size, double r_cols, Rng& rng);

/// Sequential reference volume: the owner-side local insert on plain arrays.
class LocalVolume {
 public:
  explicit LocalVolume(std::uint64_t vol_size);

  /// Returns true when the bucket was occupied.
  bool insert(std::uint64_t key);
  /// Clears every cell holding `key`; returns the number cleared.
  std::uint64_t remove(std::uint64_t key);
  /// Element in the key's bucket cell (0 when empty).
  std::uint64_t lookup(std::uint64_t key) const;
  /// Sorted stored elements.
  std::vector<std::uint64_t> contents() const;

 private:
  struct Cell {
    std::uint64_t elem = 0;
    std::uint64_t ptr = 0;
  };
  std::uint64_t table_size_;
  unsigned table_bits_;
  std::vector<Cell> cells_;
  std::vector<std::uint64_t> last_ptr_;
  std::uint64_t next_free_;
};

/// Applies the stream sequentially; result[rank] is the sorted volume.
std::vector<std::vector<std::uint64_t>> dht_oracle(const DhtStream& stream, std::uint32_t procs,
                                                   std::uint64_t vol_size);

struct DhtResult {
  Metrics metrics;
  std::uint64_t ops = 0;  // workload operations (inserts, deletes, lookups)
  std::vector<std::vector<std::uint64_t>> volumes;
  std::vector<std::vector<std::uint64_t>> lookups;  // per rank, in issue order
  std::uint64_t colliding_inserts = 0;              // observed at the issuing side (RMA) or handler (AA, AM)
  std::uint64_t min_ops_colliding = 0;              // RMA only: remote ops of the cheapest colliding insert
  std::uint64_t max_ops_colliding = 0;
  std::uint64_t max_ops_per_insert = 0;
  Nanos compute_ns = 0;  // per-op compute inserted for r_comp (rank 0)
};

/// Runs the stream under `scheme`. AA schemes override cfg.notification.
DhtResult run_dht(SimConfig cfg, DhtScheme scheme, const DhtStream& stream);

}  // namespace aasim
