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

// Application codes besides the hashtable: access counting, get logging for
// fault tolerance, incremental checkpointing, sample sort, a put stream for
// IOMMU passthrough overhead, and the IOTLB design sweep.

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "aasim/common.hpp"
#include "aasim/config.hpp"
#include "aasim/metrics.hpp"

namespace aasim {

// ---- access counter -----------------------------------------------------------

enum class CounterScheme : std::uint8_t { Aa, RmaAtomics, Allreduce };
CounterScheme parse_counter_scheme(std::string_view s);
std::string to_string(CounterScheme s);

struct CounterAccess {
  Rank target = 0;
  std::uint32_t page = 0;
  std::uint32_t offset = 0;  // 8-byte aligned, within the page
  AccessKind kind = AccessKind::Put;
};

/// trace[rank] is the access sequence of `rank`.
using CounterTrace = std::vector<std::vector<CounterAccess>>;
CounterTrace make_counter_trace(std::uint32_t procs, std::uint64_t per_proc, std::uint32_t pages, Rng& rng);

/// counts[rank][page] for puts and gets.
struct AccessCounts {
  std::vector<std::vector<std::uint64_t>> puts;
  std::vector<std::vector<std::uint64_t>> gets;
  bool operator==(const AccessCounts&) const = default;
};
AccessCounts counter_oracle(const CounterTrace& trace, std::uint32_t procs, std::uint32_t pages);

struct CounterResult {
  Metrics metrics;
  std::uint64_t ops = 0;  // traced accesses
  AccessCounts counts;
  std::uint64_t extra_ops = 0;  // remote ops beyond the traced accesses
};
CounterResult run_counter(SimConfig cfg, CounterScheme scheme, const CounterTrace& trace, std::uint32_t pages);

// ---- get logging ---------------------------------------------------------------

enum class GetlogScheme : std::uint8_t { Aa, RmaSendback, NoFt };
GetlogScheme parse_getlog_scheme(std::string_view s);
std::string to_string(GetlogScheme s);

struct GetlogResult {
  Metrics metrics;
  std::uint64_t ops = 0;
  /// Replaying the target-side logs reproduces every source's fetched values
  /// (per source and target, in order). Empty for No-FT, which keeps no log.
  std::optional<bool> replay_ok;
};
GetlogResult run_getlog(SimConfig cfg, GetlogScheme scheme, std::uint64_t gets_per_proc, std::uint32_t get_bytes);

// ---- incremental checkpoint ----------------------------------------------------

struct RemoteWrite {
  Rank target = 0;
  std::uint32_t page = 0;
  std::uint32_t offset = 0;
};

struct CheckpointTrace {
  std::uint32_t pages = 0;
  std::vector<std::vector<std::vector<RemoteWrite>>> remote;     // [epoch][source]
  std::vector<std::vector<std::set<std::uint32_t>>> local_dirty;  // [epoch][rank], unioned in
};
CheckpointTrace make_checkpoint_trace(std::uint32_t procs, std::uint32_t pages, std::uint32_t epochs,
                                      std::uint64_t writes_per_proc, Rng& rng);

/// dirty[epoch][rank]: distinct written pages of that epoch.
using DirtySets = std::vector<std::vector<std::set<std::uint32_t>>>;
DirtySets checkpoint_oracle(const CheckpointTrace& trace, std::uint32_t procs);

struct CheckpointResult {
  Metrics metrics;
  std::uint64_t ops = 0;
  DirtySets dirty;
};
CheckpointResult run_checkpoint(SimConfig cfg, const CheckpointTrace& trace);

// ---- sample sort -----------------------------------------------------------------

struct SortResult {
  Metrics metrics;
  std::uint64_t ops = 0;  // words sorted
  bool sorted = false;    // output globally sorted and a permutation of the input
};
SortResult run_sort(SimConfig cfg, GetlogScheme scheme, std::uint64_t total_words);

// ---- put stream ----------------------------------------------------------------

struct StreamResult {
  Metrics metrics;
  std::uint64_t bytes = 0;
  double bandwidth_bytes_per_ns = 0;
};
/// Rank 0 streams `puts` puts of `bytes` each into plain pages of rank 1.
StreamResult run_stream(SimConfig cfg, std::uint64_t puts, std::uint32_t bytes);

// ---- IOTLB sweep -----------------------------------------------------------------

struct SweepPoint {
  std::uint32_t size = 0;
  std::uint32_t assoc = 0;  // 0 = fully associative
  ReplacementPolicy policy = ReplacementPolicy::Lru;
  Metrics metrics;
  std::uint64_t ops = 0;
  double hit_rate = 0;
  double insert_rate = 0;  // inserts per second of simulated time
};

/// Sizes {16,32,64,128} x associativity {1,2,4,full} x {lru,rnd} on the
/// same looped Zipf hashtable trace: 16 sources inserting into one owner.
std::vector<SweepPoint> run_iotlb_sweep(const SimConfig& base, std::uint64_t keys_per_source);

}  // namespace aasim
