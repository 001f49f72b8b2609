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

#include <cstdint>

#include "aasim/common.hpp"

namespace aasim {

/// Run statistics. All counters only grow during a run.
struct Metrics {
  std::uint64_t remote_ops = 0;
  std::uint64_t bytes_wire = 0;     // TLP payload plus per-packet header
  std::uint64_t payload_bytes = 0;  // TLP payload only
  std::uint64_t tlps = 0;
  Nanos sim_time_ns = 0;
  double energy_joules = 0.0;

  std::uint64_t collisions = 0;
  std::uint64_t handler_invocations = 0;
  std::uint64_t records_logged = 0;
  std::uint64_t records_consumed = 0;
  std::uint64_t iotlb_hits = 0;
  std::uint64_t iotlb_misses = 0;
  std::uint64_t fault_log_entries = 0;
  std::uint64_t fault_log_drops = 0;
  std::uint64_t interrupts = 0;
  std::uint64_t active_flushes = 0;
  std::uint64_t backpressure_stalls = 0;
  std::uint64_t blocked_accesses = 0;

  bool operator==(const Metrics&) const = default;
};

/// Endpoint-NIC energy: proportional to bytes on the wire.
inline double energy(std::uint64_t bytes_wire, double joules_per_byte) {
  return static_cast<double>(bytes_wire) * joules_per_byte;
}

}  // namespace aasim
