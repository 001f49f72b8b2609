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
#include <string>
#include <string_view>
#include <vector>

#include "aasim/common.hpp"

namespace aasim {

/// Simulation parameters. Loaded from flat `key = value` text; unknown
/// keys and malformed values are rejected with ConfigError.
struct SimConfig {
  std::uint64_t seed = 1;
  std::uint32_t num_procs = 8;
  std::uint64_t ops_per_proc = 1000;

  // IOTLB
  std::uint32_t iotlb_size = 64;
  std::uint32_t iotlb_assoc = 4;  // 0 = fully associative
  ReplacementPolicy iotlb_policy = ReplacementPolicy::Lru;

  // PCIe link
  std::uint32_t max_payload = 256;
  Nanos link_latency_ns = 500;
  double link_bw_bytes_per_ns = 1.0;
  std::uint32_t credit_capacity = 64;
  std::uint32_t wire_header_bytes = 24;

  // IOMMU and CPU notification
  bool iommu_enabled = true;
  NotificationMode notification = NotificationMode::Poll;
  Nanos interrupt_ns = 3000;
  Nanos scratchpad_ns = 15;
  Nanos poll_interval_ns = 200;
  Nanos iommu_proc_ns = 5;
  Nanos mem_access_ns = 70;
  std::uint64_t access_log_size = 65536;
  std::uint32_t fault_log_entries = 256;
  std::uint32_t interrupt_batch = 10;
  Nanos interrupt_timeout_ns = 20000;  // interrupt moderation timer

  // Runtime costs
  Nanos handler_cost_ns = 100;
  Nanos issue_ns = 3000;
  Nanos am_poll_interval_ns = 1000;
  std::uint32_t reply_batch = 1;

  // Workload
  std::uint64_t vol_size = 1ull << 21;
  double r_cols = 0.0;
  double r_comp = 0.0;

  double joules_per_byte = 1e-9;

  /// Applies one key; throws ConfigError on unknown key or bad value.
  void set(std::string_view key, std::string_view value);

  /// Parses `key = value` lines; `#` starts a comment.
  static SimConfig parse(std::string_view text, SimConfig base);
  static SimConfig parse(std::string_view text);
  static SimConfig load_file(const std::string& path, SimConfig base);
  static SimConfig load_file(const std::string& path);

  /// Cross-field checks (power-of-two sizes, ranges).
  void validate() const;

  static const std::vector<std::string>& known_keys();
};

std::string to_string(NotificationMode m);
std::string to_string(ReplacementPolicy p);
NotificationMode parse_notification(std::string_view s);
ReplacementPolicy parse_policy(std::string_view s);

/// "lru_a4_64" style label for an IOTLB configuration.
std::string iotlb_label(const SimConfig& c);

}  // namespace aasim
