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

// Result rows in the CSV schema, with a JSON mirror.

#include <cstdint>
#include <string>
#include <vector>

#include "aasim/common.hpp"
#include "aasim/config.hpp"
#include "aasim/metrics.hpp"

namespace aasim {

struct ResultRow {
  std::string scheme;
  std::uint32_t procs = 0;
  double r_cols = 0;
  double r_comp = 0;
  std::string notification;  // "none" for schemes without active accesses
  std::string iotlb;
  std::uint64_t ops = 0;
  std::uint64_t remote_ops = 0;
  std::uint64_t bytes_wire = 0;
  Nanos sim_time_ns = 0;
  double energy_j = 0;
  double throughput_ops_per_s = 0;

  bool operator==(const ResultRow&) const = default;
};

ResultRow make_row(std::string scheme, const SimConfig& cfg, bool active, std::uint64_t ops, const Metrics& m);

std::string csv_header();
std::string to_csv(const ResultRow& row);
std::string to_csv(const std::vector<ResultRow>& rows);  // header plus rows
std::string to_json(const std::vector<ResultRow>& rows);

/// Writes `path` as CSV and the same rows as JSON next to it
/// (`r.csv` -> `r.json`).
void write_results(const std::string& path, const std::vector<ResultRow>& rows);
std::string json_path_for(const std::string& csv_path);

}  // namespace aasim
