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

#include "aasim/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace aasim {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_int(std::string_view key, std::string_view v) {
  T out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    throw ConfigError("bad integer for '" + std::string(key) + "': '" + std::string(v) + "'");
  }
  return out;
}

double parse_double(std::string_view key, std::string_view v) {
  // std::from_chars for double is missing from older libstdc++.
  std::string s(v);
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) {
    throw ConfigError("bad number for '" + std::string(key) + "': '" + s + "'");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw ConfigError("bad boolean for '" + std::string(key) + "': '" + std::string(v) + "'");
}

bool is_pow2(std::uint64_t v) { return v != 0 && (v & (v - 1)) == 0; }

}  // namespace

NotificationMode parse_notification(std::string_view s) {
  if (s == "int" || s == "interrupt") return NotificationMode::Interrupt;
  if (s == "poll") return NotificationMode::Poll;
  if (s == "sp" || s == "scratchpad") return NotificationMode::Scratchpad;
  throw ConfigError("unknown notification mode '" + std::string(s) + "' (int|poll|sp)");
}

ReplacementPolicy parse_policy(std::string_view s) {
  if (s == "lru") return ReplacementPolicy::Lru;
  if (s == "rnd") return ReplacementPolicy::Random;
  throw ConfigError("unknown iotlb_policy '" + std::string(s) + "' (lru|rnd)");
}

std::string to_string(NotificationMode m) {
  switch (m) {
    case NotificationMode::Interrupt: return "int";
    case NotificationMode::Poll: return "poll";
    case NotificationMode::Scratchpad: return "sp";
  }
  return "?";
}

std::string to_string(ReplacementPolicy p) { return p == ReplacementPolicy::Lru ? "lru" : "rnd"; }

std::string iotlb_label(const SimConfig& c) {
  std::ostringstream os;
  os << to_string(c.iotlb_policy) << "_a";
  if (c.iotlb_assoc == 0) {
    os << 'f';
  } else {
    os << c.iotlb_assoc;
  }
  os << '_' << c.iotlb_size;
  return os.str();
}

const std::vector<std::string>& SimConfig::known_keys() {
  static const std::vector<std::string> keys = {
      "seed", "num_procs", "ops_per_proc", "iotlb_size", "iotlb_assoc", "iotlb_policy", "max_payload",
      "link_latency_ns", "link_bw_bytes_per_ns", "credit_capacity", "wire_header_bytes", "iommu_enabled",
      "notification", "interrupt_ns", "scratchpad_ns", "poll_interval_ns", "iommu_proc_ns", "mem_access_ns",
      "access_log_size", "fault_log_entries", "interrupt_batch", "interrupt_timeout_ns", "handler_cost_ns", "issue_ns",
      "am_poll_interval_ns", "reply_batch", "vol_size", "r_cols", "r_comp", "joules_per_byte"};
  return keys;
}

void SimConfig::set(std::string_view key, std::string_view value) {
  const auto v = trim(value);
  if (key == "seed") seed = parse_int<std::uint64_t>(key, v);
  else if (key == "num_procs") num_procs = parse_int<std::uint32_t>(key, v);
  else if (key == "ops_per_proc") ops_per_proc = parse_int<std::uint64_t>(key, v);
  else if (key == "iotlb_size") iotlb_size = parse_int<std::uint32_t>(key, v);
  else if (key == "iotlb_assoc") iotlb_assoc = (v == "full" || v == "f") ? 0 : parse_int<std::uint32_t>(key, v);
  else if (key == "iotlb_policy") iotlb_policy = parse_policy(v);
  else if (key == "max_payload") max_payload = parse_int<std::uint32_t>(key, v);
  else if (key == "link_latency_ns") link_latency_ns = parse_int<Nanos>(key, v);
  else if (key == "link_bw_bytes_per_ns") link_bw_bytes_per_ns = parse_double(key, v);
  else if (key == "credit_capacity") credit_capacity = parse_int<std::uint32_t>(key, v);
  else if (key == "wire_header_bytes") wire_header_bytes = parse_int<std::uint32_t>(key, v);
  else if (key == "iommu_enabled") iommu_enabled = parse_bool(key, v);
  else if (key == "notification") notification = parse_notification(v);
  else if (key == "interrupt_ns") interrupt_ns = parse_int<Nanos>(key, v);
  else if (key == "scratchpad_ns") scratchpad_ns = parse_int<Nanos>(key, v);
  else if (key == "poll_interval_ns") poll_interval_ns = parse_int<Nanos>(key, v);
  else if (key == "iommu_proc_ns") iommu_proc_ns = parse_int<Nanos>(key, v);
  else if (key == "mem_access_ns") mem_access_ns = parse_int<Nanos>(key, v);
  else if (key == "access_log_size") access_log_size = parse_int<std::uint64_t>(key, v);
  else if (key == "fault_log_entries") fault_log_entries = parse_int<std::uint32_t>(key, v);
  else if (key == "interrupt_batch") interrupt_batch = parse_int<std::uint32_t>(key, v);
  else if (key == "interrupt_timeout_ns") interrupt_timeout_ns = parse_int<Nanos>(key, v);
  else if (key == "handler_cost_ns") handler_cost_ns = parse_int<Nanos>(key, v);
  else if (key == "issue_ns") issue_ns = parse_int<Nanos>(key, v);
  else if (key == "am_poll_interval_ns") am_poll_interval_ns = parse_int<Nanos>(key, v);
  else if (key == "reply_batch") reply_batch = parse_int<std::uint32_t>(key, v);
  else if (key == "vol_size") vol_size = parse_int<std::uint64_t>(key, v);
  else if (key == "r_cols") r_cols = parse_double(key, v);
  else if (key == "r_comp") r_comp = parse_double(key, v);
  else if (key == "joules_per_byte") joules_per_byte = parse_double(key, v);
  else throw ConfigError("unknown config key '" + std::string(key) + "'");
}

SimConfig SimConfig::parse(std::string_view text, SimConfig base) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    base.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  base.validate();
  return base;
}

SimConfig SimConfig::load_file(const std::string& path, SimConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), base);
}

SimConfig SimConfig::parse(std::string_view text) { return parse(text, SimConfig{}); }

SimConfig SimConfig::load_file(const std::string& path) { return load_file(path, SimConfig{}); }

void SimConfig::validate() const {
  if (num_procs == 0) throw ConfigError("num_procs must be positive");
  if (iotlb_size == 0) throw ConfigError("iotlb_size must be positive");
  if (iotlb_assoc != 0 && iotlb_assoc != 1 && iotlb_assoc != 2 && iotlb_assoc != 4) {
    throw ConfigError("iotlb_assoc must be 1, 2, 4 or full");
  }
  if (iotlb_assoc != 0 && iotlb_size % iotlb_assoc != 0) {
    throw ConfigError("iotlb_size must be a multiple of iotlb_assoc");
  }
  if (max_payload == 0 || max_payload > 4096 || max_payload % 8 != 0) {
    throw ConfigError("max_payload must be a multiple of 8 in (0, 4096]");
  }
  if (link_bw_bytes_per_ns <= 0) throw ConfigError("link_bw_bytes_per_ns must be positive");
  if (credit_capacity == 0) throw ConfigError("credit_capacity must be positive");
  if (!is_pow2(access_log_size) || access_log_size < 8192) {
    throw ConfigError("access_log_size must be a power of two >= 8192");
  }
  if (fault_log_entries == 0) throw ConfigError("fault_log_entries must be positive");
  if (interrupt_batch == 0) throw ConfigError("interrupt_batch must be positive");
  if (interrupt_timeout_ns <= 0) throw ConfigError("interrupt_timeout_ns must be positive");
  if (poll_interval_ns <= 0 || am_poll_interval_ns <= 0) throw ConfigError("poll intervals must be positive");
  if (reply_batch == 0 || reply_batch * 8 > 4096) throw ConfigError("reply_batch must be in [1, 512]");
  if (!is_pow2(vol_size) || vol_size < 512) throw ConfigError("vol_size must be a power of two >= 512");
  if (r_cols < 0 || r_cols >= 1) throw ConfigError("r_cols must be in [0, 1)");
  if (r_comp < 0 || r_comp >= 1) throw ConfigError("r_comp must be in [0, 1)");
  if (joules_per_byte < 0) throw ConfigError("joules_per_byte must be non-negative");
}

}  // namespace aasim
