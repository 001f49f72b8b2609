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

#include "aasim/report.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace aasim {

ResultRow make_row(std::string scheme, const SimConfig& cfg, bool active, std::uint64_t ops, const Metrics& m) {
  ResultRow r;
  r.scheme = std::move(scheme);
  r.procs = cfg.num_procs;
  r.r_cols = cfg.r_cols;
  r.r_comp = cfg.r_comp;
  r.notification = active ? to_string(cfg.notification) : "none";
  r.iotlb = iotlb_label(cfg);
  r.ops = ops;
  r.remote_ops = m.remote_ops;
  r.bytes_wire = m.bytes_wire;
  r.sim_time_ns = m.sim_time_ns;
  r.energy_j = m.energy_joules;
  r.throughput_ops_per_s =
      m.sim_time_ns == 0 ? 0 : static_cast<double>(ops) * 1e9 / static_cast<double>(m.sim_time_ns);
  return r;
}

std::string csv_header() {
  return "scheme,procs,r_cols,r_comp,notification,iotlb,ops,remote_ops,bytes_wire,sim_time_ns,energy_j,"
         "throughput_ops_per_s";
}

namespace {
// Shortest text that reads back to the same double.
std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}
}  // namespace

std::string to_csv(const ResultRow& r) {
  std::ostringstream os;
  os << r.scheme << ',' << r.procs << ',' << fmt(r.r_cols) << ',' << fmt(r.r_comp) << ',' << r.notification << ','
     << r.iotlb << ',' << r.ops << ',' << r.remote_ops << ',' << r.bytes_wire << ',' << r.sim_time_ns << ','
     << fmt(r.energy_j) << ',' << fmt(r.throughput_ops_per_s);
  return os.str();
}

std::string to_csv(const std::vector<ResultRow>& rows) {
  std::string out = csv_header() + "\n";
  for (const auto& r : rows) out += to_csv(r) + "\n";
  return out;
}

std::string to_json(const std::vector<ResultRow>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    arr.push_back({{"scheme", r.scheme},
                   {"procs", r.procs},
                   {"r_cols", r.r_cols},
                   {"r_comp", r.r_comp},
                   {"notification", r.notification},
                   {"iotlb", r.iotlb},
                   {"ops", r.ops},
                   {"remote_ops", r.remote_ops},
                   {"bytes_wire", r.bytes_wire},
                   {"sim_time_ns", r.sim_time_ns},
                   {"energy_j", r.energy_j},
                   {"throughput_ops_per_s", r.throughput_ops_per_s}});
  }
  return arr.dump(2) + "\n";
}

std::string json_path_for(const std::string& csv_path) {
  std::filesystem::path p(csv_path);
  if (p.extension() == ".csv") return p.replace_extension(".json").string();
  return csv_path + ".json";
}

void write_results(const std::string& path, const std::vector<ResultRow>& rows) {
  const auto write = [](const std::string& file, const std::string& text) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw SimError("cannot write " + file);
    out << text;
    if (!out) throw SimError("error writing " + file);
  };
  write(path, to_csv(rows));
  write(json_path_for(path), to_json(rows));
}

}  // namespace aasim
