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

// Command-line driver: runs one workload (or the IOTLB sweep) and prints
// result rows as CSV.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "aasim/apps.hpp"
#include "aasim/config.hpp"
#include "aasim/dht.hpp"
#include "aasim/report.hpp"

namespace {

using namespace aasim;

struct Options {
  std::string config;
  std::string scheme;
  std::optional<std::uint32_t> procs;
  std::optional<double> r_cols;
  std::optional<double> r_comp;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--config", o.config, "key=value configuration file");
  sub->add_option("--scheme", o.scheme, "scheme of the workload");
  sub->add_option("--procs", o.procs, "number of simulated processes");
  sub->add_option("--r-cols", o.r_cols, "target hash collision ratio in [0,1)");
  sub->add_option("--r-comp", o.r_comp, "compute ratio in [0,1)");
  sub->add_option("--seed", o.seed, "random seed");
  sub->add_option("--out", o.out, "write CSV here and a JSON mirror next to it");
}

SimConfig make_config(const Options& o) {
  SimConfig cfg = o.config.empty() ? SimConfig{} : SimConfig::load_file(o.config);
  if (o.procs) cfg.num_procs = *o.procs;
  if (o.r_cols) cfg.r_cols = *o.r_cols;
  if (o.r_comp) cfg.r_comp = *o.r_comp;
  if (o.seed) cfg.seed = *o.seed;
  cfg.validate();
  return cfg;
}

std::string scheme_or(const Options& o, const char* fallback) { return o.scheme.empty() ? fallback : o.scheme; }

std::vector<ResultRow> run_dht_cmd(const Options& o) {
  SimConfig cfg = make_config(o);
  const DhtScheme scheme = parse_dht_scheme(scheme_or(o, "aa-poll"));
  Rng rng(cfg.seed);
  const auto keys = make_insert_keys(cfg.ops_per_proc * cfg.num_procs, cfg.num_procs, cfg.vol_size, cfg.r_cols, rng);
  const DhtResult r = run_dht(cfg, scheme, insert_stream(keys, cfg.num_procs));
  if (is_active(scheme)) {
    cfg.notification = scheme == DhtScheme::AaInt   ? NotificationMode::Interrupt
                       : scheme == DhtScheme::AaSp ? NotificationMode::Scratchpad
                                                   : NotificationMode::Poll;
  }
  return {make_row(to_string(scheme), cfg, is_active(scheme), r.ops, r.metrics)};
}

std::vector<ResultRow> run_counter_cmd(const Options& o) {
  const SimConfig cfg = make_config(o);
  const CounterScheme scheme = parse_counter_scheme(scheme_or(o, "aa"));
  constexpr std::uint32_t kPages = 16;
  Rng rng(cfg.seed);
  const auto trace = make_counter_trace(cfg.num_procs, cfg.ops_per_proc, kPages, rng);
  const CounterResult r = run_counter(cfg, scheme, trace, kPages);
  if (r.counts != counter_oracle(trace, cfg.num_procs, kPages)) throw SimError("access counts differ from the trace");
  std::cerr << "counter: counts match the trace; extra remote ops " << r.extra_ops << "\n";
  return {make_row(to_string(scheme), cfg, scheme == CounterScheme::Aa, r.ops, r.metrics)};
}

std::vector<ResultRow> run_getlog_cmd(const Options& o) {
  const SimConfig cfg = make_config(o);
  const GetlogScheme scheme = parse_getlog_scheme(scheme_or(o, "aa"));
  const GetlogResult r = run_getlog(cfg, scheme, cfg.ops_per_proc, 8);
  if (r.replay_ok && !*r.replay_ok) throw SimError("log replay does not reproduce the fetched values");
  std::cerr << "getlog: payload bytes " << r.metrics.payload_bytes
            << (r.replay_ok ? ", replay reproduces every fetched value" : "") << "\n";
  return {make_row(to_string(scheme), cfg, scheme == GetlogScheme::Aa, r.ops, r.metrics)};
}

std::vector<ResultRow> run_checkpoint_cmd(const Options& o) {
  const SimConfig cfg = make_config(o);
  if (scheme_or(o, "aa") != "aa") throw ConfigError("unknown checkpoint scheme '" + o.scheme + "' (expected aa)");
  Rng rng(cfg.seed);
  const auto trace = make_checkpoint_trace(cfg.num_procs, 256, 3, cfg.ops_per_proc, rng);
  const CheckpointResult r = run_checkpoint(cfg, trace);
  if (r.dirty != checkpoint_oracle(trace, cfg.num_procs)) throw SimError("dirty page sets differ from the trace");
  std::cerr << "checkpoint: dirty sets match the write trace in all 3 epochs\n";
  return {make_row("AA", cfg, true, r.ops, r.metrics)};
}

std::vector<ResultRow> run_sort_cmd(const Options& o) {
  const SimConfig cfg = make_config(o);
  const GetlogScheme scheme = parse_getlog_scheme(scheme_or(o, "aa"));
  const SortResult r = run_sort(cfg, scheme, cfg.ops_per_proc * cfg.num_procs);
  if (!r.sorted) throw SimError("sort output is not globally sorted");
  return {make_row(to_string(scheme), cfg, scheme == GetlogScheme::Aa, r.ops, r.metrics)};
}

std::vector<ResultRow> run_sweep_cmd(const Options& o) {
  const SimConfig cfg = make_config(o);
  if (scheme_or(o, "aa-poll") != "aa-poll") throw ConfigError("sweep-iotlb runs aa-poll only");
  std::vector<ResultRow> rows;
  for (const auto& pt : run_iotlb_sweep(cfg, cfg.ops_per_proc)) {
    SimConfig c = cfg;
    c.num_procs = 17;
    c.notification = NotificationMode::Poll;
    c.iotlb_size = pt.size;
    c.iotlb_assoc = pt.assoc;
    c.iotlb_policy = pt.policy;
    rows.push_back(make_row("AA-Poll", c, true, pt.ops, pt.metrics));
    std::cerr << iotlb_label(c) << ": hit rate " << pt.hit_rate << "\n";
  }
  return rows;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Discrete-event simulator of active accesses through an extended IOMMU"};
  app.require_subcommand(1);
  Options o;
  struct Cmd {
    const char* name;
    const char* help;
    std::vector<ResultRow> (*run)(const Options&);
  };
  const std::vector<Cmd> cmds = {
      {"dht", "distributed hashtable inserts (aa-int|aa-poll|aa-sp|rma|am)", run_dht_cmd},
      {"counter", "page access counting (aa|rma-atomics|allreduce)", run_counter_cmd},
      {"getlog", "get logging for fault tolerance (aa|rma-sendback|no-ft)", run_getlog_cmd},
      {"checkpoint", "incremental checkpointing of remotely written pages (aa)", run_checkpoint_cmd},
      {"sort", "sample sort with logged exchange gets (aa|rma-sendback|no-ft)", run_sort_cmd},
      {"sweep-iotlb", "IOTLB size x associativity x policy sweep", run_sweep_cmd},
  };
  std::vector<CLI::App*> subs;
  for (const auto& c : cmds) {
    auto* sub = app.add_subcommand(c.name, c.help);
    add_common(sub, o);
    subs.push_back(sub);
  }
  CLI11_PARSE(app, argc, argv);

  try {
    for (std::size_t i = 0; i < cmds.size(); ++i) {
      if (!subs[i]->parsed()) continue;
      const auto rows = cmds[i].run(o);
      std::cout << to_csv(rows);
      if (!o.out.empty()) write_results(o.out, rows);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
