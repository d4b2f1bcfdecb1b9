// SPDX-License-Identifier: Apache-2.0
#include "duplexsim/experiment.hpp"

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "duplexsim/config_io.hpp"

namespace duplexsim {

namespace fs = std::filesystem;

void ExperimentSpec::validate() const {
  if (model.empty()) throw ConfigError("missing required field: model");
  if (modes.empty()) throw ConfigError("missing required field: mode");
  if (seeds.empty()) throw ConfigError("missing required field: seeds");
  if (l_in.empty() || l_out.empty() || batch.empty())
    throw ConfigError("missing required field: l_in/l_out/batch");
  if (n_requests == 0) throw ConfigError("missing required field: requests");
}

namespace {

SystemConfig system_for(const ExperimentSpec& spec, Mode mode, const ModelConfig& m,
                        std::uint64_t batch) {
  SystemConfig sys;
  if (!spec.system.empty()) {
    sys = resolve_system(spec.system, m);
  } else {
    switch (mode) {
      case Mode::gpu_baseline: sys = system_preset("gpu_baseline", m); break;
      case Mode::gpu_2x: {
        sys = system_preset("gpu_baseline", m);
        // Twice the devices: grow within the node to eight, then add nodes.
        std::uint64_t total = 2 * sys.n_nodes * sys.devices_per_node;
        sys.devices_per_node = std::min<std::uint64_t>(8, total);
        sys.n_nodes = (total + sys.devices_per_node - 1) / sys.devices_per_node;
        break;
      }
      case Mode::hetero: sys = system_preset("hetero", m); break;
      case Mode::bank_pim: sys = system_preset("bank_pim", m); break;
      default: sys = system_preset("duplex", m); break;
    }
  }
  sys.max_batch = batch;
  return sys;
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << content;
}

}  // namespace

RunResult run_once(const ExperimentSpec& spec, Mode mode, std::uint64_t seed, std::uint64_t l_in,
                   std::uint64_t l_out, std::uint64_t batch, Trace* trace_out) {
  const ModelConfig m = resolve_model(spec.model);
  const SystemConfig sys = system_for(spec, mode, m, batch);

  WorkloadParams wp;
  wp.n_requests = spec.n_requests;
  wp.mean_l_in = static_cast<double>(l_in);
  wp.mean_l_out = static_cast<double>(l_out);
  wp.qps = spec.qps;
  auto workload = gen_workload(seed, wp);

  SimOptions opt;
  opt.seed = seed;
  Trace trace = run(m, sys, mode, std::move(workload), opt);

  RunResult r;
  r.mode = mode;
  r.seed = seed;
  r.l_in = l_in;
  r.l_out = l_out;
  r.batch = batch;
  r.tokens_per_s = throughput(trace);
  r.decode_only_fraction = duplexsim::decode_only_fraction(trace);
  r.latency = latencies(trace);
  r.energy = energy_report(trace, sys, opt.energy);
  if (trace_out) *trace_out = std::move(trace);
  return r;
}

std::map<SweepKey, RunResult> run_sweep_grid(const ExperimentSpec& spec) {
  spec.validate();
  std::vector<SweepKey> keys;
  for (auto li : spec.l_in)
    for (auto lo : spec.l_out)
      for (auto b : spec.batch)
        for (auto s : spec.seeds)
          for (auto mode : spec.modes) keys.push_back({li, lo, b, s, mode});

  std::map<SweepKey, RunResult> results;
  std::mutex mu;
  std::atomic<std::size_t> next{0};
  const std::size_t n_workers = std::max<std::size_t>(
      1, spec.workers ? spec.workers : std::thread::hardware_concurrency());
  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= keys.size()) return;
      const SweepKey& k = keys[i];
      RunResult r = run_once(spec, k.mode, k.seed, k.l_in, k.l_out, k.batch);
      std::lock_guard<std::mutex> lock(mu);
      results.emplace(k, std::move(r));
    }
  };
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i + 1 < n_workers && i + 1 < keys.size(); ++i)
    threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  return results;  // std::map iterates in key order: merge is deterministic
}

int cmd_run(const ExperimentSpec& spec) {
  spec.validate();
  fs::create_directories(spec.out_dir);
  const ModelConfig m = resolve_model(spec.model);

  std::string latency_csv = latency_csv_header();
  std::string tput_csv = throughput_csv_header();
  for (Mode mode : spec.modes) {
    for (auto seed : spec.seeds) {
      Trace trace;
      RunResult r = run_once(spec, mode, seed, spec.l_in[0], spec.l_out[0], spec.batch[0],
                             spec.emit_trace ? &trace : nullptr);
      latency_csv += latency_csv_rows(to_string(mode), m.name, r.l_in, r.l_out, r.batch, r.latency);
      tput_csv += throughput_csv_row(to_string(mode), m.name, r.l_in, r.l_out, r.batch,
                                     r.tokens_per_s, 0.0);
      if (spec.emit_trace) {
        char name[128];
        std::snprintf(name, sizeof(name), "trace_%s_%s_seed%llu.jsonl", m.name.c_str(),
                      to_string(mode), static_cast<unsigned long long>(seed));
        write_file(fs::path(spec.out_dir) / name, trace.to_jsonl());
      }
      write_file(fs::path(spec.out_dir) / ("energy_" + std::string(to_string(mode)) + ".csv"),
                 energy_csv(r.energy));
    }
    if (spec.emit_placement) {
      const SystemConfig sys = system_for(spec, mode, m, spec.batch[0]);
      Simulator sim(m, sys, mode, SimOptions{});
      write_file(fs::path(spec.out_dir) / ("placement_" + std::string(to_string(mode)) + ".json"),
                 sim.placement().to_json(m, sys));
    }
  }
  if (spec.emit_csv) {
    write_file(fs::path(spec.out_dir) / "latency.csv", latency_csv);
    write_file(fs::path(spec.out_dir) / "throughput.csv", tput_csv);
  }
  return 0;
}

int cmd_sweep(const ExperimentSpec& spec) {
  spec.validate();
  fs::create_directories(spec.out_dir);
  const ModelConfig m = resolve_model(spec.model);
  const auto results = run_sweep_grid(spec);

  // Seed-averaged throughput per cell, normalized to gpu_baseline rows when
  // they are part of the sweep.
  struct Cell {
    double sum = 0;
    std::uint64_t n = 0;
  };
  std::map<std::tuple<std::uint64_t, std::uint64_t, std::uint64_t, Mode>, Cell> cells;
  for (const auto& [k, r] : results) {
    auto& c = cells[{k.l_in, k.l_out, k.batch, k.mode}];
    c.sum += r.tokens_per_s;
    c.n += 1;
  }
  std::string csv = throughput_csv_header();
  for (const auto& [key, c] : cells) {
    const auto [li, lo, b, mode] = key;
    const double mean = c.sum / static_cast<double>(c.n);
    double speedup = 0;
    auto base = cells.find({li, lo, b, Mode::gpu_baseline});
    if (base != cells.end() && base->second.sum > 0)
      speedup = mean / (base->second.sum / static_cast<double>(base->second.n));
    csv += throughput_csv_row(to_string(mode), m.name, li, lo, b, mean, speedup);
  }
  write_file(fs::path(spec.out_dir) / "sweep_throughput.csv", csv);
  return 0;
}

int cmd_figures(const std::string& name, const ExperimentSpec& base) {
  ExperimentSpec spec = base;
  fs::create_directories(spec.out_dir);
  const ModelConfig m = resolve_model(spec.model.empty() ? "mixtral" : spec.model);
  spec.model = m.name;

  if (name == "edap") {
    const DeviceConfig dev = system_preset("duplex", m).device;
    const auto rows = edap_sweep({1, 2, 4, 8, 16, 32}, default_edap_variants(), dev);
    write_file(fs::path(spec.out_dir) / "edap.csv", edap_csv(rows));
    return 0;
  }
  if (name == "stage_ratio") {
    // Decode-only share per (l_in, l_out) cell, closed loop.
    spec.modes = {Mode::gpu_baseline};
    std::string csv = "model,l_in,l_out,batch,decode_only_fraction\n";
    for (auto cell : {std::pair<std::uint64_t, std::uint64_t>{512, 512},
                      {512, 1024}, {2048, 512}, {2048, 1024}}) {
      RunResult r = run_once(spec, Mode::gpu_baseline, spec.seeds[0], cell.first, cell.second,
                             spec.batch[0]);
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%s,%llu,%llu,%llu,%.6f\n", m.name.c_str(),
                    static_cast<unsigned long long>(cell.first),
                    static_cast<unsigned long long>(cell.second),
                    static_cast<unsigned long long>(spec.batch[0]), r.decode_only_fraction);
      csv += buf;
    }
    write_file(fs::path(spec.out_dir) / "stage_ratio.csv", csv);
    return 0;
  }
  if (name == "roofline") {
    Trace trace;
    run_once(spec, Mode::gpu_baseline, spec.seeds[0], spec.l_in[0], spec.l_out[0], spec.batch[0],
             &trace);
    const SystemConfig sys = system_preset("gpu_baseline", m);
    write_file(fs::path(spec.out_dir) / "roofline.csv", roofline_csv(roofline_points(trace, sys)));
    return 0;
  }
  if (name == "throughput") {
    spec.modes = {Mode::gpu_baseline, Mode::duplex, Mode::duplex_pe, Mode::duplex_pe_et};
    return cmd_sweep(spec);
  }
  if (name == "latency") {
    spec.modes = {Mode::gpu_baseline, Mode::duplex, Mode::duplex_pe_et};
    return cmd_run(spec);
  }
  throw ConfigError("unknown figure: " + name +
                    " (expected stage_ratio, roofline, edap, throughput, latency)");
}

}  // namespace duplexsim
