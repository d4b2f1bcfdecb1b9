// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "duplexsim/metrics.hpp"
#include "duplexsim/sched.hpp"

namespace duplexsim {

// Everything one invocation needs: what to run and what to emit.
struct ExperimentSpec {
  std::string model;                 // preset name or config path
  std::string system;                // preset name or config path; empty = per-mode default
  std::vector<Mode> modes;
  std::vector<std::uint64_t> l_in = {2048};
  std::vector<std::uint64_t> l_out = {1024};
  std::vector<std::uint64_t> batch = {64};
  double qps = 0;
  std::uint64_t n_requests = 64;
  std::vector<std::uint64_t> seeds = {1};
  std::string out_dir = "out";
  bool emit_trace = false;
  bool emit_csv = true;
  bool emit_placement = false;
  std::uint64_t workers = 0;  // 0 = hardware concurrency

  void validate() const;
};

struct RunResult {
  Mode mode = Mode::gpu_baseline;
  std::uint64_t seed = 0;
  std::uint64_t l_in = 0;
  std::uint64_t l_out = 0;
  std::uint64_t batch = 0;
  double tokens_per_s = 0;
  double decode_only_fraction = 0;
  LatencyReport latency;
  EnergyReport energy;
};

// Runs one (mode, seed, cell) combination.
RunResult run_once(const ExperimentSpec& spec, Mode mode, std::uint64_t seed,
                   std::uint64_t l_in, std::uint64_t l_out, std::uint64_t batch,
                   Trace* trace_out = nullptr);

// run: every (mode x seed) combo of the spec's single cell; writes CSVs and
// optional traces under out_dir. Returns 0 on success.
int cmd_run(const ExperimentSpec& spec);

// sweep: cartesian (l_in x l_out x batch x mode x seed); emits an
// aggregated throughput table normalized against gpu_baseline rows when
// present. Deterministic merge in key order regardless of worker count.
int cmd_sweep(const ExperimentSpec& spec);

// figures: reduced recipes named stage_ratio, roofline, edap, throughput,
// latency.
int cmd_figures(const std::string& name, const ExperimentSpec& spec);

// The sweep table keyed for deterministic merging.
struct SweepKey {
  std::uint64_t l_in, l_out, batch, seed;
  Mode mode;
  auto operator<=>(const SweepKey&) const = default;
};

std::map<SweepKey, RunResult> run_sweep_grid(const ExperimentSpec& spec);

}  // namespace duplexsim
