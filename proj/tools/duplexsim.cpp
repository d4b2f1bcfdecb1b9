// SPDX-License-Identifier: Apache-2.0
//
// Experiment runner: single runs, parameter sweeps, and reduced
// figure-reproduction recipes, all emitting CSV/JSONL under --out.

#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "duplexsim/config_io.hpp"
#include "duplexsim/experiment.hpp"

using namespace duplexsim;

namespace {

void add_common(CLI::App* cmd, ExperimentSpec& spec, std::vector<std::string>& mode_names) {
  cmd->add_option("--model", spec.model, "model preset (mixtral, glam, grok1, opt, llama3) or JSON path");
  cmd->add_option("--system", spec.system, "system preset or JSON path (default: per-mode)");
  cmd->add_option("--mode", mode_names, "modes: gpu_baseline gpu_2x hetero bank_pim duplex duplex_pe duplex_pe_et");
  cmd->add_option("--l-in", spec.l_in, "mean input length(s)");
  cmd->add_option("--l-out", spec.l_out, "mean output length(s)");
  cmd->add_option("--batch", spec.batch, "max batch size(s)");
  cmd->add_option("--qps", spec.qps, "Poisson arrival rate; 0 = closed loop");
  cmd->add_option("--requests", spec.n_requests, "number of requests");
  cmd->add_option("--seeds", spec.seeds, "workload seeds");
  cmd->add_option("--out", spec.out_dir, "output directory (env DUPLEXSIM_OUT overrides)");
  cmd->add_flag("--emit-trace", spec.emit_trace, "write per-run trace JSONL");
  cmd->add_flag("--emit-placement", spec.emit_placement, "write placement dump JSON");
  cmd->add_option("--workers", spec.workers, "sweep worker threads (0 = all cores)");
}

void finalize(ExperimentSpec& spec, const std::vector<std::string>& mode_names) {
  for (const auto& n : mode_names) spec.modes.push_back(mode_from_string(n));
  if (const char* env = std::getenv("DUPLEXSIM_OUT"); env && *env) spec.out_dir = env;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"duplexsim: LLM serving simulator for xPU + Logic-PIM devices"};
  app.require_subcommand(1);

  ExperimentSpec spec;
  std::vector<std::string> mode_names;
  std::string figure_name;

  CLI::App* c_run = app.add_subcommand("run", "run one experiment cell per (mode x seed)");
  add_common(c_run, spec, mode_names);
  CLI::App* c_sweep = app.add_subcommand("sweep", "cartesian sweep over l-in/l-out/batch");
  add_common(c_sweep, spec, mode_names);
  CLI::App* c_fig = app.add_subcommand("figures", "reduced figure recipes");
  c_fig->add_option("name", figure_name,
                    "one of: stage_ratio, roofline, edap, throughput, latency")->required();
  add_common(c_fig, spec, mode_names);

  CLI11_PARSE(app, argc, argv);

  try {
    finalize(spec, mode_names);
    if (c_run->parsed()) {
      if (spec.modes.empty()) throw ConfigError("missing required field: mode");
      return cmd_run(spec);
    }
    if (c_sweep->parsed()) {
      if (spec.modes.empty()) throw ConfigError("missing required field: mode");
      return cmd_sweep(spec);
    }
    if (c_fig->parsed()) {
      if (spec.model.empty()) spec.model = "mixtral";
      if (spec.modes.empty()) spec.modes = {Mode::gpu_baseline};
      if (figure_name == "stage_ratio" || figure_name == "roofline") {
        // Reduced defaults keep the recipes desk-scale.
        if (spec.n_requests == 64) spec.n_requests = 48;
      }
      return cmd_figures(figure_name, spec);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
