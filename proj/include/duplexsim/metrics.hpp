// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "duplexsim/cost.hpp"
#include "duplexsim/sched.hpp"

namespace duplexsim {

struct Percentiles {
  double p50 = 0;
  double p90 = 0;
  double p99 = 0;
};

// Nearest-rank percentile over a copy of the samples; p in (0, 100].
double percentile(std::vector<double> samples, double p);

struct LatencyReport {
  std::vector<double> t2ft;  // per completed request
  std::vector<double> e2e;
  std::vector<double> tbt;   // pooled across requests
  Percentiles t2ft_p, e2e_p, tbt_p;
  std::uint64_t excluded_incomplete = 0;
};

LatencyReport latencies(const Trace& trace);

double throughput(const Trace& trace);  // generated tokens per second

// Decode-only stage count over all stages.
double decode_only_fraction(const Trace& trace);

struct EnergyReport {
  std::map<std::string, double> joules_per_class;
  double dram_joules = 0;
  double compute_joules = 0;
  double link_joules = 0;
  double static_joules = 0;
  double total_joules = 0;
  double joules_per_token = 0;
};

EnergyReport energy_report(const Trace& trace, const SystemConfig& sys, const EnergyParams& params);

struct RooflinePoint {
  std::string kernel_class;
  UnitKind unit = UnitKind::xpu;
  StageKind stage_kind = StageKind::decode_only;
  double op_b = 0;
  double achieved_flops = 0;   // flops/s over busy time
  double utilization = 0;      // achieved / system peak of that unit
  std::uint64_t flops = 0;
  std::uint64_t bytes = 0;
  double busy_s = 0;
};

std::vector<RooflinePoint> roofline_points(const Trace& trace, const SystemConfig& sys);

struct UnitBusy {
  double xpu_fraction = 0;
  double pim_fraction = 0;
  double link_fraction = 0;
  double wall_s = 0;
};

UnitBusy unit_busy(const Trace& trace);

// ---- CSV emitters ----------------------------------------------------------

std::string latency_csv_header();
std::string latency_csv_rows(const std::string& mode, const std::string& model,
                             std::uint64_t l_in, std::uint64_t l_out, std::uint64_t batch,
                             const LatencyReport& r);

std::string throughput_csv_header();
std::string throughput_csv_row(const std::string& mode, const std::string& model,
                               std::uint64_t l_in, std::uint64_t l_out, std::uint64_t batch,
                               double tokens_per_s, double speedup_vs_baseline);

std::string energy_csv(const EnergyReport& r);
std::string roofline_csv(const std::vector<RooflinePoint>& pts);

}  // namespace duplexsim
