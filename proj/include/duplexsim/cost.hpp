// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "duplexsim/hardware.hpp"
#include "duplexsim/model.hpp"

namespace duplexsim {

enum class UnitKind { xpu, pim, link };

const char* to_string(UnitKind k);

// One execution unit as the roofline sees it.
struct ExecUnit {
  UnitKind kind = UnitKind::xpu;
  double peak_flops = 0;
  double bandwidth = 0;  // bytes/s
  double launch_overhead_s = 0;

  double peak_op_b() const { return peak_flops / bandwidth; }
};

// Device-level units (all stacks striped) and the single-stack PIM unit
// used when work is split across stacks.
ExecUnit xpu_unit(const DeviceConfig& d);
ExecUnit pim_unit(const DeviceConfig& d);
ExecUnit pim_stack_unit(const DeviceConfig& d);

// max(compute, memory) roofline plus a fixed launch overhead.
double kernel_time(const WorkProfile& p, const ExecUnit& u);

// Ring all-reduce: 2 * (n-1)/n * bytes / link_bw; a single participant
// costs nothing.
double allreduce_time(std::uint64_t bytes, std::uint64_t n_participants, double link_bw);

// One-directional all-to-all leg under the same ring accounting.
double all_to_all_time(std::uint64_t bytes, std::uint64_t n_participants, double link_bw);

// xPU reads every stack's partial sums and accumulates them.
double intra_device_reduce_time(std::uint64_t partial_bytes_per_stack, const DeviceConfig& d);
WorkProfile intra_device_reduce_profile(std::uint64_t partial_bytes_per_stack,
                                        const DeviceConfig& d);

struct EnergyParams {
  double dram_read_pj_per_bit_xpu = 6.0;
  double dram_read_pj_per_bit_pim = 4.0;
  double compute_pj_per_flop_xpu = 0.5;
  double compute_pj_per_flop_pim = 0.5;
  double link_pj_per_bit = 8.0;
  double static_w_per_device = 0.0;

  void validate() const;
};

// DRAM-read plus compute energy of one kernel on the given unit kind.
double kernel_energy(const WorkProfile& p, UnitKind unit, const EnergyParams& params);

// ---- EDAP comparison of PIM variants -------------------------------------

double edap(double delay_s, double energy_j, double area_mm2);

// Constants for one PIM variant in the EDAP sweep. Logic-PIM area is the
// synthesized 17.80 mm2 per stack; the Bank-PIM and BankGroup-PIM area and
// energy inputs are calibration defaults (DRAM-die process premium folded
// in), chosen to reproduce ordinal behaviour only.
struct EdapVariant {
  std::string name;
  PimVariant variant = PimVariant::logic_pim;
  double area_mm2_per_stack = 0;
  double dram_pj_per_bit = 0;
  double compute_pj_per_flop = 0;
};

std::vector<EdapVariant> default_edap_variants();

struct EdapRow {
  double op_b = 0;
  std::string variant;
  double delay_s = 0;
  double energy_j = 0;
  double area_mm2 = 0;
  double edap = 0;
};

// FP16 GEMM with a fixed 16384x4096 weight matrix; the token count sets the
// weight-level Op/B of each sweep point.
std::vector<EdapRow> edap_sweep(const std::vector<double>& op_b_range,
                                const std::vector<EdapVariant>& variants,
                                const DeviceConfig& base_device);

std::string edap_csv(const std::vector<EdapRow>& rows);

}  // namespace duplexsim
