// SPDX-License-Identifier: Apache-2.0
#include "duplexsim/cost.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

namespace duplexsim {

const char* to_string(UnitKind k) {
  switch (k) {
    case UnitKind::xpu: return "xpu";
    case UnitKind::pim: return "pim";
    case UnitKind::link: return "link";
  }
  return "?";
}

ExecUnit xpu_unit(const DeviceConfig& d) {
  return {UnitKind::xpu, d.xpu_peak_flops, derive_bandwidths(d).xpu_bw, d.launch_overhead_s};
}

ExecUnit pim_unit(const DeviceConfig& d) {
  if (d.stack.pim_variant == PimVariant::none)
    throw std::invalid_argument("pim_unit: device has no PIM");
  return {UnitKind::pim, static_cast<double>(d.n_stacks) * d.stack.pim_peak_flops_per_stack,
          derive_bandwidths(d).pim_bw, d.launch_overhead_s};
}

ExecUnit pim_stack_unit(const DeviceConfig& d) {
  if (d.stack.pim_variant == PimVariant::none)
    throw std::invalid_argument("pim_stack_unit: device has no PIM");
  return {UnitKind::pim, d.stack.pim_peak_flops_per_stack,
          d.stack.base_bw_per_stack * d.stack.pim_bw_multiplier, d.launch_overhead_s};
}

double kernel_time(const WorkProfile& p, const ExecUnit& u) {
  if (u.peak_flops <= 0 || u.bandwidth <= 0)
    throw std::invalid_argument("kernel_time: unit needs positive peak flops and bandwidth");
  const double compute = static_cast<double>(p.flops) / u.peak_flops;
  const double memory = static_cast<double>(p.total_bytes()) / u.bandwidth;
  return std::max(compute, memory) + u.launch_overhead_s;
}

double allreduce_time(std::uint64_t bytes, std::uint64_t n_participants, double link_bw) {
  if (n_participants == 0) throw std::invalid_argument("allreduce_time: n_participants must be >= 1");
  if (n_participants == 1) return 0.0;
  const double n = static_cast<double>(n_participants);
  return 2.0 * (n - 1.0) / n * static_cast<double>(bytes) / link_bw;
}

double all_to_all_time(std::uint64_t bytes, std::uint64_t n_participants, double link_bw) {
  if (n_participants == 0) throw std::invalid_argument("all_to_all_time: n_participants must be >= 1");
  if (n_participants == 1) return 0.0;
  const double n = static_cast<double>(n_participants);
  return (n - 1.0) / n * static_cast<double>(bytes) / link_bw;
}

WorkProfile intra_device_reduce_profile(std::uint64_t partial_bytes_per_stack,
                                        const DeviceConfig& d) {
  WorkProfile p;
  p.kernel_class = KernelClass::allreduce_partial;
  p.act_bytes = d.n_stacks * partial_bytes_per_stack;
  // FP16 partials: (n_stacks - 1) adds per output element.
  const std::uint64_t elems = partial_bytes_per_stack / 2;
  p.flops = (d.n_stacks - 1) * elems;
  return p;
}

double intra_device_reduce_time(std::uint64_t partial_bytes_per_stack, const DeviceConfig& d) {
  d.validate();
  return kernel_time(intra_device_reduce_profile(partial_bytes_per_stack, d), xpu_unit(d));
}

void EnergyParams::validate() const {
  if (dram_read_pj_per_bit_xpu < 0 || dram_read_pj_per_bit_pim < 0 || compute_pj_per_flop_xpu < 0 ||
      compute_pj_per_flop_pim < 0 || link_pj_per_bit < 0 || static_w_per_device < 0)
    throw std::invalid_argument("energy params must be >= 0");
}

double kernel_energy(const WorkProfile& p, UnitKind unit, const EnergyParams& params) {
  const double bits = static_cast<double>(p.total_bytes()) * 8.0;
  if (unit == UnitKind::link) return bits * params.link_pj_per_bit * 1e-12;
  const double dram_pj =
      unit == UnitKind::xpu ? params.dram_read_pj_per_bit_xpu : params.dram_read_pj_per_bit_pim;
  const double compute_pj =
      unit == UnitKind::xpu ? params.compute_pj_per_flop_xpu : params.compute_pj_per_flop_pim;
  return (bits * dram_pj + static_cast<double>(p.flops) * compute_pj) * 1e-12;
}

// ---- EDAP -------------------------------------------------------------------

double edap(double delay_s, double energy_j, double area_mm2) {
  if (delay_s <= 0 || energy_j <= 0 || area_mm2 <= 0)
    throw std::invalid_argument("edap: inputs must be positive");
  return delay_s * energy_j * area_mm2;
}

std::vector<EdapVariant> default_edap_variants() {
  // Logic-PIM: synthesized processing-unit area per stack. The DRAM-die
  // variants carry the 10x process-area premium on their compute/buffers;
  // their energy constants are calibration defaults (shorter in-die
  // datapaths read cheaper than TSV transfers, which read cheaper than the
  // interposer path).
  return {
      {"bank_pim", PimVariant::bank_pim, 25.0, 2.0, 1.0},
      {"bankgroup_pim", PimVariant::bankgroup_pim, 35.0, 3.5, 1.0},
      {"logic_pim", PimVariant::logic_pim, 17.80, 4.0, 0.5},
  };
}

std::vector<EdapRow> edap_sweep(const std::vector<double>& op_b_range,
                                const std::vector<EdapVariant>& variants,
                                const DeviceConfig& base_device) {
  if (op_b_range.empty() || variants.empty())
    throw std::invalid_argument("edap_sweep: need at least one Op/B point and one variant");
  // Fixed FP16 GEMM: 16384x4096 weights; the token count is the weight-level
  // Op/B of the sweep point.
  constexpr std::uint64_t kIn = 16384, kOut = 4096, kPrec = 2;

  std::vector<EdapRow> rows;
  for (double op_b : op_b_range) {
    if (op_b <= 0) throw std::invalid_argument("edap_sweep: Op/B points must be positive");
    const auto tokens = static_cast<std::uint64_t>(op_b);
    const WorkProfile gemm = fc_cost(tokens, kIn, kOut, kPrec);
    for (const auto& v : variants) {
      DeviceConfig d = base_device;
      d.stack = stack_preset(v.variant);
      const double delay = kernel_time(gemm, pim_unit(d));
      EnergyParams ep;
      ep.dram_read_pj_per_bit_pim = v.dram_pj_per_bit;
      ep.compute_pj_per_flop_pim = v.compute_pj_per_flop;
      const double energy = kernel_energy(gemm, UnitKind::pim, ep);
      const double area = v.area_mm2_per_stack * static_cast<double>(d.n_stacks);
      rows.push_back({op_b, v.name, delay, energy, area, edap(delay, energy, area)});
    }
  }
  return rows;
}

std::string edap_csv(const std::vector<EdapRow>& rows) {
  std::string out = "op_b,variant,delay,energy,area,edap\n";
  char line[192];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%.6g,%s,%.9e,%.9e,%.6g,%.9e\n", r.op_b, r.variant.c_str(),
                  r.delay_s, r.energy_j, r.area_mm2, r.edap);
    out += line;
  }
  return out;
}

}  // namespace duplexsim
