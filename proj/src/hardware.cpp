// SPDX-License-Identifier: Apache-2.0
#include "duplexsim/hardware.hpp"

#include <stdexcept>

namespace duplexsim {

const char* to_string(PimVariant v) {
  switch (v) {
    case PimVariant::none: return "none";
    case PimVariant::logic_pim: return "logic_pim";
    case PimVariant::bank_pim: return "bank_pim";
    case PimVariant::bankgroup_pim: return "bankgroup_pim";
  }
  return "?";
}

PimVariant pim_variant_from_string(const std::string& s) {
  if (s == "none") return PimVariant::none;
  if (s == "logic_pim") return PimVariant::logic_pim;
  if (s == "bank_pim") return PimVariant::bank_pim;
  if (s == "bankgroup_pim") return PimVariant::bankgroup_pim;
  throw std::invalid_argument("unknown pim_variant: " + s);
}

void MemoryGeometry::validate() const {
  if (banks_per_bundle * bundles_per_pc != ranks_per_stack * bank_groups_per_pc * banks_per_bank_group)
    throw std::invalid_argument("geometry: bundles must cover all banks of both ranks");
  if (tccd_s <= 0 || tccd_l != 2 * tccd_s)
    throw std::invalid_argument("geometry: tccd_l must equal 2 * tccd_s");
  if (bits_per_bundle_beat == 0 || bits_per_bundle_beat % 8 != 0)
    throw std::invalid_argument("geometry: bits_per_bundle_beat must be a byte multiple");
  if (efficiency <= 0 || efficiency > 1)
    throw std::invalid_argument("geometry: efficiency must be in (0, 1]");
}

void StackConfig::validate() const {
  geometry.validate();
  if (capacity_bytes == 0 || n_pseudo_channels == 0 || base_bw_per_stack <= 0)
    throw std::invalid_argument("stack: capacity, pseudo channels, base bandwidth must be positive");
  if (pim_variant != PimVariant::none) {
    if (pim_bw_multiplier <= 0 || pim_peak_flops_per_stack <= 0)
      throw std::invalid_argument("stack: PIM variants need positive bandwidth and flops");
  }
}

StackConfig stack_preset(PimVariant v) {
  StackConfig s;
  s.pim_variant = v;
  switch (v) {
    case PimVariant::none:
      s.pim_bw_multiplier = 0;
      s.pim_peak_flops_per_stack = 0;
      break;
    case PimVariant::logic_pim:
      // Peak Op/B fixed at 8: 21.3 TFLOPS over 4x the base bandwidth.
      s.pim_bw_multiplier = 4.0;
      s.pim_peak_flops_per_stack = 21.3e12;
      break;
    case PimVariant::bank_pim:
      // 16x internal bandwidth, peak Op/B of 1.
      s.pim_bw_multiplier = 16.0;
      s.pim_peak_flops_per_stack = 16.0 * s.base_bw_per_stack;
      break;
    case PimVariant::bankgroup_pim:
      // Same bandwidth and compute as Logic-PIM, different die placement.
      s.pim_bw_multiplier = 4.0;
      s.pim_peak_flops_per_stack = 21.3e12;
      break;
  }
  return s;
}

void DeviceConfig::validate() const {
  stack.validate();
  if (n_stacks == 0 || xpu_peak_flops <= 0)
    throw std::invalid_argument("device: n_stacks and xpu_peak_flops must be positive");
  if (launch_overhead_s < 0) throw std::invalid_argument("device: launch overhead must be >= 0");
}

Bandwidths derive_bandwidths(const DeviceConfig& d) {
  d.validate();
  Bandwidths b;
  b.xpu_bw = static_cast<double>(d.n_stacks) * d.stack.base_bw_per_stack;
  b.pim_bw = d.stack.pim_variant == PimVariant::none ? 0.0 : b.xpu_bw * d.stack.pim_bw_multiplier;
  return b;
}

void SystemConfig::validate() const {
  device.validate();
  if (n_nodes == 0) throw std::invalid_argument("system: n_nodes must be >= 1");
  if (devices_per_node == 0 || devices_per_node > 8)
    throw std::invalid_argument("system: devices_per_node must be in 1..8");
  if (intra_node_bw <= 0 || inter_node_bw <= 0)
    throw std::invalid_argument("system: link bandwidths must be positive");
  if (max_batch == 0) throw std::invalid_argument("system: max_batch must be >= 1");
  if (is_hetero() && hetero_gpu_devices + hetero_pim_devices != devices_per_node)
    throw std::invalid_argument("system: hetero split must cover devices_per_node");
}

void default_topology(const ModelConfig& m, std::uint64_t& n_nodes, std::uint64_t& devices_per_node) {
  if (m.name == "glam") {
    n_nodes = 1; devices_per_node = 8;
  } else if (m.name == "grok1") {
    n_nodes = 2; devices_per_node = 8;
  } else {
    n_nodes = 1; devices_per_node = 4;
  }
}

SystemConfig system_preset(const std::string& name, const ModelConfig& m) {
  SystemConfig s;
  s.name = name;
  default_topology(m, s.n_nodes, s.devices_per_node);
  if (name == "gpu_baseline") {
    s.device.name = "gpu";
    s.device.stack = stack_preset(PimVariant::none);
  } else if (name == "duplex") {
    s.device.name = "duplex";
    s.device.stack = stack_preset(PimVariant::logic_pim);
  } else if (name == "bank_pim") {
    s.device.name = "bank_pim";
    s.device.stack = stack_preset(PimVariant::bank_pim);
  } else if (name == "bankgroup_pim") {
    s.device.name = "bankgroup_pim";
    s.device.stack = stack_preset(PimVariant::bankgroup_pim);
  } else if (name == "hetero") {
    // Two conventional GPUs plus two Logic-PIM devices in one node.
    s.device.name = "duplex";
    s.device.stack = stack_preset(PimVariant::logic_pim);
    s.n_nodes = 1;
    s.devices_per_node = 4;
    s.hetero_gpu_devices = 2;
    s.hetero_pim_devices = 2;
  } else {
    throw std::invalid_argument("unknown system preset: " + name);
  }
  s.validate();
  return s;
}

std::vector<std::string> system_preset_names() {
  return {"gpu_baseline", "duplex", "bank_pim", "bankgroup_pim", "hetero"};
}

}  // namespace duplexsim
