// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "duplexsim/model.hpp"

namespace duplexsim {

enum class PimVariant { none, logic_pim, bank_pim, bankgroup_pim };

const char* to_string(PimVariant v);
PimVariant pim_variant_from_string(const std::string& s);

// Bank-bundle layout of one HBM stack. Defaults follow HBM3 8-hi: two
// ranks, 16 banks per rank and pseudo channel arranged as 4 bank groups of
// 4, split into four 8-bank bundles.
struct MemoryGeometry {
  std::uint64_t ranks_per_stack = 2;
  std::uint64_t bank_groups_per_pc = 4;
  std::uint64_t banks_per_bank_group = 4;
  std::uint64_t bundles_per_pc = 4;
  std::uint64_t banks_per_bundle = 8;
  double tccd_s = 1.5e-9;
  double tccd_l = 3.0e-9;  // 2 * tccd_s
  std::uint64_t bits_per_bundle_beat = 512;
  // Fraction of peak the transaction engine sustains; folds row activation
  // and refresh into one knob, applied to both paths.
  double efficiency = 0.9;

  void validate() const;
};

struct StackConfig {
  std::uint64_t capacity_bytes = 16ULL << 30;
  std::uint64_t n_pseudo_channels = 16;
  // xPU-path bandwidth of one stack. The default is back-solved from the
  // Logic-PIM spec point (21.3 TFLOPS at peak Op/B 8, 4x amplification);
  // see derive_bandwidths.
  double base_bw_per_stack = 665.625e9;
  PimVariant pim_variant = PimVariant::logic_pim;
  double pim_bw_multiplier = 4.0;
  double pim_peak_flops_per_stack = 21.3e12;
  MemoryGeometry geometry;

  void validate() const;
};

StackConfig stack_preset(PimVariant v);

struct DeviceConfig {
  std::string name = "duplex";
  double xpu_peak_flops = 990e12;  // H100-class FP16 dense
  std::uint64_t n_stacks = 5;
  StackConfig stack;
  double launch_overhead_s = 5e-6;

  std::uint64_t capacity_bytes() const { return n_stacks * stack.capacity_bytes; }
  void validate() const;
};

struct Bandwidths {
  double xpu_bw = 0;  // bytes/s across all stacks
  double pim_bw = 0;  // 0 when the device has no PIM
};

Bandwidths derive_bandwidths(const DeviceConfig& d);

struct SystemConfig {
  std::string name = "duplex";
  std::uint64_t n_nodes = 1;
  std::uint64_t devices_per_node = 4;  // <= 8
  double intra_node_bw = 900e9;        // bidirectional NVLink-class
  double inter_node_bw = 400e9;
  double inter_node_latency_s = 2e-6;
  DeviceConfig device;
  std::uint64_t max_batch = 64;
  // Heterogeneous split (xPU-only devices alongside PIM devices) used by
  // the hetero system; zero on homogeneous systems.
  std::uint64_t hetero_gpu_devices = 0;
  std::uint64_t hetero_pim_devices = 0;

  bool is_hetero() const { return hetero_pim_devices > 0; }
  void validate() const;
};

// Named system presets: gpu_baseline, duplex, bank_pim, bankgroup_pim,
// hetero. Topology (nodes x devices) follows the evaluated model.
SystemConfig system_preset(const std::string& name, const ModelConfig& m);
std::vector<std::string> system_preset_names();

// Default node topology per model family (by parameter count).
void default_topology(const ModelConfig& m, std::uint64_t& n_nodes, std::uint64_t& devices_per_node);

}  // namespace duplexsim
