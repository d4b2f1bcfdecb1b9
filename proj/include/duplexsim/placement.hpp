// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <stdexcept>
#include <cstdint>
#include <string>
#include <vector>

#include "duplexsim/dram.hpp"
#include "duplexsim/hardware.hpp"
#include "duplexsim/model.hpp"

namespace duplexsim {

enum class ExpertStrategy { expert_parallel, tensor_parallel_experts };

const char* to_string(ExpertStrategy s);

constexpr std::uint32_t kMemorySpaces = 4;

// Where weights and KV live: tensor parallelism for non-expert weights
// within a node, data parallelism across nodes, and either whole experts
// per device (expert parallelism) or a 1/devices slice of every expert
// (tensor-parallel experts). Bank-bundle memory spaces partition the
// bundle indices: experts round-robin over all four, KV alternates over
// three, the last one is prefill QKV scratch.
struct Placement {
  ExpertStrategy expert_strategy = ExpertStrategy::expert_parallel;
  std::uint64_t devices_per_node = 1;
  std::uint64_t n_nodes = 1;
  // expert_parallel: experts_on_device[d] lists expert ids owned by device
  // d of a node (every node replicates the layout over its own batch
  // shard; multi-node expert parallelism instead splits this list across
  // nodes, see node_of_expert).
  std::vector<std::vector<std::uint64_t>> experts_on_device;
  // tensor_parallel_experts: every device holds this fraction of each
  // expert (1/devices_per_node).
  double expert_shard_fraction = 1.0;
  // Node owning each expert when expert parallelism spans nodes
  // (duplex_pe_et multi-node); empty otherwise.
  std::vector<std::uint64_t> node_of_expert;

  std::array<std::uint32_t, 3> kv_spaces = {0, 1, 2};
  std::uint32_t prefill_scratch_space = 3;

  std::uint64_t weight_bytes_per_device = 0;  // max across devices
  std::uint64_t expert_bytes_per_device = 0;
  std::uint64_t kv_bytes_free_per_device = 0;

  std::uint32_t space_of_expert(std::uint64_t expert) const {
    return static_cast<std::uint32_t>(expert % kMemorySpaces);
  }
  std::uint32_t kv_space_of_request(std::uint64_t request_id) const {
    return kv_spaces[request_id % kv_spaces.size()];
  }

  std::string to_json(const ModelConfig& m, const SystemConfig& s) const;
};

struct CapacityReport {
  bool fits = false;
  std::uint64_t weight_bytes_per_device = 0;
  std::uint64_t expert_bytes_per_device = 0;
  std::uint64_t capacity_bytes = 0;
  std::uint64_t kv_bytes_free = 0;      // per device
  std::uint64_t shortfall_bytes = 0;    // when !fits
  std::uint64_t ctx_len_probed = 0;
  std::uint64_t max_batch_at_ctx = 0;   // system-wide
};

// Weight footprint helpers (whole model, no sharding).
std::uint64_t non_expert_bytes_per_layer(const ModelConfig& m, std::uint64_t layer);
std::uint64_t expert_bytes(const ModelConfig& m);  // one expert

CapacityReport validate_system(const SystemConfig& sys, const ModelConfig& m,
                               ExpertStrategy strategy = ExpertStrategy::expert_parallel,
                               std::uint64_t probe_ctx_len = 4096);

// Deterministic placement; throws CapacityError when weights alone exceed
// device capacity.
Placement plan(const ModelConfig& m, const SystemConfig& sys, ExpertStrategy strategy,
               std::uint64_t probe_ctx_len = 4096);

class CapacityError : public std::runtime_error {
 public:
  CapacityError(const std::string& what, std::uint64_t shortfall)
      : std::runtime_error(what), shortfall_bytes(shortfall) {}
  std::uint64_t shortfall_bytes = 0;
};

// Balanced integer split: first (total % parts) parts take the extra unit.
std::vector<std::uint64_t> split_counts(std::uint64_t total, std::uint64_t parts);

// Even split of one kernel across stacks (column-sliced experts, request-
// and head-parallel attention); fields are conserved exactly.
std::vector<WorkProfile> stack_split(const WorkProfile& work, std::uint64_t n_stacks);

// Bundles of one memory space on the given stacks (bundle index == space,
// across every pseudo channel).
std::vector<BundleId> space_bundles(const DeviceConfig& d, std::uint32_t space);

// One-time cost of moving a finished prefill's KV out of the scratch space
// into a KV space: read plus write through the xPU path of the bundle
// engine. Uses a scratch ledger; the simulator applies the same traffic to
// its live ledger.
double kv_migration_cost(std::uint64_t new_prefill_tokens, const ModelConfig& m,
                         const DeviceConfig& d);

}  // namespace duplexsim
