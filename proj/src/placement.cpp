// SPDX-License-Identifier: Apache-2.0
#include "duplexsim/placement.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

namespace duplexsim {

const char* to_string(ExpertStrategy s) {
  return s == ExpertStrategy::expert_parallel ? "expert_parallel" : "tensor_parallel_experts";
}

std::vector<std::uint64_t> split_counts(std::uint64_t total, std::uint64_t parts) {
  if (parts == 0) throw std::invalid_argument("split_counts: parts must be >= 1");
  std::vector<std::uint64_t> out(parts, total / parts);
  const std::uint64_t rem = total % parts;
  for (std::uint64_t i = 0; i < rem; ++i) out[i] += 1;
  return out;
}

std::vector<WorkProfile> stack_split(const WorkProfile& work, std::uint64_t n_stacks) {
  if (n_stacks == 0) throw std::invalid_argument("stack_split: n_stacks must be >= 1");
  const auto flops = split_counts(work.flops, n_stacks);
  const auto wb = split_counts(work.weight_bytes, n_stacks);
  const auto ab = split_counts(work.act_bytes, n_stacks);
  std::vector<WorkProfile> out(n_stacks);
  for (std::uint64_t s = 0; s < n_stacks; ++s) {
    out[s].kernel_class = work.kernel_class;
    out[s].flops = flops[s];
    out[s].weight_bytes = wb[s];
    out[s].act_bytes = ab[s];
  }
  return out;
}

std::uint64_t expert_bytes(const ModelConfig& m) {
  return 3 * m.hidden * m.intermediate * m.weight_precision_bytes;
}

std::uint64_t non_expert_bytes_per_layer(const ModelConfig& m, std::uint64_t layer) {
  const std::uint64_t prec = m.weight_precision_bytes;
  const std::uint64_t qkv = m.hidden * (m.hidden + 2 * (m.hidden / m.grp)) * prec;
  const std::uint64_t proj = m.hidden * m.hidden * prec;
  std::uint64_t bytes = qkv + proj;
  if (m.layer_is_moe(layer)) {
    bytes += m.hidden * m.n_experts * prec;  // gate
  } else {
    bytes += expert_bytes(m);  // dense FFN, same three-FC shape
  }
  return bytes;
}

namespace {

struct Footprint {
  std::uint64_t non_expert = 0;     // whole model
  std::uint64_t experts_total = 0;  // all experts, all MoE layers
};

Footprint model_footprint(const ModelConfig& m) {
  Footprint f;
  for (std::uint64_t l = 0; l < m.n_layers; ++l) f.non_expert += non_expert_bytes_per_layer(m, l);
  // Embedding and LM head, one FC each.
  f.non_expert += 2 * m.hidden * m.hidden * m.weight_precision_bytes;
  f.experts_total = m.n_moe_layers() * m.n_experts * expert_bytes(m);
  return f;
}

}  // namespace

CapacityReport validate_system(const SystemConfig& sys, const ModelConfig& m,
                               ExpertStrategy strategy, std::uint64_t probe_ctx_len) {
  sys.validate();
  m.validate();
  const Footprint f = model_footprint(m);
  const std::uint64_t dpn = sys.devices_per_node;

  CapacityReport r;
  r.capacity_bytes = sys.device.capacity_bytes();
  r.ctx_len_probed = probe_ctx_len;

  std::uint64_t expert_dev = 0;
  if (m.n_experts > 0) {
    if (strategy == ExpertStrategy::tensor_parallel_experts) {
      // Every device holds 1/devices of every expert; multi-node systems
      // put expert parallelism between nodes.
      const std::uint64_t experts_per_node =
          (m.n_experts + sys.n_nodes - 1) / sys.n_nodes;
      expert_dev = (m.n_moe_layers() * experts_per_node * expert_bytes(m) + dpn - 1) / dpn;
    } else {
      // Whole experts distributed round-robin: the widest device carries
      // ceil(n_experts / devices) of them per MoE layer. Expert
      // parallelism spans all devices of the system.
      const std::uint64_t n_devices = sys.n_nodes * dpn;
      const std::uint64_t owned = (m.n_experts + n_devices - 1) / n_devices;
      expert_dev = m.n_moe_layers() * owned * expert_bytes(m);
    }
  }
  // Non-expert weights: tensor parallel within the node, replicated across
  // nodes (data parallelism).
  const std::uint64_t non_expert_dev = (f.non_expert + dpn - 1) / dpn;

  r.expert_bytes_per_device = expert_dev;
  r.weight_bytes_per_device = expert_dev + non_expert_dev;
  if (r.weight_bytes_per_device > r.capacity_bytes) {
    r.fits = false;
    r.shortfall_bytes = r.weight_bytes_per_device - r.capacity_bytes;
    return r;
  }
  r.fits = true;
  r.kv_bytes_free = r.capacity_bytes - r.weight_bytes_per_device;
  if (probe_ctx_len > 0) {
    // KV is head-sharded with the attention: 1/devices of each request's
    // cache per device within a node; nodes hold their own batch shard.
    const std::uint64_t kv_req_dev = (kv_cache_bytes(m, probe_ctx_len) + dpn - 1) / dpn;
    if (kv_req_dev > 0)
      r.max_batch_at_ctx = r.kv_bytes_free / kv_req_dev * sys.n_nodes;
  }
  return r;
}

Placement plan(const ModelConfig& m, const SystemConfig& sys, ExpertStrategy strategy,
               std::uint64_t probe_ctx_len) {
  const CapacityReport cap = validate_system(sys, m, strategy, probe_ctx_len);
  if (!cap.fits) {
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "capacity-exceeded: weights need %llu B/device, capacity %llu B (short %llu B)",
                  static_cast<unsigned long long>(cap.weight_bytes_per_device),
                  static_cast<unsigned long long>(cap.capacity_bytes),
                  static_cast<unsigned long long>(cap.shortfall_bytes));
    throw CapacityError(buf, cap.shortfall_bytes);
  }

  Placement p;
  p.expert_strategy = strategy;
  p.devices_per_node = sys.devices_per_node;
  p.n_nodes = sys.n_nodes;
  p.weight_bytes_per_device = cap.weight_bytes_per_device;
  p.expert_bytes_per_device = cap.expert_bytes_per_device;
  p.kv_bytes_free_per_device = cap.kv_bytes_free;

  if (m.n_experts > 0) {
    if (strategy == ExpertStrategy::tensor_parallel_experts) {
      p.expert_shard_fraction = 1.0 / static_cast<double>(sys.devices_per_node);
      if (sys.n_nodes > 1) {
        // Expert parallelism between nodes: expert e lives on node e % n.
        p.node_of_expert.resize(m.n_experts);
        for (std::uint64_t e = 0; e < m.n_experts; ++e) p.node_of_expert[e] = e % sys.n_nodes;
      }
    } else {
      // Whole experts round-robin across every device of the system;
      // surplus experts land on the lowest device indices.
      const std::uint64_t n_devices = sys.n_nodes * sys.devices_per_node;
      p.experts_on_device.resize(n_devices);
      for (std::uint64_t e = 0; e < m.n_experts; ++e)
        p.experts_on_device[e % n_devices].push_back(e);
      if (sys.n_nodes > 1) {
        p.node_of_expert.resize(m.n_experts);
        for (std::uint64_t e = 0; e < m.n_experts; ++e)
          p.node_of_expert[e] = (e % n_devices) / sys.devices_per_node;
      }
    }
  }
  return p;
}

std::vector<BundleId> space_bundles(const DeviceConfig& d, std::uint32_t space) {
  if (space >= d.stack.geometry.bundles_per_pc)
    throw std::invalid_argument("space_bundles: space index out of range");
  std::vector<BundleId> v;
  v.reserve(d.n_stacks * d.stack.n_pseudo_channels);
  for (std::uint32_t s = 0; s < d.n_stacks; ++s)
    for (std::uint32_t pc = 0; pc < d.stack.n_pseudo_channels; ++pc)
      v.push_back({s, pc, space});
  return v;
}

double kv_migration_cost(std::uint64_t new_prefill_tokens, const ModelConfig& m,
                         const DeviceConfig& d) {
  if (new_prefill_tokens == 0) return 0.0;
  const std::uint64_t bytes = kv_cache_bytes(m, new_prefill_tokens);
  BundleLedger scratch(d);
  const Placement p;  // default space map
  double t = scratch.service(
      {AccessPath::xpu, space_bundles(d, p.prefill_scratch_space), bytes, 0.0});
  t = scratch.service({AccessPath::xpu, space_bundles(d, p.kv_spaces[0]), bytes, t});
  return t;
}

std::string Placement::to_json(const ModelConfig& m, const SystemConfig& s) const {
  std::string out = "{\n";
  char buf[256];
  std::snprintf(buf, sizeof(buf), "  \"model\": \"%s\",\n  \"system\": \"%s\",\n",
                m.name.c_str(), s.name.c_str());
  out += buf;
  std::snprintf(buf, sizeof(buf), "  \"expert_strategy\": \"%s\",\n", to_string(expert_strategy));
  out += buf;
  std::snprintf(buf, sizeof(buf),
                "  \"weight_bytes_per_device\": %llu,\n  \"expert_bytes_per_device\": %llu,\n"
                "  \"kv_bytes_free_per_device\": %llu,\n",
                static_cast<unsigned long long>(weight_bytes_per_device),
                static_cast<unsigned long long>(expert_bytes_per_device),
                static_cast<unsigned long long>(kv_bytes_free_per_device));
  out += buf;
  out += "  \"experts_on_device\": [";
  for (std::size_t d = 0; d < experts_on_device.size(); ++d) {
    out += d ? ", [" : "[";
    for (std::size_t i = 0; i < experts_on_device[d].size(); ++i) {
      if (i) out += ", ";
      out += std::to_string(experts_on_device[d][i]);
    }
    out += "]";
  }
  out += "],\n";
  out += "  \"memory_spaces\": {\"experts\": \"expert_id % 4\", \"kv\": [0, 1, 2], "
         "\"prefill_scratch\": 3}\n";
  out += "}\n";
  return out;
}

}  // namespace duplexsim
