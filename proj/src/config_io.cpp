// SPDX-License-Identifier: Apache-2.0
#include "duplexsim/config_io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace duplexsim {

namespace {

using nlohmann::json;

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError("bad JSON in " + path + ": " + e.what());
  }
  return j;
}

template <typename T>
void get_to(const json& j, const char* field, T& out, bool required) {
  if (!j.contains(field)) {
    if (required) throw ConfigError(std::string("missing required field: ") + field);
    return;
  }
  try {
    j.at(field).get_to(out);
  } catch (const std::exception&) {
    throw ConfigError(std::string("bad value for field: ") + field);
  }
}

bool looks_like_path(const std::string& s) {
  return s.find('/') != std::string::npos || s.ends_with(".json");
}

}  // namespace

ModelConfig load_model_file(const std::string& path) {
  const json j = load_json(path);
  ModelConfig m;
  std::string base;
  get_to(j, "preset", base, false);
  if (!base.empty()) m = model_preset(base);
  get_to(j, "name", m.name, base.empty());
  get_to(j, "total_params", m.total_params, false);
  get_to(j, "n_layers", m.n_layers, base.empty());
  get_to(j, "hidden", m.hidden, base.empty());
  get_to(j, "intermediate", m.intermediate, base.empty());
  get_to(j, "n_heads", m.n_heads, base.empty());
  if (j.contains("d_head")) get_to(j, "d_head", m.d_head, false);
  else if (base.empty()) m.d_head = m.n_heads ? m.hidden / m.n_heads : 0;
  get_to(j, "grp", m.grp, false);
  get_to(j, "n_experts", m.n_experts, false);
  get_to(j, "top_k", m.top_k, false);
  if (j.contains("moe_layer_pattern")) {
    std::string p;
    get_to(j, "moe_layer_pattern", p, false);
    m.moe_layer_pattern = moe_pattern_from_string(p);
  } else if (base.empty()) {
    m.moe_layer_pattern = m.n_experts > 0 ? MoePattern::all : MoePattern::none;
  }
  get_to(j, "weight_precision_bytes", m.weight_precision_bytes, false);
  try {
    m.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid model config: ") + e.what());
  }
  return m;
}

ModelConfig resolve_model(const std::string& preset_or_path) {
  if (preset_or_path.empty()) throw ConfigError("missing required field: model");
  if (looks_like_path(preset_or_path)) return load_model_file(preset_or_path);
  const auto names = model_preset_names();
  if (std::find(names.begin(), names.end(), preset_or_path) == names.end())
    throw ConfigError("unknown model preset: " + preset_or_path +
                      " (expected one of mixtral, glam, grok1, opt, llama3, or a .json path)");
  return model_preset(preset_or_path);
}

SystemConfig load_system_file(const std::string& path, const ModelConfig& m) {
  const json j = load_json(path);
  std::string base = "duplex";
  get_to(j, "preset", base, false);
  SystemConfig s = system_preset(base, m);
  get_to(j, "name", s.name, false);
  get_to(j, "n_nodes", s.n_nodes, false);
  get_to(j, "devices_per_node", s.devices_per_node, false);
  get_to(j, "intra_node_bw", s.intra_node_bw, false);
  get_to(j, "inter_node_bw", s.inter_node_bw, false);
  get_to(j, "inter_node_latency_s", s.inter_node_latency_s, false);
  get_to(j, "max_batch", s.max_batch, false);
  get_to(j, "hetero_gpu_devices", s.hetero_gpu_devices, false);
  get_to(j, "hetero_pim_devices", s.hetero_pim_devices, false);
  if (j.contains("device")) {
    const json& d = j.at("device");
    get_to(d, "name", s.device.name, false);
    get_to(d, "xpu_peak_flops", s.device.xpu_peak_flops, false);
    get_to(d, "n_stacks", s.device.n_stacks, false);
    get_to(d, "launch_overhead_s", s.device.launch_overhead_s, false);
    if (d.contains("stack")) {
      const json& st = d.at("stack");
      if (st.contains("pim_variant")) {
        std::string v;
        get_to(st, "pim_variant", v, false);
        s.device.stack = stack_preset(pim_variant_from_string(v));
      }
      get_to(st, "capacity_bytes", s.device.stack.capacity_bytes, false);
      get_to(st, "n_pseudo_channels", s.device.stack.n_pseudo_channels, false);
      get_to(st, "base_bw_per_stack", s.device.stack.base_bw_per_stack, false);
      get_to(st, "pim_bw_multiplier", s.device.stack.pim_bw_multiplier, false);
      get_to(st, "pim_peak_flops_per_stack", s.device.stack.pim_peak_flops_per_stack, false);
      if (st.contains("geometry")) {
        const json& g = st.at("geometry");
        auto& geo = s.device.stack.geometry;
        get_to(g, "tccd_s", geo.tccd_s, false);
        if (g.contains("tccd_s") && !g.contains("tccd_l")) geo.tccd_l = 2 * geo.tccd_s;
        get_to(g, "tccd_l", geo.tccd_l, false);
        get_to(g, "efficiency", geo.efficiency, false);
        get_to(g, "bits_per_bundle_beat", geo.bits_per_bundle_beat, false);
        get_to(g, "bundles_per_pc", geo.bundles_per_pc, false);
        get_to(g, "banks_per_bundle", geo.banks_per_bundle, false);
      }
    }
  }
  try {
    s.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid system config: ") + e.what());
  }
  return s;
}

SystemConfig resolve_system(const std::string& preset_or_path, const ModelConfig& m) {
  if (looks_like_path(preset_or_path)) return load_system_file(preset_or_path, m);
  const auto names = system_preset_names();
  if (std::find(names.begin(), names.end(), preset_or_path) == names.end())
    throw ConfigError("unknown system preset: " + preset_or_path);
  return system_preset(preset_or_path, m);
}

std::string model_to_json(const ModelConfig& m) {
  json j;
  j["name"] = m.name;
  j["total_params"] = m.total_params;
  j["n_layers"] = m.n_layers;
  j["hidden"] = m.hidden;
  j["intermediate"] = m.intermediate;
  j["n_heads"] = m.n_heads;
  j["d_head"] = m.d_head;
  j["grp"] = m.grp;
  j["n_experts"] = m.n_experts;
  j["top_k"] = m.top_k;
  j["moe_layer_pattern"] = to_string(m.moe_layer_pattern);
  j["weight_precision_bytes"] = m.weight_precision_bytes;
  return j.dump(2) + "\n";
}

std::string system_to_json(const SystemConfig& s) {
  json j;
  j["name"] = s.name;
  j["n_nodes"] = s.n_nodes;
  j["devices_per_node"] = s.devices_per_node;
  j["intra_node_bw"] = s.intra_node_bw;
  j["inter_node_bw"] = s.inter_node_bw;
  j["max_batch"] = s.max_batch;
  j["hetero_gpu_devices"] = s.hetero_gpu_devices;
  j["hetero_pim_devices"] = s.hetero_pim_devices;
  j["device"] = {
      {"name", s.device.name},
      {"xpu_peak_flops", s.device.xpu_peak_flops},
      {"n_stacks", s.device.n_stacks},
      {"launch_overhead_s", s.device.launch_overhead_s},
      {"stack",
       {{"pim_variant", to_string(s.device.stack.pim_variant)},
        {"capacity_bytes", s.device.stack.capacity_bytes},
        {"n_pseudo_channels", s.device.stack.n_pseudo_channels},
        {"base_bw_per_stack", s.device.stack.base_bw_per_stack},
        {"pim_bw_multiplier", s.device.stack.pim_bw_multiplier},
        {"pim_peak_flops_per_stack", s.device.stack.pim_peak_flops_per_stack}}},
  };
  return j.dump(2) + "\n";
}

}  // namespace duplexsim
