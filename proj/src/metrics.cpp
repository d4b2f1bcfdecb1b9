// SPDX-License-Identifier: Apache-2.0
#include "duplexsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace duplexsim {

double percentile(std::vector<double> samples, double p) {
  if (samples.empty()) throw std::invalid_argument("percentile: no samples");
  if (p <= 0 || p > 100) throw std::invalid_argument("percentile: p must be in (0, 100]");
  std::sort(samples.begin(), samples.end());
  // Nearest rank: smallest index i with i/N >= p/100.
  const auto n = samples.size();
  auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(n)));
  if (rank == 0) rank = 1;
  return samples[rank - 1];
}

namespace {

Percentiles pct3(const std::vector<double>& v) {
  if (v.empty()) return {};
  return {percentile(v, 50), percentile(v, 90), percentile(v, 99)};
}

}  // namespace

LatencyReport latencies(const Trace& trace) {
  LatencyReport r;
  for (const auto& req : trace.requests) {
    if (req.token_timestamps.size() != req.l_out) {
      r.excluded_incomplete += 1;
      continue;
    }
    r.t2ft.push_back(req.token_timestamps.front() - req.arrival);
    r.e2e.push_back(req.token_timestamps.back() - req.arrival);
    for (std::size_t i = 1; i < req.token_timestamps.size(); ++i)
      r.tbt.push_back(req.token_timestamps[i] - req.token_timestamps[i - 1]);
  }
  r.t2ft_p = pct3(r.t2ft);
  r.e2e_p = pct3(r.e2e);
  r.tbt_p = pct3(r.tbt);
  return r;
}

double throughput(const Trace& trace) {
  if (trace.stages.empty()) throw std::invalid_argument("throughput: empty trace");
  const double wall = trace.stages.back().end - trace.stages.front().start;
  if (wall <= 0) return 0;
  return static_cast<double>(trace.total_generated_tokens()) / wall;
}

double decode_only_fraction(const Trace& trace) {
  if (trace.stages.empty()) return 0;
  std::uint64_t n = 0;
  for (const auto& s : trace.stages) n += s.kind == StageKind::decode_only ? 1 : 0;
  return static_cast<double>(n) / static_cast<double>(trace.stages.size());
}

EnergyReport energy_report(const Trace& trace, const SystemConfig& sys,
                           const EnergyParams& params) {
  params.validate();
  EnergyReport r;
  for (const auto& k : trace.kernels) {
    WorkProfile p;
    p.flops = k.flops;
    p.act_bytes = k.bytes;
    const double e = kernel_energy(p, k.unit, params);
    r.joules_per_class[to_string(k.cls)] += e;
    if (k.unit == UnitKind::link) {
      r.link_joules += e;
    } else {
      const double bits = static_cast<double>(k.bytes) * 8.0;
      const double dram_pj = k.unit == UnitKind::xpu ? params.dram_read_pj_per_bit_xpu
                                                     : params.dram_read_pj_per_bit_pim;
      r.dram_joules += bits * dram_pj * 1e-12;
      r.compute_joules += e - bits * dram_pj * 1e-12;
    }
  }
  double wall = 0;
  if (!trace.stages.empty()) wall = trace.stages.back().end - trace.stages.front().start;
  const double n_devices =
      static_cast<double>(sys.n_nodes) * static_cast<double>(sys.devices_per_node);
  r.static_joules = params.static_w_per_device * n_devices * wall;
  r.total_joules = r.dram_joules + r.compute_joules + r.link_joules + r.static_joules;
  const auto tokens = trace.total_generated_tokens();
  r.joules_per_token = tokens > 0 ? r.total_joules / static_cast<double>(tokens) : 0.0;
  return r;
}

std::vector<RooflinePoint> roofline_points(const Trace& trace, const SystemConfig& sys) {
  struct Key {
    std::string cls;
    UnitKind unit;
    StageKind kind;
    auto operator<=>(const Key&) const = default;
  };
  // Stage index -> kind for bucketing kernels by stage type.
  std::vector<StageKind> kind_of(trace.stages.size(), StageKind::decode_only);
  for (const auto& s : trace.stages)
    if (s.index < kind_of.size()) kind_of[s.index] = s.kind;

  std::map<Key, RooflinePoint> acc;
  for (const auto& k : trace.kernels) {
    if (k.unit == UnitKind::link) continue;
    const StageKind sk = k.stage < kind_of.size() ? kind_of[k.stage] : StageKind::decode_only;
    Key key{to_string(k.cls), k.unit, sk};
    auto& pt = acc[key];
    pt.kernel_class = key.cls;
    pt.unit = k.unit;
    pt.stage_kind = sk;
    pt.flops += k.flops;
    pt.bytes += k.bytes;
    pt.busy_s += k.end - k.start;
  }

  const double dpn = static_cast<double>(sys.devices_per_node);
  const double xpu_peak = sys.device.xpu_peak_flops * dpn;
  const double pim_peak = sys.device.stack.pim_variant == PimVariant::none
                              ? 0.0
                              : static_cast<double>(sys.device.n_stacks) *
                                    sys.device.stack.pim_peak_flops_per_stack * dpn;

  std::vector<RooflinePoint> out;
  for (auto& [key, pt] : acc) {
    (void)key;
    if (pt.bytes > 0) pt.op_b = static_cast<double>(pt.flops) / static_cast<double>(pt.bytes);
    if (pt.busy_s > 0) pt.achieved_flops = static_cast<double>(pt.flops) / pt.busy_s;
    const double peak = pt.unit == UnitKind::xpu ? xpu_peak : pim_peak;
    if (peak > 0) pt.utilization = pt.achieved_flops / peak;
    out.push_back(pt);
  }
  return out;
}

UnitBusy unit_busy(const Trace& trace) {
  UnitBusy b;
  if (trace.stages.empty()) return b;
  b.wall_s = trace.stages.back().end - trace.stages.front().start;
  double x = 0, p = 0, l = 0;
  for (const auto& k : trace.kernels) {
    const double d = k.end - k.start;
    if (k.unit == UnitKind::xpu) x += d;
    else if (k.unit == UnitKind::pim) p += d;
    else l += d;
  }
  if (b.wall_s > 0) {
    b.xpu_fraction = x / b.wall_s;
    b.pim_fraction = p / b.wall_s;
    b.link_fraction = l / b.wall_s;
  }
  return b;
}

// ---- CSV ---------------------------------------------------------------------

std::string latency_csv_header() {
  return "mode,model,l_in,l_out,batch,metric,p50,p90,p99\n";
}

namespace {
std::string latency_row(const char* mode, const char* model, std::uint64_t l_in,
                        std::uint64_t l_out, std::uint64_t batch, const char* metric,
                        const Percentiles& p) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s,%s,%llu,%llu,%llu,%s,%.9e,%.9e,%.9e\n", mode, model,
                static_cast<unsigned long long>(l_in), static_cast<unsigned long long>(l_out),
                static_cast<unsigned long long>(batch), metric, p.p50, p.p90, p.p99);
  return buf;
}
}  // namespace

std::string latency_csv_rows(const std::string& mode, const std::string& model, std::uint64_t l_in,
                             std::uint64_t l_out, std::uint64_t batch, const LatencyReport& r) {
  std::string out;
  out += latency_row(mode.c_str(), model.c_str(), l_in, l_out, batch, "t2ft", r.t2ft_p);
  out += latency_row(mode.c_str(), model.c_str(), l_in, l_out, batch, "tbt", r.tbt_p);
  out += latency_row(mode.c_str(), model.c_str(), l_in, l_out, batch, "e2e", r.e2e_p);
  return out;
}

std::string throughput_csv_header() {
  return "mode,model,l_in,l_out,batch,tokens_per_s,speedup_vs_baseline\n";
}

std::string throughput_csv_row(const std::string& mode, const std::string& model,
                               std::uint64_t l_in, std::uint64_t l_out, std::uint64_t batch,
                               double tokens_per_s, double speedup_vs_baseline) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s,%s,%llu,%llu,%llu,%.9e,%.6g\n", mode.c_str(), model.c_str(),
                static_cast<unsigned long long>(l_in), static_cast<unsigned long long>(l_out),
                static_cast<unsigned long long>(batch), tokens_per_s, speedup_vs_baseline);
  return buf;
}

std::string energy_csv(const EnergyReport& r) {
  std::string out = "class,joules\n";
  char buf[160];
  for (const auto& [cls, j] : r.joules_per_class) {
    std::snprintf(buf, sizeof(buf), "%s,%.9e\n", cls.c_str(), j);
    out += buf;
  }
  std::snprintf(buf, sizeof(buf), "dram_total,%.9e\ncompute_total,%.9e\nlink_total,%.9e\n",
                r.dram_joules, r.compute_joules, r.link_joules);
  out += buf;
  std::snprintf(buf, sizeof(buf), "static_total,%.9e\ntotal,%.9e\nper_token,%.9e\n",
                r.static_joules, r.total_joules, r.joules_per_token);
  out += buf;
  return out;
}

std::string roofline_csv(const std::vector<RooflinePoint>& pts) {
  std::string out = "class,unit,stage_kind,op_b,achieved_flops,utilization,flops,bytes,busy_s\n";
  char buf[256];
  for (const auto& p : pts) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%s,%.9e,%.9e,%.9e,%llu,%llu,%.9e\n",
                  p.kernel_class.c_str(), to_string(p.unit), to_string(p.stage_kind), p.op_b,
                  p.achieved_flops, p.utilization, static_cast<unsigned long long>(p.flops),
                  static_cast<unsigned long long>(p.bytes), p.busy_s);
    out += buf;
  }
  return out;
}

}  // namespace duplexsim
