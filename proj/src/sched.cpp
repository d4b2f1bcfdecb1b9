// SPDX-License-Identifier: Apache-2.0
#include "duplexsim/sched.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

#include "duplexsim/rng.hpp"

namespace duplexsim {

const char* to_string(Mode m) {
  switch (m) {
    case Mode::gpu_baseline: return "gpu_baseline";
    case Mode::gpu_2x: return "gpu_2x";
    case Mode::hetero: return "hetero";
    case Mode::bank_pim: return "bank_pim";
    case Mode::duplex: return "duplex";
    case Mode::duplex_pe: return "duplex_pe";
    case Mode::duplex_pe_et: return "duplex_pe_et";
  }
  return "?";
}

Mode mode_from_string(const std::string& s) {
  for (Mode m : {Mode::gpu_baseline, Mode::gpu_2x, Mode::hetero, Mode::bank_pim, Mode::duplex,
                 Mode::duplex_pe, Mode::duplex_pe_et})
    if (s == to_string(m)) return m;
  throw std::invalid_argument("unknown mode: " + s);
}

ExpertStrategy expert_strategy_for(Mode m) {
  return m == Mode::duplex_pe_et ? ExpertStrategy::tensor_parallel_experts
                                 : ExpertStrategy::expert_parallel;
}

bool mode_uses_pim(Mode m) {
  return m == Mode::hetero || m == Mode::bank_pim || m == Mode::duplex || m == Mode::duplex_pe ||
         m == Mode::duplex_pe_et;
}

bool mode_co_processes(Mode m) { return m == Mode::duplex_pe || m == Mode::duplex_pe_et; }

const char* to_string(StageKind k) { return k == StageKind::mixed ? "mixed" : "decode_only"; }

// ---- Workload ----------------------------------------------------------------

std::vector<Request> gen_workload(std::uint64_t seed, const WorkloadParams& p) {
  if (p.mean_l_in < 1 || p.mean_l_out < 1)
    throw std::invalid_argument("gen_workload: means must be >= 1");
  if (p.cv < 0) throw std::invalid_argument("gen_workload: cv must be >= 0");
  Rng len_rng(mix_seed(seed, 1));
  Rng arr_rng(mix_seed(seed, 2));
  std::vector<Request> reqs(p.n_requests);
  double clock = 0;
  for (std::uint64_t i = 0; i < p.n_requests; ++i) {
    auto& r = reqs[i];
    r.id = i;
    auto draw = [&](double mean) {
      if (p.cv == 0) return static_cast<std::uint64_t>(std::llround(mean));
      const double v = std::llround(len_rng.normal(mean, p.cv * mean));
      return static_cast<std::uint64_t>(std::max(1.0, v));
    };
    r.l_in = draw(p.mean_l_in);
    r.l_out = draw(p.mean_l_out);
    if (p.qps > 0) {
      clock += arr_rng.exponential(p.qps);
      r.arrival_time = clock;
    } else {
      r.arrival_time = 0;
    }
  }
  return reqs;
}

// ---- Gate ---------------------------------------------------------------------

std::uint64_t GateOutcome::total() const {
  return std::accumulate(tokens_per_expert.begin(), tokens_per_expert.end(), std::uint64_t{0});
}

GateOutcome gate_select(std::uint64_t stage_tokens, std::uint64_t n_experts, std::uint64_t top_k,
                        std::uint64_t seed) {
  if (top_k > n_experts) throw std::invalid_argument("gate_select: top_k must be <= n_experts");
  GateOutcome g;
  g.seed = seed;
  g.tokens_per_expert.assign(n_experts, 0);
  if (top_k == 0) return g;
  Rng rng(seed);
  // Partial Fisher-Yates per token: top_k distinct experts, uniform.
  std::vector<std::uint64_t> ids(n_experts);
  for (std::uint64_t t = 0; t < stage_tokens; ++t) {
    std::iota(ids.begin(), ids.end(), 0);
    for (std::uint64_t k = 0; k < top_k; ++k) {
      const std::uint64_t j = k + rng.uniform_int(n_experts - k);
      std::swap(ids[k], ids[j]);
      g.tokens_per_expert[ids[k]] += 1;
    }
  }
  return g;
}

// ---- Continuous batching -------------------------------------------------------

std::optional<StageBatch> form_stage(double clock, std::deque<Request*>& wait_queue,
                                     std::vector<Request*>& running, std::uint64_t max_batch) {
  std::erase_if(running, [](const Request* r) { return r->done(); });

  StageBatch sb;
  sb.decoding = running;
  while (!wait_queue.empty() && wait_queue.front()->arrival_time <= clock &&
         running.size() + sb.prefilling.size() < max_batch) {
    Request* r = wait_queue.front();
    wait_queue.pop_front();
    sb.prefilling.push_back(r);
  }
  for (Request* r : sb.prefilling) running.push_back(r);
  if (sb.decoding.empty() && sb.prefilling.empty()) {
    return std::nullopt;  // nothing runnable; caller decides idle vs done
  }
  sb.kind = sb.prefilling.empty() ? StageKind::decode_only : StageKind::mixed;
  return sb;
}

// ---- Expert LUT -----------------------------------------------------------------

namespace {

WorkProfile expert_shard_profile(const ModelConfig& m, std::uint64_t tokens, double fraction) {
  WorkProfile full = moe_expert_cost(tokens, m.hidden, m.intermediate, m.weight_precision_bytes);
  if (fraction >= 1.0) return full;
  // Column-wise shard: the widest device share keeps sums conserved.
  const auto parts = static_cast<std::uint64_t>(std::llround(1.0 / fraction));
  WorkProfile p;
  p.kernel_class = full.kernel_class;
  p.flops = split_counts(full.flops, parts)[0];
  p.weight_bytes = split_counts(full.weight_bytes, parts)[0];
  p.act_bytes = split_counts(full.act_bytes, parts)[0];
  return p;
}

std::uint64_t activation_shard_flops(const ModelConfig& m, std::uint64_t tokens, double fraction,
                                     const ElementwiseCosts& ec) {
  const std::uint64_t full = ec.activation_flops_per_elem * tokens * m.intermediate;
  if (fraction >= 1.0) return full;
  const auto parts = static_cast<std::uint64_t>(std::llround(1.0 / fraction));
  return split_counts(full, parts)[0];
}

// Expert time on the PIM side: work striped over all stacks, slowest stack
// wins; the fused gated activation adds flops but no extra launch.
double pim_expert_time(const WorkProfile& shard, std::uint64_t act_flops, const DeviceConfig& d) {
  const ExecUnit per_stack = pim_stack_unit(d);
  double t = 0;
  for (const auto& part : stack_split(shard, d.n_stacks))
    t = std::max(t, kernel_time(part, per_stack));
  const double pim_peak = static_cast<double>(d.n_stacks) * d.stack.pim_peak_flops_per_stack;
  return t + static_cast<double>(act_flops) / pim_peak;
}

double xpu_expert_time(const WorkProfile& shard, std::uint64_t act_flops, const DeviceConfig& d) {
  return kernel_time(shard, xpu_unit(d)) + static_cast<double>(act_flops) / d.xpu_peak_flops;
}

}  // namespace

ExpertLut::ExpertLut(const ModelConfig& m, const DeviceConfig& d, double shard_fraction,
                     std::uint64_t max_tokens)
    : max_tokens_(max_tokens), pim_enabled_(d.stack.pim_variant != PimVariant::none) {
  ElementwiseCosts ec;
  const std::uint64_t exact_top = std::min(max_tokens, kExactMax);
  xpu_exact_.resize(exact_top + 1);
  if (pim_enabled_) pim_exact_.resize(exact_top + 1);
  auto fill = [&](std::uint64_t t, double* xv, double* pv) {
    const WorkProfile shard = expert_shard_profile(m, t, shard_fraction);
    const std::uint64_t act = activation_shard_flops(m, t, shard_fraction, ec);
    *xv = xpu_expert_time(shard, act, d);
    if (pv) *pv = pim_expert_time(shard, act, d);
  };
  for (std::uint64_t t = 0; t <= exact_top; ++t)
    fill(t, &xpu_exact_[t], pim_enabled_ ? &pim_exact_[t] : nullptr);
  if (max_tokens > kExactMax) {
    const std::uint64_t n_coarse = (max_tokens - kExactMax + kStride - 1) / kStride + 1;
    xpu_coarse_.resize(n_coarse);
    if (pim_enabled_) pim_coarse_.resize(n_coarse);
    for (std::uint64_t i = 0; i < n_coarse; ++i)
      fill(kExactMax + i * kStride, &xpu_coarse_[i], pim_enabled_ ? &pim_coarse_[i] : nullptr);
  }
}

double ExpertLut::lookup(const std::vector<double>& exact, const std::vector<double>& coarse,
                         std::uint64_t tokens) const {
  if (tokens < exact.size()) return exact[tokens];
  const std::uint64_t off = tokens - kExactMax;
  const std::uint64_t i = off / kStride;
  if (i + 1 < coarse.size()) {
    const double frac = static_cast<double>(off - i * kStride) / static_cast<double>(kStride);
    return coarse[i] + frac * (coarse[i + 1] - coarse[i]);
  }
  return coarse.empty() ? exact.back() : coarse.back();
}

double ExpertLut::time(UnitKind unit, std::uint64_t tokens) const {
  if (unit == UnitKind::pim && !pim_enabled_) return std::numeric_limits<double>::infinity();
  const auto& exact = unit == UnitKind::pim ? pim_exact_ : xpu_exact_;
  const auto& coarse = unit == UnitKind::pim ? pim_coarse_ : xpu_coarse_;
  return lookup(exact, coarse, tokens);
}

ExpertLut build_lut(const ModelConfig& m, const DeviceConfig& d, double shard_fraction,
                    std::uint64_t max_tokens) {
  return ExpertLut(m, d, shard_fraction, max_tokens);
}

// ---- Expert partition ------------------------------------------------------------

bool ExpertAssignment::on_pim(std::uint64_t expert) const {
  for (std::size_t i = 0; i < pim_prefix; ++i)
    if (sorted_experts[i] == expert) return true;
  return false;
}

ExpertAssignment partition_experts(const std::vector<std::uint64_t>& counts,
                                   const ExpertLut& lut) {
  const std::size_t n = counts.size();
  ExpertAssignment a;
  a.sorted_experts.resize(n);
  std::iota(a.sorted_experts.begin(), a.sorted_experts.end(), 0);
  std::stable_sort(a.sorted_experts.begin(), a.sorted_experts.end(),
                   [&](std::uint64_t x, std::uint64_t y) { return counts[x] < counts[y]; });
  a.sorted_counts.resize(n);
  for (std::size_t i = 0; i < n; ++i) a.sorted_counts[i] = counts[a.sorted_experts[i]];

  // Unselected experts never launch, so they cost nothing on either side;
  // they sit at the front of the sorted order and go to the PIM side.
  std::size_t n_zero = 0;
  while (n_zero < n && a.sorted_counts[n_zero] == 0) ++n_zero;

  std::vector<double> pim_cost(n), xpu_cost(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t c = a.sorted_counts[i];
    pim_cost[i] = c == 0 ? 0.0 : lut.time(UnitKind::pim, c);
    xpu_cost[i] = c == 0 ? 0.0 : lut.time(UnitKind::xpu, c);
  }
  // makespan(p) = max(sum of pim costs below p, sum of xpu costs from p).
  std::vector<double> xpu_suffix(n + 1, 0.0);
  for (std::size_t i = n; i-- > 0;) xpu_suffix[i] = xpu_suffix[i + 1] + xpu_cost[i];
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_p = n_zero;
  double pim_prefix_sum = 0;
  for (std::size_t p = 0; p <= n; ++p) {
    if (p > 0) pim_prefix_sum += pim_cost[p - 1];
    if (p < n_zero) continue;  // zero-cost experts stay on the pim side
    const double ms = std::max(pim_prefix_sum, xpu_suffix[p]);
    if (ms < best) {
      best = ms;
      best_p = p;  // ties keep the smaller prefix
    }
  }
  a.pim_prefix = best_p;
  a.predicted_makespan = best;
  return a;
}

// ---- Trace -------------------------------------------------------------------------

std::uint64_t Trace::total_generated_tokens() const {
  std::uint64_t n = 0;
  for (const auto& r : requests) n += r.token_timestamps.size();
  return n;
}

std::string Trace::to_jsonl() const {
  std::string out;
  char buf[320];
  std::snprintf(buf, sizeof(buf),
                "{\"meta\":{\"model\":\"%s\",\"mode\":\"%s\",\"seed\":%llu,\"bandwidth\":\"%s\"}}\n",
                model.c_str(), mode.c_str(), static_cast<unsigned long long>(seed),
                bandwidth_note.c_str());
  out += buf;
  for (const auto& s : stages) {
    std::snprintf(buf, sizeof(buf),
                  "{\"stage\":{\"index\":%llu,\"kind\":\"%s\",\"start\":%.9e,\"end\":%.9e,"
                  "\"batch\":%llu,\"prefill_count\":%llu}}\n",
                  static_cast<unsigned long long>(s.index), to_string(s.kind), s.start, s.end,
                  static_cast<unsigned long long>(s.batch),
                  static_cast<unsigned long long>(s.prefill_count));
    out += buf;
  }
  for (const auto& k : kernels) {
    std::snprintf(buf, sizeof(buf),
                  "{\"kernel\":{\"stage\":%llu,\"layer\":%lld,\"class\":\"%s\",\"unit\":\"%s\","
                  "\"start\":%.9e,\"end\":%.9e,\"bytes\":%llu,\"flops\":%llu}}\n",
                  static_cast<unsigned long long>(k.stage), static_cast<long long>(k.layer),
                  duplexsim::to_string(k.cls), duplexsim::to_string(k.unit), k.start, k.end,
                  static_cast<unsigned long long>(k.bytes),
                  static_cast<unsigned long long>(k.flops));
    out += buf;
  }
  for (const auto& r : requests) {
    std::snprintf(buf, sizeof(buf),
                  "{\"request\":{\"id\":%llu,\"arrival\":%.9e,\"l_in\":%llu,\"l_out\":%llu,"
                  "\"tokens\":[",
                  static_cast<unsigned long long>(r.id), r.arrival,
                  static_cast<unsigned long long>(r.l_in),
                  static_cast<unsigned long long>(r.l_out));
    out += buf;
    for (std::size_t i = 0; i < r.token_timestamps.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%s%.9e", i ? "," : "", r.token_timestamps[i]);
      out += buf;
    }
    out += "]}}\n";
  }
  return out;
}

// ---- Stage policy -------------------------------------------------------------------

namespace {

enum class MoeExec { all_xpu, all_pim, partitioned };

struct StagePolicy {
  bool decode_attn_pim = false;
  bool prefill_attn_concurrent = false;  // prefill attention on xPU alongside pim decode
  MoeExec moe = MoeExec::all_xpu;
  bool migrate_kv = false;  // scratch -> KV space move per admitted request
};

StagePolicy policy_for(Mode mode, StageKind kind) {
  StagePolicy p;
  switch (mode) {
    case Mode::gpu_baseline:
    case Mode::gpu_2x:
      break;
    case Mode::duplex:
    case Mode::bank_pim:
      // Exclusive use: the low-Op/B unit owns the decoding-only stage's
      // MoE and attention; mixed stages run entirely on the xPU.
      if (kind == StageKind::decode_only) {
        p.decode_attn_pim = true;
        p.moe = MoeExec::all_pim;
      }
      break;
    case Mode::duplex_pe:
    case Mode::duplex_pe_et:
      p.decode_attn_pim = true;
      p.prefill_attn_concurrent = kind == StageKind::mixed;
      p.moe = MoeExec::partitioned;
      p.migrate_kv = kind == StageKind::mixed;
      break;
    case Mode::hetero:
      break;  // handled by the dedicated hetero walker
  }
  return p;
}

struct AttnProfiles {
  WorkProfile score, softmax, context;
  bool any = false;

  void add(const ModelConfig& m, std::uint64_t ctx, std::uint64_t q, std::uint64_t n_heads,
           const ElementwiseCosts& ec) {
    any = true;
    WorkProfile both = attention_cost(ctx, q, n_heads, m.d_head, m.grp, m.weight_precision_bytes);
    const std::uint64_t groups = n_heads / m.grp;
    const std::uint64_t prec = m.weight_precision_bytes;
    WorkProfile s, c;
    s.kernel_class = KernelClass::attention_score;
    c.kernel_class = KernelClass::attention_context;
    s.flops = both.flops / 2;
    c.flops = both.flops - s.flops;
    const std::uint64_t k_bytes = groups * ctx * m.d_head * prec;
    const std::uint64_t q_bytes = groups * m.grp * q * m.d_head * prec;
    s.act_bytes = k_bytes + q_bytes;
    c.act_bytes = both.act_bytes - s.act_bytes;
    score += s;
    context += c;
    softmax += softmax_cost(ctx, q, n_heads, prec, ec);
    softmax.kernel_class = KernelClass::softmax;
    score.kernel_class = KernelClass::attention_score;
    context.kernel_class = KernelClass::attention_context;
  }
};

double pim_profile_time(const WorkProfile& p, const DeviceConfig& d) {
  const ExecUnit per_stack = pim_stack_unit(d);
  double t = 0;
  for (const auto& part : stack_split(p, d.n_stacks)) t = std::max(t, kernel_time(part, per_stack));
  return t;
}

}  // namespace

// ---- Simulator -----------------------------------------------------------------------

Simulator::Simulator(const ModelConfig& m, const SystemConfig& sys, Mode mode,
                     const SimOptions& opt)
    : model_(m), system_(sys), mode_(mode), opt_(opt) {
  model_.validate();
  system_.validate();
  opt_.energy.validate();
  if (mode_uses_pim(mode) && mode != Mode::hetero &&
      system_.device.stack.pim_variant == PimVariant::none)
    throw std::invalid_argument("mode requires a PIM-capable device");

  if (mode == Mode::hetero) {
    if (!system_.is_hetero())
      throw std::invalid_argument("hetero mode requires a hetero system split");
    // Experts and KV live on the PIM devices; everything else on the GPUs.
    placement_.expert_strategy = ExpertStrategy::expert_parallel;
    placement_.devices_per_node = system_.devices_per_node;
    placement_.n_nodes = system_.n_nodes;
    if (model_.n_experts > 0) {
      placement_.experts_on_device.resize(system_.hetero_pim_devices);
      for (std::uint64_t e = 0; e < model_.n_experts; ++e)
        placement_.experts_on_device[e % system_.hetero_pim_devices].push_back(e);
      const std::uint64_t owned =
          (model_.n_experts + system_.hetero_pim_devices - 1) / system_.hetero_pim_devices;
      const std::uint64_t expert_dev = model_.n_moe_layers() * owned * expert_bytes(model_);
      placement_.expert_bytes_per_device = expert_dev;
      placement_.weight_bytes_per_device = expert_dev;
      if (expert_dev > system_.device.capacity_bytes())
        throw CapacityError("capacity-exceeded: experts do not fit the hetero PIM devices",
                            expert_dev - system_.device.capacity_bytes());
      placement_.kv_bytes_free_per_device = system_.device.capacity_bytes() - expert_dev;
    }
  } else {
    placement_ = plan(model_, system_, expert_strategy_for(mode));
  }

  double shard_fraction = 1.0;
  if (model_.n_experts > 0) {
    if (placement_.expert_strategy == ExpertStrategy::tensor_parallel_experts)
      shard_fraction = placement_.expert_shard_fraction;
    else if (mode != Mode::hetero) {
      const std::uint64_t n_devices = system_.n_nodes * system_.devices_per_node;
      if (n_devices > model_.n_experts)
        shard_fraction = static_cast<double>(model_.n_experts) / static_cast<double>(n_devices);
    }
    lut_ = build_lut(model_, system_.device, shard_fraction, 1 << 20);
  }
  ledger_ = std::make_unique<BundleLedger>(system_.device, opt_.keep_dram_trace);

  char note[160];
  std::snprintf(note, sizeof(note),
                "base_bw_per_stack=%.6g B/s (21.3 TFLOPS / OpB 8 / 4x); beat engine paced by "
                "tCCD_S=%.3g s at efficiency %.2f",
                system_.device.stack.base_bw_per_stack, system_.device.stack.geometry.tccd_s,
                system_.device.stack.geometry.efficiency);
  trace_.bandwidth_note = note;
  trace_.model = model_.name;
  trace_.mode = to_string(mode_);
  trace_.seed = opt_.seed;
}

namespace {

struct NodeRequests {
  std::vector<const Request*> decoding;
  std::vector<const Request*> prefilling;
  std::uint64_t tokens = 0;
};

NodeRequests node_requests(const StageBatch& stage, std::uint64_t node) {
  NodeRequests nr;
  for (const Request* r : stage.decoding)
    if (r->node == node) nr.decoding.push_back(r);
  for (const Request* r : stage.prefilling)
    if (r->node == node) nr.prefilling.push_back(r);
  nr.tokens = nr.decoding.size();
  for (const Request* r : nr.prefilling) nr.tokens += r->l_in;
  return nr;
}

}  // namespace

// Walks one node's devices through a stage. Devices of a node run in
// lockstep between per-layer barriers; the slowest device sets each phase.
struct StageWalker {
  Simulator& S;
  const StageBatch& stage;
  std::uint64_t node;
  double t;  // running clock of this node

  const ModelConfig& m() const { return S.model_; }
  const SystemConfig& sys() const { return S.system_; }
  const DeviceConfig& dev() const { return S.system_.device; }
  bool is_primary_node() const { return node == 0; }

  std::uint64_t dpn() const { return sys().devices_per_node; }
  std::uint64_t prec() const { return m().weight_precision_bytes; }

  void record(std::int64_t layer, KernelClass cls, UnitKind unit, double start, double end,
              const WorkProfile& w) {
    S.trace_.kernels.push_back({stage.stage_index, layer, cls, unit, start, end, w.total_bytes(),
                                w.flops});
  }

  // Sequential xPU kernel, node-aggregate bytes with slowest-shard timing.
  void xpu_seq(std::int64_t layer, KernelClass cls, const WorkProfile& full,
               const WorkProfile& dev0) {
    const double dur = kernel_time(dev0, xpu_unit(dev()));
    record(layer, cls, UnitKind::xpu, t, t + dur, full);
    t += dur;
  }

  WorkProfile shard(const WorkProfile& full) const {
    WorkProfile p;
    p.kernel_class = full.kernel_class;
    p.flops = split_counts(full.flops, dpn())[0];
    p.weight_bytes = split_counts(full.weight_bytes, dpn())[0];
    p.act_bytes = split_counts(full.act_bytes, dpn())[0];
    return p;
  }

  void link_transfer(std::int64_t layer, std::uint64_t bytes, double dur) {
    if (dur <= 0) return;
    WorkProfile w;
    w.kernel_class = KernelClass::allreduce_partial;
    w.act_bytes = bytes;
    record(layer, KernelClass::allreduce_partial, UnitKind::link, t, t + dur, w);
    t += dur;
  }

  void tensor_parallel_allreduce(std::int64_t layer, std::uint64_t tokens) {
    const std::uint64_t bytes = tokens * m().hidden * prec();
    link_transfer(layer, bytes, allreduce_time(bytes, dpn(), sys().intra_node_bw));
  }

  // Attention of one side, aggregated over requests: full profiles for the
  // record, device-0 head share for the time.
  struct SideAttn {
    AttnProfiles full, dev0;
  };

  SideAttn gather_attention(const std::vector<const Request*>& reqs, bool is_prefill) {
    SideAttn a;
    const std::uint64_t groups_dev0 = split_counts(m().kv_groups(), dpn())[0];
    const std::uint64_t heads_dev0 = groups_dev0 * m().grp;
    for (const Request* r : reqs) {
      const std::uint64_t ctx = is_prefill ? r->l_in : r->ctx_len();
      const std::uint64_t q = is_prefill ? r->l_in : 1;
      a.full.add(m(), ctx, q, m().n_heads, S.opt_.elementwise);
      if (heads_dev0 > 0) a.dev0.add(m(), ctx, q, heads_dev0, S.opt_.elementwise);
    }
    return a;
  }

  // Chained attention kernels (score, softmax, context) on one unit.
  double attn_chain(std::int64_t layer, const SideAttn& a, UnitKind unit, double start,
                    AttnSide /*side*/) {
    const auto classes = {KernelClass::attention_score, KernelClass::softmax,
                          KernelClass::attention_context};
    const WorkProfile* fulls[] = {&a.full.score, &a.full.softmax, &a.full.context};
    const WorkProfile* dev0s[] = {&a.dev0.score, &a.dev0.softmax, &a.dev0.context};
    double tt = start;
    std::size_t i = 0;
    for (KernelClass cls : classes) {
      double dur;
      if (unit == UnitKind::pim)
        dur = pim_profile_time(*dev0s[i], dev()) + dev().launch_overhead_s;
      else
        dur = kernel_time(*dev0s[i], xpu_unit(dev()));
      record(layer, cls, unit, tt, tt + dur, *fulls[i]);
      tt += dur;
      ++i;
    }
    return tt;
  }

  // ---- Expert phase -------------------------------------------------------

  struct ExpertPhaseResult {
    double end = 0;
    bool used_pim = false;
  };

  double expert_kernel(std::int64_t layer, std::uint64_t expert, std::uint64_t count,
                       UnitKind unit, double start, bool record_this, bool occupy_ledger) {
    // Record the full (all-device) expert work for energy accounting.
    WorkProfile full = moe_expert_cost(count, m().hidden, m().intermediate, prec());
    WorkProfile act = activation_cost(count, m().intermediate, S.opt_.elementwise);
    const double dur = S.lut_.time(unit, count);
    if (record_this) {
      const double t_act =
          static_cast<double>(activation_shard_flops(m(), count, 1.0, S.opt_.elementwise)) /
          (unit == UnitKind::pim
               ? static_cast<double>(dev().n_stacks) * dev().stack.pim_peak_flops_per_stack
               : dev().xpu_peak_flops);
      record(layer, KernelClass::moe_expert, unit, start, start + dur - t_act, full);
      record(layer, KernelClass::activation, unit, start + dur - t_act, start + dur, act);
    }
    if (occupy_ledger && is_primary_node()) {
      const auto space = S.placement_.space_of_expert(expert);
      S.ledger_->occupy(space_bundles(dev(), space), start, dur,
                        unit == UnitKind::pim ? AccessPath::pim : AccessPath::xpu,
                        full.total_bytes());
    }
    return start + dur;
  }

  // Single-unit expert sweep for one device: sequential chain.
  double expert_chain(std::int64_t layer, const std::vector<std::uint64_t>& experts,
                      const std::vector<std::uint64_t>& counts, UnitKind unit, double start,
                      bool record_this, bool occupy_ledger) {
    double tt = start;
    for (std::uint64_t e : experts) {
      if (counts[e] == 0) continue;
      tt = expert_kernel(layer, e, counts[e], unit, tt, record_this, occupy_ledger);
    }
    return tt;
  }

  // Co-processing: prefix of fewest-token experts on PIM, rest on xPU,
  // serialized per memory space so that concurrent paths never share one.
  double co_process_experts(std::int64_t layer, const std::vector<std::uint64_t>& resident,
                            const std::vector<std::uint64_t>& counts, double start,
                            bool record_this, bool occupy_ledger, bool audit) {
    std::vector<std::uint64_t> res_counts(resident.size());
    for (std::size_t i = 0; i < resident.size(); ++i) res_counts[i] = counts[resident[i]];
    const ExpertAssignment assign = partition_experts(res_counts, S.lut_);
    if (audit) S.trace_.assignments.push_back({stage.stage_index, layer, assign});

    std::vector<std::uint64_t> pim_list, xpu_list;
    for (std::size_t i = 0; i < assign.sorted_experts.size(); ++i) {
      const std::uint64_t e = resident[assign.sorted_experts[i]];
      if (counts[e] == 0) continue;
      (i < assign.pim_prefix ? pim_list : xpu_list).push_back(e);
    }
    // xPU takes its largest experts first and leaves any expert sharing a
    // space with the PIM set for last, so cross-path space conflicts
    // usually wait out the shorter PIM chain.
    std::vector<bool> pim_space(kMemorySpaces, false);
    for (std::uint64_t e : pim_list) pim_space[S.placement_.space_of_expert(e)] = true;
    std::stable_sort(xpu_list.begin(), xpu_list.end(), [&](std::uint64_t a, std::uint64_t b) {
      const bool ca = pim_space[S.placement_.space_of_expert(a)];
      const bool cb = pim_space[S.placement_.space_of_expert(b)];
      if (ca != cb) return !ca;
      return counts[a] > counts[b];
    });

    // Space-level serialization mirrors the bundle ledger for every device.
    std::vector<double> space_busy(kMemorySpaces, start);
    auto run_chain = [&](const std::vector<std::uint64_t>& list, UnitKind unit) {
      double tt = start;
      for (std::uint64_t e : list) {
        const auto space = S.placement_.space_of_expert(e);
        const double es = std::max(tt, space_busy[space]);
        const double ee = expert_kernel(layer, e, counts[e], unit, es, record_this, occupy_ledger);
        space_busy[space] = ee;
        tt = ee;
      }
      return tt;
    };
    const double pim_end = run_chain(pim_list, UnitKind::pim);
    const double xpu_end = run_chain(xpu_list, UnitKind::xpu);
    return std::max(pim_end, xpu_end);
  }

  ExpertPhaseResult expert_phase(std::int64_t layer, const std::vector<std::uint64_t>& counts,
                                 MoeExec exec) {
    ExpertPhaseResult res;
    const bool et = S.placement_.expert_strategy == ExpertStrategy::tensor_parallel_experts;
    double phase_end = t;
    if (et) {
      // Every device holds the same shards; one chain stands for all.
      std::vector<std::uint64_t> resident;
      for (std::uint64_t e = 0; e < counts.size(); ++e) {
        if (!S.placement_.node_of_expert.empty() && S.placement_.node_of_expert[e] != node)
          continue;
        resident.push_back(e);
      }
      switch (exec) {
        case MoeExec::all_xpu:
          phase_end = expert_chain(layer, resident, counts, UnitKind::xpu, t, true, false);
          break;
        case MoeExec::all_pim:
          phase_end = expert_chain(layer, resident, counts, UnitKind::pim, t, true, true);
          res.used_pim = true;
          break;
        case MoeExec::partitioned:
          phase_end = co_process_experts(layer, resident, counts, t, true, true,
                                         is_primary_node());
          res.used_pim = true;
          break;
      }
    } else {
      // Expert parallel: each device sweeps its own experts; the slowest
      // sets the phase. Device 0 of node 0 is the ledger's device.
      for (std::uint64_t d = 0; d < dpn(); ++d) {
        const std::uint64_t global_dev = node * dpn() + d;
        if (global_dev >= S.placement_.experts_on_device.size()) break;
        const auto& owned = S.placement_.experts_on_device[global_dev];
        if (owned.empty()) continue;
        const bool ledger_dev = is_primary_node() && d == 0;
        double dev_end = t;
        switch (exec) {
          case MoeExec::all_xpu:
            dev_end = expert_chain(layer, owned, counts, UnitKind::xpu, t, true, false);
            break;
          case MoeExec::all_pim:
            dev_end = expert_chain(layer, owned, counts, UnitKind::pim, t, true, ledger_dev);
            res.used_pim = true;
            break;
          case MoeExec::partitioned:
            dev_end = co_process_experts(layer, owned, counts, t, true, ledger_dev, ledger_dev);
            res.used_pim = true;
            break;
        }
        phase_end = std::max(phase_end, dev_end);
      }
    }
    res.end = phase_end;
    return res;
  }

  // Post-MoE combine: all-reduce for tensor-parallel experts and dense
  // layers, dispatch+combine all-to-all for expert parallelism; plus the
  // inter-node legs when experts span nodes.
  void moe_combine(std::int64_t layer, std::uint64_t tokens) {
    const std::uint64_t h_bytes = tokens * m().hidden * prec();
    if (S.placement_.expert_strategy == ExpertStrategy::tensor_parallel_experts) {
      tensor_parallel_allreduce(layer, tokens);
    } else {
      const std::uint64_t routed = tokens * m().top_k * m().hidden * prec();
      const double leg = all_to_all_time(routed, dpn(), sys().intra_node_bw);
      link_transfer(layer, 2 * routed, 2 * leg);
    }
    if (!S.placement_.node_of_expert.empty() && sys().n_nodes > 1) {
      // Tokens routed to experts homed on other nodes cross the slower link.
      const std::uint64_t routed = tokens * m().top_k * m().hidden * prec();
      const std::uint64_t cross = routed * (sys().n_nodes - 1) / sys().n_nodes;
      if (cross > 0) {
        const double leg =
            all_to_all_time(cross, sys().n_nodes, sys().inter_node_bw) + sys().inter_node_latency_s;
        link_transfer(layer, 2 * cross, 2 * leg);
      }
    }
    (void)h_bytes;
  }

  // ---- One full stage on this node ----------------------------------------

  double walk(const NodeRequests& nr, const std::vector<std::vector<std::uint64_t>>& gate_counts) {
    const StagePolicy pol = policy_for(S.mode_, stage.kind);
    const std::uint64_t tokens = nr.tokens;

    const WorkProfile embed = fc_cost(tokens, m().hidden, m().hidden, prec());
    xpu_seq(-1, KernelClass::fc, embed, shard(embed));

    const SideAttn dec = gather_attention(nr.decoding, false);
    const SideAttn pre = gather_attention(nr.prefilling, true);

    for (std::uint64_t layer = 0; layer < m().n_layers; ++layer) {
      const auto lid = static_cast<std::int64_t>(layer);
      const WorkProfile qkv =
          fc_cost(tokens, m().hidden, m().hidden + 2 * (m().hidden / m().grp), prec());
      xpu_seq(lid, KernelClass::fc, qkv, shard(qkv));

      // Attention: decode side on its unit, prefill side on the xPU,
      // concurrent only under co-processing.
      double attn_end = t;
      if (dec.full.any) {
        if (pol.decode_attn_pim) {
          const double dur_start = t;
          double chain_end = attn_chain(lid, dec, UnitKind::pim, dur_start, AttnSide::decode);
          if (is_primary_node()) {
            // Decode KV lives in the three KV spaces; book them as one
            // interval so cross-path overlap stays visible to the ledger.
            std::vector<BundleId> kv_bundles;
            for (auto spc : S.placement_.kv_spaces) {
              auto b = space_bundles(dev(), spc);
              kv_bundles.insert(kv_bundles.end(), b.begin(), b.end());
            }
            S.ledger_->occupy(kv_bundles, dur_start, chain_end - dur_start, AccessPath::pim,
                              dec.full.score.total_bytes() + dec.full.context.total_bytes());
          }
          attn_end = std::max(attn_end, chain_end);
        } else {
          attn_end = attn_chain(lid, dec, UnitKind::xpu, t, AttnSide::decode);
        }
      }
      if (pre.full.any) {
        double pre_start = pol.prefill_attn_concurrent ? t : attn_end;
        if (!pol.decode_attn_pim && dec.full.any) pre_start = attn_end;  // same unit, chained
        const double pre_end = attn_chain(lid, pre, UnitKind::xpu, pre_start, AttnSide::prefill);
        if (pol.prefill_attn_concurrent && is_primary_node())
          S.ledger_->occupy(space_bundles(dev(), S.placement_.prefill_scratch_space), pre_start,
                            pre_end - pre_start, AccessPath::xpu,
                            pre.full.score.total_bytes() + pre.full.context.total_bytes());
        attn_end = std::max(attn_end, pre_end);
      }
      t = attn_end;

      const WorkProfile proj = fc_cost(tokens, m().hidden, m().hidden, prec());
      xpu_seq(lid, KernelClass::fc, proj, shard(proj));
      tensor_parallel_allreduce(lid, tokens);

      if (m().layer_is_moe(layer)) {
        const WorkProfile gate = fc_cost(tokens, m().hidden, m().n_experts, prec());
        xpu_seq(lid, KernelClass::fc, gate, shard(gate));
        const auto& counts = gate_counts[layer];
        const ExpertPhaseResult moe = expert_phase(lid, counts, pol.moe);
        t = moe.end;
        if (moe.used_pim) {
          // xPU gathers the per-stack partial sums of the expert outputs.
          const WorkProfile red =
              intra_device_reduce_profile(tokens * m().hidden * prec(), dev());
          xpu_seq(lid, KernelClass::allreduce_partial, red, red);
        }
        moe_combine(lid, tokens);
      } else {
        WorkProfile ffn = moe_expert_cost(tokens, m().hidden, m().intermediate, prec());
        ffn.kernel_class = KernelClass::fc;
        xpu_seq(lid, KernelClass::fc, ffn, shard(ffn));
        const WorkProfile act = activation_cost(tokens, m().intermediate, S.opt_.elementwise);
        const double act_dur =
            static_cast<double>(shard(act).flops) / dev().xpu_peak_flops;
        record(lid, KernelClass::activation, UnitKind::xpu, t, t + act_dur, act);
        t += act_dur;
        tensor_parallel_allreduce(lid, tokens);
      }
    }

    const std::uint64_t head_tokens = nr.decoding.size() + nr.prefilling.size();
    if (head_tokens > 0) {
      const WorkProfile head = fc_cost(head_tokens, m().hidden, m().hidden, prec());
      xpu_seq(static_cast<std::int64_t>(m().n_layers), KernelClass::fc, head, shard(head));
    }

    if (pol.migrate_kv) {
      // Finished prefills move their K/V out of the scratch space, once per
      // admitted request, on the xPU path.
      for (const Request* r : nr.prefilling) {
        const std::uint64_t bytes = kv_cache_bytes(m(), r->l_in);
        if (bytes == 0) continue;
        if (is_primary_node()) {
          double fin = S.ledger_->service({AccessPath::xpu,
                                           space_bundles(dev(), S.placement_.prefill_scratch_space),
                                           bytes, t});
          fin = S.ledger_->service(
              {AccessPath::xpu,
               space_bundles(dev(), S.placement_.kv_space_of_request(r->id)), bytes, fin});
          WorkProfile w;
          w.kernel_class = KernelClass::allreduce_partial;
          w.act_bytes = 2 * bytes;
          record(static_cast<std::int64_t>(m().n_layers), KernelClass::allreduce_partial,
                 UnitKind::xpu, t, fin, w);
          t = fin;
        } else {
          const double dur =
              S.ledger_->transfer_time(AccessPath::xpu,
                                       space_bundles(dev(), S.placement_.prefill_scratch_space),
                                       bytes) * 2.0;
          t += dur;
        }
      }
    }
    return t;
  }

  // ---- Heterogeneous system: GPUs plus standalone Logic-PIM devices --------

  double walk_hetero(const NodeRequests& nr, const std::vector<std::vector<std::uint64_t>>& gates) {
    const std::uint64_t g_dev = sys().hetero_gpu_devices;
    const std::uint64_t p_dev = sys().hetero_pim_devices;
    const std::uint64_t tokens = nr.tokens;
    const double link = sys().intra_node_bw;

    auto gpu_seq = [&](std::int64_t layer, KernelClass cls, const WorkProfile& full) {
      WorkProfile d0;
      d0.kernel_class = full.kernel_class;
      d0.flops = split_counts(full.flops, g_dev)[0];
      d0.weight_bytes = split_counts(full.weight_bytes, g_dev)[0];
      d0.act_bytes = split_counts(full.act_bytes, g_dev)[0];
      const double dur = kernel_time(d0, xpu_unit(dev()));
      record(layer, cls, UnitKind::xpu, t, t + dur, full);
      t += dur;
    };

    const WorkProfile embed = fc_cost(tokens, m().hidden, m().hidden, prec());
    gpu_seq(-1, KernelClass::fc, embed);

    const SideAttn dec = gather_decode_hetero(nr, p_dev);
    const SideAttn pre = gather_attention(nr.prefilling, true);

    for (std::uint64_t layer = 0; layer < m().n_layers; ++layer) {
      const auto lid = static_cast<std::int64_t>(layer);
      const WorkProfile qkv =
          fc_cost(tokens, m().hidden, m().hidden + 2 * (m().hidden / m().grp), prec());
      gpu_seq(lid, KernelClass::fc, qkv);

      // Decode attention always runs on the PIM devices; its Q/K/V cross
      // the intra-node link and the outputs come back.
      if (dec.full.any) {
        const std::uint64_t q_bytes =
            nr.decoding.size() * (m().hidden + 2 * (m().hidden / m().grp)) * prec();
        link_transfer(lid, q_bytes, static_cast<double>(q_bytes) / link);
        double tt = t;
        tt = attn_chain(lid, dec, UnitKind::pim, tt, AttnSide::decode);
        t = tt;
        const std::uint64_t o_bytes = nr.decoding.size() * m().hidden * prec();
        link_transfer(lid, o_bytes, static_cast<double>(o_bytes) / link);
      }
      if (pre.full.any) {
        // Prefill attention stays on the GPUs.
        t = attn_chain_scaled_gpu(lid, nr, pre, g_dev);
      }

      const WorkProfile proj = fc_cost(tokens, m().hidden, m().hidden, prec());
      gpu_seq(lid, KernelClass::fc, proj);
      {
        const std::uint64_t bytes = tokens * m().hidden * prec();
        link_transfer(lid, bytes, allreduce_time(bytes, g_dev, link));
      }

      if (m().layer_is_moe(layer)) {
        const WorkProfile gate = fc_cost(tokens, m().hidden, m().n_experts, prec());
        gpu_seq(lid, KernelClass::fc, gate);
        // Hidden states ship to the PIM devices, experts run there, results
        // ship back. No weight duplication: every stage pays this path.
        const std::uint64_t h_bytes = tokens * m().hidden * prec();
        link_transfer(lid, h_bytes, static_cast<double>(h_bytes) / link);
        const auto& counts = gates[layer];
        double phase_end = t;
        for (std::uint64_t d = 0; d < p_dev; ++d) {
          const auto& owned = S.placement_.experts_on_device[d];
          double dev_end = expert_chain(lid, owned, counts, UnitKind::pim, t, true, d == 0);
          phase_end = std::max(phase_end, dev_end);
        }
        t = phase_end;
        // Partial-sum gather happens on the PIM device itself.
        const WorkProfile red = intra_device_reduce_profile(tokens * m().hidden * prec(), dev());
        const double red_dur = pim_profile_time(red, dev()) + dev().launch_overhead_s;
        record(lid, KernelClass::allreduce_partial, UnitKind::pim, t, t + red_dur, red);
        t += red_dur;
        link_transfer(lid, h_bytes, static_cast<double>(h_bytes) / link);
      } else {
        WorkProfile ffn = moe_expert_cost(tokens, m().hidden, m().intermediate, prec());
        ffn.kernel_class = KernelClass::fc;
        gpu_seq(lid, KernelClass::fc, ffn);
        const WorkProfile act = activation_cost(tokens, m().intermediate, S.opt_.elementwise);
        const double act_dur = static_cast<double>(act.flops) / (g_dev * dev().xpu_peak_flops);
        record(lid, KernelClass::activation, UnitKind::xpu, t, t + act_dur, act);
        t += act_dur;
        const std::uint64_t bytes = tokens * m().hidden * prec();
        link_transfer(lid, bytes, allreduce_time(bytes, g_dev, link));
      }
    }

    const std::uint64_t head_tokens = nr.decoding.size() + nr.prefilling.size();
    if (head_tokens > 0)
      gpu_seq(static_cast<std::int64_t>(m().n_layers), KernelClass::fc,
              fc_cost(head_tokens, m().hidden, m().hidden, prec()));

    // Freshly prefilled KV moves from the GPUs to the PIM devices once.
    for (const Request* r : nr.prefilling) {
      const std::uint64_t bytes = kv_cache_bytes(m(), r->l_in);
      link_transfer(static_cast<std::int64_t>(m().n_layers), bytes,
                    static_cast<double>(bytes) / link);
    }
    return t;
  }

  SideAttn gather_decode_hetero(const NodeRequests& nr, std::uint64_t p_dev) {
    SideAttn a;
    const std::uint64_t groups_dev0 = split_counts(m().kv_groups(), p_dev)[0];
    const std::uint64_t heads_dev0 = groups_dev0 * m().grp;
    for (const Request* r : nr.decoding) {
      a.full.add(m(), r->ctx_len(), 1, m().n_heads, S.opt_.elementwise);
      a.dev0.add(m(), r->ctx_len(), 1, heads_dev0, S.opt_.elementwise);
    }
    return a;
  }

  double attn_chain_scaled_gpu(std::int64_t lid, const NodeRequests& nr, const SideAttn& pre,
                               std::uint64_t g_dev) {
    SideAttn scaled;
    const std::uint64_t groups_dev0 = split_counts(m().kv_groups(), g_dev)[0];
    const std::uint64_t heads_dev0 = groups_dev0 * m().grp;
    for (const Request* r : nr.prefilling)
      scaled.dev0.add(m(), r->l_in, r->l_in, heads_dev0, S.opt_.elementwise);
    scaled.full = pre.full;
    return attn_chain(lid, scaled, UnitKind::xpu, t, AttnSide::prefill);
  }
};

double Simulator::simulate_stage(const StageBatch& stage, double clock) {
  if (stage.decoding.empty() && stage.prefilling.empty())
    throw std::invalid_argument("simulate_stage: empty stage");

  double stage_end = clock;
  for (std::uint64_t node = 0; node < system_.n_nodes; ++node) {
    const NodeRequests nr = node_requests(stage, node);
    if (nr.decoding.empty() && nr.prefilling.empty()) continue;

    // Per-layer gate outcomes for this node's tokens.
    std::vector<std::vector<std::uint64_t>> gates(model_.n_layers);
    if (model_.n_experts > 0) {
      for (std::uint64_t l = 0; l < model_.n_layers; ++l) {
        if (!model_.layer_is_moe(l)) continue;
        GateOutcome g = gate_select(nr.tokens, model_.n_experts, model_.top_k,
                                    mix_seed(opt_.seed, stage.stage_index * 8191 + node, l));
        if (g.total() != model_.top_k * nr.tokens)
          throw std::runtime_error("gate_select violated token conservation");
        gates[l] = std::move(g.tokens_per_expert);
      }
    }

    StageWalker w{*this, stage, node, clock};
    const double node_end =
        mode_ == Mode::hetero ? w.walk_hetero(nr, gates) : w.walk(nr, gates);
    stage_end = std::max(stage_end, node_end);
  }

  for (Request* r : stage.decoding) {
    r->generated += 1;
    r->token_timestamps.push_back(stage_end);
  }
  for (Request* r : stage.prefilling) {
    r->generated += 1;  // the prefill produces the first token
    r->token_timestamps.push_back(stage_end);
  }
  trace_.stages.push_back({stage.stage_index, stage.kind, clock, stage_end, stage.size(),
                           stage.prefilling.size()});
  return stage_end;
}

Trace Simulator::run(std::vector<Request> workload) {
  std::sort(workload.begin(), workload.end(), [](const Request& a, const Request& b) {
    if (a.arrival_time != b.arrival_time) return a.arrival_time < b.arrival_time;
    return a.id < b.id;
  });
  std::deque<Request*> queue;
  for (auto& r : workload) queue.push_back(&r);

  std::uint64_t guard = workload.size() + 64;
  for (const auto& r : workload) guard += r.l_out;

  std::vector<Request*> running;
  double clock = 0;
  std::uint64_t admitted = 0;
  while (true) {
    // Open loop: idle until the next arrival when nothing is active.
    bool any_active = false;
    for (const Request* r : running) any_active |= !r->done();
    if (!any_active && !queue.empty() && queue.front()->arrival_time > clock)
      clock = queue.front()->arrival_time;

    auto stage = form_stage(clock, queue, running, system_.max_batch);
    if (!stage) {
      if (queue.empty()) break;
      continue;  // arrivals pending; loop advances the clock above
    }
    // Node assignment happens at admission, round-robin from node 0.
    for (Request* r : stage->prefilling) {
      r->node = admitted % system_.n_nodes;
      ++admitted;
    }
    stage->stage_index = stage_counter_;
    clock = simulate_stage(*stage, clock);
    ++stage_counter_;
    if (stage_counter_ > guard)
      throw std::runtime_error("simulation did not terminate within the stage guard");
  }

  trace_.requests.reserve(workload.size());
  for (const auto& r : workload)
    trace_.requests.push_back({r.id, r.arrival_time, r.l_in, r.l_out, r.token_timestamps});
  return std::move(trace_);
}

Trace run(const ModelConfig& m, const SystemConfig& sys, Mode mode, std::vector<Request> workload,
          const SimOptions& opt) {
  Simulator sim(m, sys, mode, opt);
  return sim.run(std::move(workload));
}

}  // namespace duplexsim
