// SPDX-License-Identifier: Apache-2.0
#include <numeric>

#include "doctest.h"
#include "duplexsim/metrics.hpp"
#include "duplexsim/sched.hpp"
#include "oracles.hpp"

using namespace duplexsim;

TEST_SUITE_BEGIN("sched");

TEST_CASE("gen_workload: cv=0 gives exact lengths; fixed seed repeats") {
  WorkloadParams p;
  p.n_requests = 16;
  p.mean_l_in = 512;
  p.mean_l_out = 128;
  p.cv = 0;
  const auto w = gen_workload(7, p);
  REQUIRE(w.size() == 16);
  for (const auto& r : w) {
    CHECK(r.l_in == 512);
    CHECK(r.l_out == 128);
    CHECK(r.arrival_time == 0.0);
  }
  p.cv = 0.25;
  const auto a = gen_workload(9, p);
  const auto b = gen_workload(9, p);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].l_in == b[i].l_in);
    CHECK(a[i].l_out == b[i].l_out);
    CHECK(a[i].l_in >= 1);
    CHECK(a[i].l_out >= 1);
  }
  const auto c = gen_workload(10, p);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.size(); ++i) any_diff |= a[i].l_in != c[i].l_in;
  CHECK(any_diff);
}

TEST_CASE("gen_workload: Poisson arrivals match the rate in the mean") {
  WorkloadParams p;
  p.n_requests = 10000;
  p.mean_l_in = 8;
  p.mean_l_out = 8;
  p.cv = 0;
  p.qps = 8.0;
  const auto w = gen_workload(3, p);
  const double mean_gap = w.back().arrival_time / static_cast<double>(w.size() - 1);
  CHECK(mean_gap == doctest::Approx(0.125).epsilon(0.02));
  for (std::size_t i = 1; i < w.size(); ++i) CHECK(w[i].arrival_time >= w[i - 1].arrival_time);
}

TEST_CASE("gate_select: exact counts for one token; degenerate top_k") {
  const GateOutcome g = gate_select(1, 8, 2, 42);
  CHECK(g.total() == 2);
  std::uint64_t ones = 0;
  for (auto c : g.tokens_per_expert) {
    CHECK(c <= 1);  // distinct experts
    ones += c;
  }
  CHECK(ones == 2);

  const GateOutcome all = gate_select(5, 4, 4, 1);
  for (auto c : all.tokens_per_expert) CHECK(c == 5);

  CHECK_THROWS_AS(gate_select(1, 4, 5, 1), std::invalid_argument);
}

TEST_CASE("gate_select: uniform expectation over many seeds") {
  // 64 tokens, top-2 of 64 experts: per-expert mean is 64*2/64 = 2.
  const std::uint64_t n_seeds = 1000;
  double sum = 0;
  for (std::uint64_t s = 0; s < n_seeds; ++s) {
    const GateOutcome g = gate_select(64, 64, 2, 1000 + s);
    CHECK(g.total() == 128);  // token conservation every draw
    sum += static_cast<double>(g.total()) / 64.0;
  }
  const double mean = sum / static_cast<double>(n_seeds);
  CHECK(mean >= 1.9);
  CHECK(mean <= 2.1);
}

TEST_CASE("form_stage: classification, admission, eviction, completion") {
  std::vector<Request> pool(3);
  for (std::uint64_t i = 0; i < 3; ++i) {
    pool[i].id = i;
    pool[i].l_in = 8;
    pool[i].l_out = 4;
  }
  std::deque<Request*> queue;
  std::vector<Request*> running;

  // Mid-generation, nothing waiting: decode-only.
  pool[0].generated = 2;
  pool[0].token_timestamps = {1.0, 2.0};
  running.push_back(&pool[0]);
  auto s1 = form_stage(10.0, queue, running, 8);
  REQUIRE(s1.has_value());
  CHECK(s1->kind == StageKind::decode_only);
  CHECK(s1->size() == 1);

  // One pending arrival: mixed with one prefilling.
  queue.push_back(&pool[1]);
  auto s2 = form_stage(10.0, queue, running, 8);
  REQUIRE(s2.has_value());
  CHECK(s2->kind == StageKind::mixed);
  CHECK(s2->prefilling.size() == 1);
  CHECK(running.size() == 2);

  // Future arrivals are not admitted yet.
  pool[2].arrival_time = 99.0;
  queue.push_back(&pool[2]);
  auto s3 = form_stage(10.0, queue, running, 8);
  REQUIRE(s3.has_value());
  CHECK(s3->prefilling.empty());

  // Completion evicts; empty system and queue signals done.
  queue.clear();
  for (auto* r : running) r->generated = r->l_out;
  auto s4 = form_stage(10.0, queue, running, 8);
  CHECK(!s4.has_value());
  CHECK(running.empty());
}

TEST_CASE("build_lut: zero tokens cost one launch; times are monotone; crossover flips") {
  const ModelConfig m = model_preset("mixtral");
  const DeviceConfig d = system_preset("duplex", m).device;
  const ExpertLut lut = build_lut(m, d, 1.0, 1 << 16);

  CHECK(lut.time(UnitKind::xpu, 0) == doctest::Approx(d.launch_overhead_s));
  CHECK(lut.time(UnitKind::pim, 0) == doctest::Approx(d.launch_overhead_s));

  double prev_x = 0, prev_p = 0;
  for (std::uint64_t t : {0, 1, 2, 16, 100, 4096, 4100, 8192, 65536}) {
    const double x = lut.time(UnitKind::xpu, t);
    const double p = lut.time(UnitKind::pim, t);
    CHECK(x >= prev_x);
    CHECK(p >= prev_p);
    prev_x = x;
    prev_p = p;
  }
  // Memory-bound counts favor the PIM; far above the crossover the xPU wins.
  CHECK(lut.time(UnitKind::pim, 1) < lut.time(UnitKind::xpu, 1));
  CHECK(lut.time(UnitKind::pim, 8) < lut.time(UnitKind::xpu, 8));
  CHECK(lut.time(UnitKind::xpu, 8192) < lut.time(UnitKind::pim, 8192));
}

TEST_CASE("build_lut on a GPU-only device disables the pim side") {
  const ModelConfig m = model_preset("mixtral");
  const DeviceConfig d = system_preset("gpu_baseline", m).device;
  const ExpertLut lut = build_lut(m, d, 1.0, 4096);
  CHECK(lut.time(UnitKind::pim, 3) == doctest::Approx(1e308).epsilon(1.0).scale(0));
  CHECK(std::isinf(lut.time(UnitKind::pim, 3)));
  CHECK(lut.time(UnitKind::xpu, 3) > 0);
}

TEST_CASE("partition_experts: degenerate cases") {
  const ModelConfig m = model_preset("mixtral");
  const DeviceConfig duplex_dev = system_preset("duplex", m).device;
  const ExpertLut lut = build_lut(m, duplex_dev, 1.0, 4096);

  // All counts zero: everything lands on the pim side at zero makespan.
  const ExpertAssignment all_zero = partition_experts({0, 0, 0, 0, 0, 0, 0, 0}, lut);
  CHECK(all_zero.pim_prefix == 8);
  CHECK(all_zero.predicted_makespan == 0.0);

  // PIM disabled: everything to the xPU.
  const ExpertLut gpu_lut = build_lut(m, system_preset("gpu_baseline", m).device, 1.0, 4096);
  const ExpertAssignment all_xpu = partition_experts({3, 1, 4, 1}, gpu_lut);
  CHECK(all_xpu.pim_prefix == 0);
}

TEST_CASE("partition_experts: equals the best prefix; brute-force gap reported") {
  const ModelConfig m = model_preset("mixtral");
  const DeviceConfig d = system_preset("duplex", m).device;
  const ExpertLut lut = build_lut(m, d, 0.25, 4096);  // tensor-parallel shards
  const std::vector<std::uint64_t> counts = {1, 2, 3, 4, 20, 30, 40, 60};

  const ExpertAssignment a = partition_experts(counts, lut);
  // Exhaustive prefix evaluation, spelled out independently.
  std::vector<double> pim_of(61, 0), xpu_of(61, 0);
  for (std::uint64_t c = 1; c <= 60; ++c) {
    pim_of[c] = lut.time(UnitKind::pim, c);
    xpu_of[c] = lut.time(UnitKind::xpu, c);
  }
  const double best_prefix = oracles::prefix_bruteforce(counts, pim_of, xpu_of);
  CHECK(a.predicted_makespan == doctest::Approx(best_prefix).epsilon(1e-12));

  // Against the 2^8 optimum: report the gap; sorted prefixes stay close.
  std::vector<double> pc(8), xc(8);
  for (std::size_t i = 0; i < 8; ++i) {
    pc[i] = lut.time(UnitKind::pim, counts[i]);
    xc[i] = lut.time(UnitKind::xpu, counts[i]);
  }
  const double opt = oracles::partition_bruteforce(pc, xc);
  CHECK(a.predicted_makespan >= opt - 1e-15);
  const double gap = (a.predicted_makespan - opt) / opt;
  MESSAGE("prefix-vs-bruteforce gap: ", gap);
  CHECK(gap <= 0.05);
}

TEST_CASE("partition prefix property holds on the sorted order") {
  const ModelConfig m = model_preset("mixtral");
  const ExpertLut lut = build_lut(m, system_preset("duplex", m).device, 1.0, 4096);
  const ExpertAssignment a = partition_experts({9, 1, 7, 3, 0, 12, 2, 5}, lut);
  for (std::size_t i = 1; i < a.sorted_counts.size(); ++i)
    CHECK(a.sorted_counts[i] >= a.sorted_counts[i - 1]);
  CHECK(a.pim_prefix <= a.sorted_experts.size());
}

namespace {

std::vector<Request> tiny_workload(std::uint64_t n, std::uint64_t l_in, std::uint64_t l_out) {
  WorkloadParams p;
  p.n_requests = n;
  p.mean_l_in = static_cast<double>(l_in);
  p.mean_l_out = static_cast<double>(l_out);
  p.cv = 0;
  return gen_workload(1, p);
}

}  // namespace

TEST_CASE("run: one request occupies one mixed plus l_out-1 decode stages") {
  const ModelConfig m = model_preset("mixtral");
  const SystemConfig sys = system_preset("duplex", m);
  const Trace t = run(m, sys, Mode::duplex, tiny_workload(1, 64, 4));
  // Token 1 comes out of the prefill stage, tokens 2..4 from decode stages.
  REQUIRE(t.stages.size() == 4);
  CHECK(t.stages[0].kind == StageKind::mixed);
  for (std::size_t i = 1; i < 4; ++i) CHECK(t.stages[i].kind == StageKind::decode_only);
  REQUIRE(t.requests.size() == 1);
  CHECK(t.requests[0].token_timestamps.size() == 4);
}

TEST_CASE("run: empty workload gives an empty trace") {
  const ModelConfig m = model_preset("mixtral");
  const Trace t = run(m, system_preset("duplex", m), Mode::duplex, {});
  CHECK(t.stages.empty());
  CHECK(t.kernels.empty());
}

TEST_CASE("run: fixed seed reproduces byte-identical traces") {
  const ModelConfig m = model_preset("mixtral");
  const SystemConfig sys = system_preset("duplex", m);
  WorkloadParams p;
  p.n_requests = 6;
  p.mean_l_in = 96;
  p.mean_l_out = 12;
  SimOptions opt;
  opt.seed = 5;
  const Trace a = run(m, sys, Mode::duplex_pe, gen_workload(5, p), opt);
  const Trace b = run(m, sys, Mode::duplex_pe, gen_workload(5, p), opt);
  CHECK(a.to_jsonl() == b.to_jsonl());
}

TEST_CASE("run: token counts, ordering, and closed-loop batch behaviour") {
  const ModelConfig m = model_preset("mixtral");
  SystemConfig sys = system_preset("duplex", m);
  sys.max_batch = 4;
  const Trace t = run(m, sys, Mode::duplex_pe_et, tiny_workload(10, 64, 8));
  for (const auto& r : t.requests) {
    CHECK(r.token_timestamps.size() == r.l_out);
    for (std::size_t i = 1; i < r.token_timestamps.size(); ++i)
      CHECK(r.token_timestamps[i] > r.token_timestamps[i - 1]);
  }
  // Closed loop: while requests remain queued, stages run at max_batch.
  std::uint64_t completed_tokens = 0, queued = 10 * 8;
  for (const auto& s : t.stages) {
    if (completed_tokens + s.batch < queued) CHECK(s.batch == 4);
    completed_tokens += s.batch;
  }
}

TEST_CASE("duplex uses the xPU exclusively in mixed stages") {
  const ModelConfig m = model_preset("mixtral");
  const SystemConfig sys = system_preset("duplex", m);
  const Trace t = run(m, sys, Mode::duplex, tiny_workload(2, 128, 4));
  std::vector<bool> stage_is_mixed(t.stages.size());
  for (const auto& s : t.stages) stage_is_mixed[s.index] = s.kind == StageKind::mixed;
  double pim_busy_mixed = 0, pim_busy_decode = 0;
  for (const auto& k : t.kernels) {
    if (k.unit != UnitKind::pim) continue;
    (stage_is_mixed[k.stage] ? pim_busy_mixed : pim_busy_decode) += k.end - k.start;
  }
  CHECK(pim_busy_mixed == 0.0);
  CHECK(pim_busy_decode > 0.0);
}

TEST_CASE("decode-only stage: duplex MoE time tracks the pim memory bound") {
  // Per-expert LUT entries at low counts sit at bytes / pim bandwidth plus
  // the launch overhead: Op/B below 8 keeps them memory-bound.
  const ModelConfig m = model_preset("mixtral");
  const DeviceConfig d = system_preset("duplex", m).device;
  const ExpertLut lut = build_lut(m, d, 1.0, 256);
  const WorkProfile e4 = moe_expert_cost(4, m.hidden, m.intermediate, 2);
  const double mem = static_cast<double>(e4.total_bytes()) / derive_bandwidths(d).pim_bw;
  CHECK(lut.time(UnitKind::pim, 4) ==
        doctest::Approx(mem + d.launch_overhead_s).epsilon(1e-3));
}

TEST_CASE("co-processing never loses to exclusive pim use on decode-only stages") {
  const ModelConfig m = model_preset("mixtral");
  const SystemConfig sys = system_preset("duplex", m);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    std::vector<Request> reqs(16);
    for (std::uint64_t i = 0; i < reqs.size(); ++i) {
      reqs[i].id = i;
      reqs[i].l_in = 256;
      reqs[i].l_out = 8;
      reqs[i].generated = 1;
      reqs[i].token_timestamps = {0.0};
    }
    StageBatch stage;
    stage.stage_index = seed;
    for (auto& r : reqs) stage.decoding.push_back(&r);
    stage.kind = StageKind::decode_only;

    SimOptions opt;
    opt.seed = seed;
    Simulator duplex(m, sys, Mode::duplex, opt);
    Simulator pe(m, sys, Mode::duplex_pe, opt);
    auto reqs_copy = reqs;
    StageBatch stage2 = stage;
    stage2.decoding.clear();
    for (auto& r : reqs_copy) stage2.decoding.push_back(&r);

    const double t_duplex = duplex.simulate_stage(stage, 0.0);
    const double t_pe = pe.simulate_stage(stage2, 0.0);
    CHECK(t_pe <= t_duplex + 1e-12);
  }
}

TEST_CASE("expert assignments recorded in the trace keep the sorted-prefix shape") {
  const ModelConfig m = model_preset("mixtral");
  const SystemConfig sys = system_preset("duplex", m);
  const Trace t = run(m, sys, Mode::duplex_pe_et, tiny_workload(4, 64, 6));
  CHECK(!t.assignments.empty());
  for (const auto& a : t.assignments) {
    const auto& s = a.assignment;
    for (std::size_t i = 1; i < s.sorted_counts.size(); ++i)
      CHECK(s.sorted_counts[i] >= s.sorted_counts[i - 1]);
    CHECK(s.pim_prefix <= s.sorted_experts.size());
  }
}

TEST_CASE("hetero mode runs MoE on the pim devices in every stage kind") {
  const ModelConfig m = model_preset("mixtral");
  const SystemConfig sys = system_preset("hetero", m);
  const Trace t = run(m, sys, Mode::hetero, tiny_workload(2, 128, 4));
  std::vector<bool> is_mixed(t.stages.size());
  for (const auto& s : t.stages) is_mixed[s.index] = s.kind == StageKind::mixed;
  bool moe_pim_mixed = false, moe_xpu_anywhere = false, link_seen = false;
  for (const auto& k : t.kernels) {
    if (k.cls == KernelClass::moe_expert && k.unit == UnitKind::pim && is_mixed[k.stage])
      moe_pim_mixed = true;
    if (k.cls == KernelClass::moe_expert && k.unit == UnitKind::xpu) moe_xpu_anywhere = true;
    if (k.unit == UnitKind::link) link_seen = true;
  }
  CHECK(moe_pim_mixed);
  CHECK(!moe_xpu_anywhere);
  CHECK(link_seen);
}

TEST_CASE("multi-node runs assign requests round-robin and finish") {
  const ModelConfig m = model_preset("grok1");
  SystemConfig sys = system_preset("duplex", m);
  sys.max_batch = 4;
  const Trace t = run(m, sys, Mode::duplex_pe_et, tiny_workload(4, 32, 3));
  CHECK(t.stages.size() >= 3);
  for (const auto& r : t.requests) CHECK(r.token_timestamps.size() == r.l_out);
}

TEST_SUITE_END();
