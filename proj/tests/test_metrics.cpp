// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"
#include "duplexsim/metrics.hpp"
#include "oracles.hpp"

using namespace duplexsim;

TEST_SUITE_BEGIN("metrics");

namespace {

Trace single_request_trace() {
  Trace t;
  t.stages.push_back({0, StageKind::mixed, 0.0, 10.0, 1, 1});
  t.stages.push_back({1, StageKind::decode_only, 10.0, 11.0, 1, 0});
  t.stages.push_back({2, StageKind::decode_only, 11.0, 12.0, 1, 0});
  t.requests.push_back({0, 0.0, 8, 3, {10.0, 11.0, 12.0}});
  return t;
}

}  // namespace

TEST_CASE("latencies: the worked single-request example") {
  const LatencyReport r = latencies(single_request_trace());
  REQUIRE(r.t2ft.size() == 1);
  CHECK(r.t2ft[0] == doctest::Approx(10.0));
  REQUIRE(r.tbt.size() == 2);
  CHECK(r.tbt[0] == doctest::Approx(1.0));
  CHECK(r.tbt[1] == doctest::Approx(1.0));
  CHECK(r.e2e[0] == doctest::Approx(12.0));
  // All TBT samples equal: p50 == p99.
  CHECK(r.tbt_p.p50 == r.tbt_p.p99);
  CHECK(r.excluded_incomplete == 0);
}

TEST_CASE("latencies: incomplete requests are excluded and counted") {
  Trace t = single_request_trace();
  t.requests.push_back({1, 0.0, 8, 5, {10.0, 11.0}});  // only 2 of 5 tokens
  const LatencyReport r = latencies(t);
  CHECK(r.excluded_incomplete == 1);
  CHECK(r.t2ft.size() == 1);
}

TEST_CASE("percentile: nearest rank, monotone, p100 is the max") {
  std::vector<double> v = {5, 1, 9, 3, 7, 2, 8, 4, 6, 10};
  for (double p : {10.0, 25.0, 50.0, 75.0, 90.0, 99.0, 100.0})
    CHECK(percentile(v, p) == oracles::percentile_reference(v, p));
  CHECK(percentile(v, 100.0) == 10.0);
  double prev = 0;
  for (double p : {1.0, 10.0, 50.0, 90.0, 99.0, 100.0}) {
    const double x = percentile(v, p);
    CHECK(x >= prev);
    prev = x;
  }
  CHECK_THROWS_AS(percentile({}, 50.0), std::invalid_argument);
  CHECK_THROWS_AS(percentile({1.0}, 0.0), std::invalid_argument);
}

TEST_CASE("throughput: tokens over wall time") {
  Trace t;
  t.stages.push_back({0, StageKind::decode_only, 0.0, 10.0, 1, 0});
  t.requests.push_back({0, 0.0, 1, 100, std::vector<double>(100, 5.0)});
  CHECK(throughput(t) == doctest::Approx(10.0));
  CHECK_THROWS_AS(throughput(Trace{}), std::invalid_argument);
}

TEST_CASE("energy: additive across kernels, static scales with wall time") {
  const ModelConfig m = model_preset("mixtral");
  SystemConfig sys = system_preset("duplex", m);
  EnergyParams ep;
  ep.static_w_per_device = 10.0;

  Trace t;
  t.stages.push_back({0, StageKind::decode_only, 0.0, 2.0, 1, 0});
  t.requests.push_back({0, 0.0, 1, 1, {2.0}});
  t.kernels.push_back({0, 0, KernelClass::fc, UnitKind::xpu, 0.0, 1.0, 1 << 20, 1 << 24});
  t.kernels.push_back({0, 0, KernelClass::moe_expert, UnitKind::pim, 1.0, 2.0, 1 << 20, 1 << 10});

  const EnergyReport r = energy_report(t, sys, ep);
  WorkProfile k1, k2;
  k1.act_bytes = 1 << 20;
  k1.flops = 1 << 24;
  k2.act_bytes = 1 << 20;
  k2.flops = 1 << 10;
  const double expected = kernel_energy(k1, UnitKind::xpu, ep) +
                          kernel_energy(k2, UnitKind::pim, ep);
  CHECK(r.dram_joules + r.compute_joules == doctest::Approx(expected));
  // 8 devices at 10 W for 2 s of wall time... 4 devices for mixtral.
  CHECK(r.static_joules == doctest::Approx(10.0 * 4 * 2.0));
  CHECK(r.total_joules ==
        doctest::Approx(expected + r.static_joules + r.link_joules));
  CHECK(r.joules_per_token == doctest::Approx(r.total_joules));
  // Empty trace: static-only (and zero wall time here means zero).
  const EnergyReport empty = energy_report(Trace{}, sys, ep);
  CHECK(empty.dram_joules == 0.0);
  CHECK(empty.compute_joules == 0.0);
}

TEST_CASE("roofline: compute-bound kernels approach the ceiling minus overhead share") {
  const ModelConfig m = model_preset("mixtral");
  const SystemConfig sys = system_preset("gpu_baseline", m);
  // A kernel busy exactly flops/peak has utilization 1; launch overhead
  // shaves the achieved rate.
  const double peak = sys.device.xpu_peak_flops * static_cast<double>(sys.devices_per_node);
  const std::uint64_t flops = 1ULL << 40;
  const double pure = static_cast<double>(flops) / peak;
  const double with_overhead = pure + 5e-6;
  Trace t;
  t.stages.push_back({0, StageKind::decode_only, 0.0, with_overhead, 1, 0});
  t.kernels.push_back({0, 0, KernelClass::fc, UnitKind::xpu, 0.0, with_overhead, 1 << 20, flops});
  const auto pts = roofline_points(t, sys);
  REQUIRE(pts.size() == 1);
  CHECK(pts[0].utilization == doctest::Approx(pure / with_overhead).epsilon(1e-6));
  CHECK(pts[0].utilization < 1.0);
}

TEST_CASE("unit busy fractions never exceed unit count times wall") {
  const ModelConfig m = model_preset("mixtral");
  const SystemConfig sys = system_preset("duplex", m);
  WorkloadParams p;
  p.n_requests = 4;
  p.mean_l_in = 64;
  p.mean_l_out = 6;
  p.cv = 0;
  const Trace t = run(m, sys, Mode::duplex_pe, gen_workload(2, p));
  const UnitBusy b = unit_busy(t);
  const double units = static_cast<double>(sys.n_nodes * sys.devices_per_node);
  CHECK(b.xpu_fraction <= units + 1e-9);
  CHECK(b.pim_fraction <= units + 1e-9);
  CHECK(b.wall_s > 0);
}

TEST_CASE("Little's law holds at closed-loop steady state") {
  const ModelConfig m = model_preset("mixtral");
  SystemConfig sys = system_preset("duplex", m);
  sys.max_batch = 8;
  WorkloadParams p;
  p.n_requests = 64;
  p.mean_l_in = 64;
  p.mean_l_out = 64;
  p.cv = 0;
  const Trace t = run(m, sys, Mode::duplex, gen_workload(4, p));
  const LatencyReport lat = latencies(t);
  double mean_e2e = 0;
  for (double v : lat.e2e) mean_e2e += v;
  mean_e2e /= static_cast<double>(lat.e2e.size());
  // throughput x mean residence ~ in-flight token slots = batch x l_out.
  const double in_flight = throughput(t) * mean_e2e;
  CHECK(in_flight == doctest::Approx(8.0 * 64.0).epsilon(0.10));
}

TEST_CASE("csv emitters are stable and labeled") {
  const LatencyReport r = latencies(single_request_trace());
  const std::string rows = latency_csv_rows("duplex", "mixtral", 8, 3, 1, r);
  CHECK(rows.find("duplex,mixtral,8,3,1,t2ft") != std::string::npos);
  CHECK(rows.find("tbt") != std::string::npos);
  CHECK(rows.find("e2e") != std::string::npos);
  CHECK(latency_csv_header().find("mode,model") == 0);
  CHECK(throughput_csv_header().find("mode,model") == 0);
}

TEST_SUITE_END();
