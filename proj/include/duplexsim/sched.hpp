// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "duplexsim/cost.hpp"
#include "duplexsim/dram.hpp"
#include "duplexsim/hardware.hpp"
#include "duplexsim/model.hpp"
#include "duplexsim/placement.hpp"

namespace duplexsim {

enum class Mode {
  gpu_baseline,
  gpu_2x,
  hetero,
  bank_pim,
  duplex,
  duplex_pe,
  duplex_pe_et,
};

const char* to_string(Mode m);
Mode mode_from_string(const std::string& s);
ExpertStrategy expert_strategy_for(Mode m);
bool mode_uses_pim(Mode m);
bool mode_co_processes(Mode m);

struct Request {
  std::uint64_t id = 0;
  double arrival_time = 0;
  std::uint64_t l_in = 1;
  std::uint64_t l_out = 1;
  std::uint64_t generated = 0;  // tokens produced so far (first one by the prefill)
  std::vector<double> token_timestamps;
  std::uint64_t node = 0;  // data-parallel home node

  std::uint64_t ctx_len() const { return l_in + generated; }
  bool done() const { return generated >= l_out; }
};

enum class StageKind { mixed, decode_only };

const char* to_string(StageKind k);

struct StageBatch {
  std::uint64_t stage_index = 0;
  std::vector<Request*> decoding;
  std::vector<Request*> prefilling;
  StageKind kind = StageKind::decode_only;

  std::uint64_t size() const { return decoding.size() + prefilling.size(); }
};

// Synthetic open- or closed-loop workload. Lengths are Gaussian with the
// given coefficient of variation, clamped to one token; arrivals are
// Poisson when qps > 0, otherwise everything queues at t = 0.
struct WorkloadParams {
  std::uint64_t n_requests = 0;
  double mean_l_in = 1;
  double mean_l_out = 1;
  double cv = 0.25;
  double qps = 0;  // 0 = closed loop
};

std::vector<Request> gen_workload(std::uint64_t seed, const WorkloadParams& p);

struct GateOutcome {
  std::vector<std::uint64_t> tokens_per_expert;
  std::uint64_t seed = 0;

  std::uint64_t total() const;
};

// Uniform top-k expert choice per token, aggregated to counts.
GateOutcome gate_select(std::uint64_t stage_tokens, std::uint64_t n_experts, std::uint64_t top_k,
                        std::uint64_t seed);

// Continuous batching: evict finished requests, admit arrivals up to
// max_batch, classify the stage. nullopt once nothing is left to run.
std::optional<StageBatch> form_stage(double clock, std::deque<Request*>& wait_queue,
                                     std::vector<Request*>& running, std::uint64_t max_batch);

// Processing-time lookup table per unit for one expert (or expert shard):
// exact entries up to 4096 tokens, stride-64 linear interpolation beyond.
class ExpertLut {
 public:
  ExpertLut() = default;
  ExpertLut(const ModelConfig& m, const DeviceConfig& d, double shard_fraction,
            std::uint64_t max_tokens);

  double time(UnitKind unit, std::uint64_t tokens) const;
  std::uint64_t max_tokens() const { return max_tokens_; }
  bool pim_enabled() const { return pim_enabled_; }

 private:
  double lookup(const std::vector<double>& exact, const std::vector<double>& coarse,
                std::uint64_t tokens) const;

  std::vector<double> xpu_exact_, pim_exact_;   // [0 .. kExactMax]
  std::vector<double> xpu_coarse_, pim_coarse_; // stride-64 beyond
  std::uint64_t max_tokens_ = 0;
  bool pim_enabled_ = false;

  static constexpr std::uint64_t kExactMax = 4096;
  static constexpr std::uint64_t kStride = 64;
};

ExpertLut build_lut(const ModelConfig& m, const DeviceConfig& d, double shard_fraction = 1.0,
                    std::uint64_t max_tokens = 1 << 20);

struct ExpertAssignment {
  // Expert ids sorted ascending by token count (ties by id); the first
  // pim_prefix of them run on Logic-PIM, the rest on the xPU.
  std::vector<std::uint64_t> sorted_experts;
  std::vector<std::uint64_t> sorted_counts;
  std::size_t pim_prefix = 0;
  double predicted_makespan = 0;

  bool on_pim(std::uint64_t expert) const;
};

// Greedy LUT partition over sorted-prefix assignments: minimizes
// max(sum of pim times, sum of xpu times); zero-count experts cost nothing
// and sit at the front of the prefix; ties between nonzero prefixes favor
// fewer pim experts.
ExpertAssignment partition_experts(const std::vector<std::uint64_t>& counts_per_expert,
                                   const ExpertLut& lut);

// ---- Trace ----------------------------------------------------------------

struct StageRecord {
  std::uint64_t index = 0;
  StageKind kind = StageKind::decode_only;
  double start = 0;
  double end = 0;
  std::uint64_t batch = 0;
  std::uint64_t prefill_count = 0;
};

struct KernelRecord {
  std::uint64_t stage = 0;
  std::int64_t layer = 0;
  KernelClass cls = KernelClass::fc;
  UnitKind unit = UnitKind::xpu;
  double start = 0;
  double end = 0;
  std::uint64_t bytes = 0;
  std::uint64_t flops = 0;
};

struct RequestRecord {
  std::uint64_t id = 0;
  double arrival = 0;
  std::uint64_t l_in = 0;
  std::uint64_t l_out = 0;
  std::vector<double> token_timestamps;
};

struct AssignmentRecord {
  std::uint64_t stage = 0;
  std::int64_t layer = 0;
  ExpertAssignment assignment;
};

struct Trace {
  std::string model;
  std::string mode;
  std::uint64_t seed = 0;
  std::string bandwidth_note;
  std::vector<StageRecord> stages;
  std::vector<KernelRecord> kernels;
  std::vector<RequestRecord> requests;
  std::vector<AssignmentRecord> assignments;  // co-processing audit trail

  std::uint64_t total_generated_tokens() const;
  std::string to_jsonl() const;
};

// ---- Stage simulation ------------------------------------------------------

struct SimOptions {
  std::uint64_t seed = 1;
  bool keep_dram_trace = false;
  ElementwiseCosts elementwise;
  EnergyParams energy;
};

class Simulator {
 public:
  Simulator(const ModelConfig& m, const SystemConfig& sys, Mode mode, const SimOptions& opt);

  // Advances one stage; returns its end time and appends records.
  double simulate_stage(const StageBatch& stage, double clock);

  // Full run: form_stage / simulate_stage until drained.
  Trace run(std::vector<Request> workload);

  const Placement& placement() const { return placement_; }
  const BundleLedger& ledger() const { return *ledger_; }
  const ExpertLut& lut() const { return lut_; }

 private:
  friend struct StageWalker;
  ModelConfig model_;
  SystemConfig system_;
  Mode mode_;
  SimOptions opt_;
  Placement placement_;
  ExpertLut lut_;
  std::unique_ptr<BundleLedger> ledger_;  // device 0 of node 0
  Trace trace_;
  std::uint64_t stage_counter_ = 0;
};

// One-call wrapper per the module contract.
Trace run(const ModelConfig& m, const SystemConfig& sys, Mode mode,
          std::vector<Request> workload, const SimOptions& opt = {});

}  // namespace duplexsim
