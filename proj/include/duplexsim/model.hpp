// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace duplexsim {

enum class MoePattern { all, alternating, none };

enum class KernelClass {
  fc,
  attention_score,
  attention_context,
  moe_expert,
  softmax,
  activation,
  allreduce_partial,
};

const char* to_string(KernelClass c);
const char* to_string(MoePattern p);
MoePattern moe_pattern_from_string(const std::string& s);

// One LLM architecture: decoder shapes plus MoE/GQA parameters.
struct ModelConfig {
  std::string name;
  std::uint64_t total_params = 0;
  std::uint64_t n_layers = 0;
  std::uint64_t hidden = 0;        // h
  std::uint64_t intermediate = 0;  // i
  std::uint64_t n_heads = 0;
  std::uint64_t d_head = 0;        // hidden / n_heads
  std::uint64_t grp = 1;           // query heads per KV group; 1 = MHA
  std::uint64_t n_experts = 0;     // 0 = dense FFN
  std::uint64_t top_k = 0;
  MoePattern moe_layer_pattern = MoePattern::none;
  std::uint64_t weight_precision_bytes = 2;  // FP16

  // Throws std::invalid_argument naming the violated constraint.
  void validate() const;

  bool layer_is_moe(std::uint64_t layer) const;
  std::uint64_t n_moe_layers() const;
  std::uint64_t kv_groups() const { return n_heads / grp; }
};

// Built-in presets (Mixtral, GLaM, Grok1, OPT, Llama3 evaluation rows).
ModelConfig model_preset(const std::string& name);
std::vector<std::string> model_preset_names();

// Work of one kernel: the roofline currency.
struct WorkProfile {
  std::uint64_t flops = 0;
  std::uint64_t weight_bytes = 0;
  std::uint64_t act_bytes = 0;
  KernelClass kernel_class = KernelClass::fc;

  std::uint64_t total_bytes() const { return weight_bytes + act_bytes; }
  // flops per byte moved; only meaningful when total_bytes() > 0.
  double op_intensity() const;
  bool is_zero() const { return flops == 0 && weight_bytes == 0 && act_bytes == 0; }

  WorkProfile& operator+=(const WorkProfile& o);
};

// Flop weights for the lightweight elementwise kernels.
struct ElementwiseCosts {
  std::uint64_t softmax_flops_per_elem = 5;
  std::uint64_t activation_flops_per_elem = 4;
};

// A fully-connected layer over `tokens` rows: 2*t*in*out flops, one pass
// over the weights, activations read in and written out once.
WorkProfile fc_cost(std::uint64_t tokens, std::uint64_t in_dim, std::uint64_t out_dim,
                    std::uint64_t precision);

// One expert FFN (gate/up/down projections with a gated activation in
// between). tokens == 0 means the expert was not selected: nothing is
// loaded and nothing runs.
WorkProfile moe_expert_cost(std::uint64_t tokens_for_expert, std::uint64_t h, std::uint64_t i,
                            std::uint64_t precision);

// Attention (score + context combined) for one request: grp-wide Q slices
// against per-group KV matrices, summed over n_heads/grp groups.
// act_bytes covers K and V reads plus Q read and output write; the score
// matrix traffic belongs to the softmax kernel.
WorkProfile attention_cost(std::uint64_t ctx_len, std::uint64_t q_len, std::uint64_t n_heads,
                           std::uint64_t d_head, std::uint64_t grp, std::uint64_t precision);

// Softmax over the score matrix of one request (reads + rewrites it).
WorkProfile softmax_cost(std::uint64_t ctx_len, std::uint64_t q_len, std::uint64_t n_heads,
                         std::uint64_t precision, const ElementwiseCosts& ec = {});

// Gated-activation flops for one expert (traffic is accounted with the
// expert itself).
WorkProfile activation_cost(std::uint64_t tokens, std::uint64_t i, const ElementwiseCosts& ec = {});

// Bytes of K and V cached for one request at the given context length.
std::uint64_t kv_cache_bytes(const ModelConfig& m, std::uint64_t ctx_len);

// What one stage computes, before any placement decisions.
struct StageComposition {
  // Context length (current token included) of each decoding request.
  std::vector<std::uint64_t> decode_ctx;
  // Input length of each prefilling request.
  std::vector<std::uint64_t> prefill_len;
  // Per layer, per expert: routed token counts. Ignored for dense layers;
  // must be sized n_experts for each MoE layer and sum to top_k * tokens.
  std::vector<std::vector<std::uint64_t>> expert_tokens;

  std::uint64_t total_tokens() const;
  bool empty() const { return decode_ctx.empty() && prefill_len.empty(); }
};

enum class AttnSide { none, decode, prefill };

// One kernel of a stage walk, tagged with enough identity for unit
// selection (expert index, attention side).
struct StageKernel {
  std::int64_t layer = 0;  // -1 = embedding, n_layers = LM head
  KernelClass cls = KernelClass::fc;
  WorkProfile work;
  std::int64_t expert = -1;
  AttnSide attn = AttnSide::none;
};

// Walks every layer of the model for one stage: QKV generation, per-request
// attention (score/context/softmax split decode vs prefill), projection,
// gate, per-expert FFNs (or the dense FFN) with their activations, plus one
// FC each for the token embedding and LM head.
std::vector<StageKernel> stage_layer_profiles(const ModelConfig& m, const StageComposition& stage,
                                              const ElementwiseCosts& ec = {});

}  // namespace duplexsim
