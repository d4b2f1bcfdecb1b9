// SPDX-License-Identifier: Apache-2.0
#include "duplexsim/model.hpp"

#include <stdexcept>

namespace duplexsim {

const char* to_string(KernelClass c) {
  switch (c) {
    case KernelClass::fc: return "fc";
    case KernelClass::attention_score: return "attention_score";
    case KernelClass::attention_context: return "attention_context";
    case KernelClass::moe_expert: return "moe_expert";
    case KernelClass::softmax: return "softmax";
    case KernelClass::activation: return "activation";
    case KernelClass::allreduce_partial: return "allreduce_partial";
  }
  return "?";
}

const char* to_string(MoePattern p) {
  switch (p) {
    case MoePattern::all: return "all";
    case MoePattern::alternating: return "alternating";
    case MoePattern::none: return "none";
  }
  return "?";
}

MoePattern moe_pattern_from_string(const std::string& s) {
  if (s == "all") return MoePattern::all;
  if (s == "alternating") return MoePattern::alternating;
  if (s == "none") return MoePattern::none;
  throw std::invalid_argument("unknown moe_layer_pattern: " + s);
}

void ModelConfig::validate() const {
  if (hidden == 0 || n_heads == 0 || d_head == 0)
    throw std::invalid_argument("model " + name + ": hidden/n_heads/d_head must be >= 1");
  if (hidden != n_heads * d_head)
    throw std::invalid_argument("model " + name + ": hidden != n_heads * d_head");
  if (grp == 0 || n_heads % grp != 0)
    throw std::invalid_argument("model " + name + ": grp must divide n_heads");
  if (n_experts > 0) {
    if (top_k == 0 || top_k > n_experts)
      throw std::invalid_argument("model " + name + ": need 1 <= top_k <= n_experts");
    if (moe_layer_pattern == MoePattern::none)
      throw std::invalid_argument("model " + name + ": n_experts > 0 needs a MoE layer pattern");
    if (intermediate == 0)
      throw std::invalid_argument("model " + name + ": intermediate must be >= 1");
  } else if (moe_layer_pattern != MoePattern::none) {
    throw std::invalid_argument("model " + name + ": moe_layer_pattern requires n_experts > 0");
  }
  if (weight_precision_bytes == 0)
    throw std::invalid_argument("model " + name + ": weight_precision_bytes must be >= 1");
}

bool ModelConfig::layer_is_moe(std::uint64_t layer) const {
  switch (moe_layer_pattern) {
    case MoePattern::all: return true;
    // GLaM interleaves plain decoder blocks with MoE decoder blocks; the
    // dense block comes first.
    case MoePattern::alternating: return layer % 2 == 1;
    case MoePattern::none: return false;
  }
  return false;
}

std::uint64_t ModelConfig::n_moe_layers() const {
  std::uint64_t n = 0;
  for (std::uint64_t l = 0; l < n_layers; ++l) n += layer_is_moe(l) ? 1 : 0;
  return n;
}

double WorkProfile::op_intensity() const {
  return static_cast<double>(flops) / static_cast<double>(total_bytes());
}

WorkProfile& WorkProfile::operator+=(const WorkProfile& o) {
  flops += o.flops;
  weight_bytes += o.weight_bytes;
  act_bytes += o.act_bytes;
  return *this;
}

WorkProfile fc_cost(std::uint64_t tokens, std::uint64_t in_dim, std::uint64_t out_dim,
                    std::uint64_t precision) {
  if (tokens == 0 || in_dim == 0 || out_dim == 0 || precision == 0)
    throw std::invalid_argument("fc_cost: all arguments must be >= 1");
  WorkProfile p;
  p.kernel_class = KernelClass::fc;
  p.flops = 2 * tokens * in_dim * out_dim;  // multiply-accumulate = 2 flops
  p.weight_bytes = in_dim * out_dim * precision;
  p.act_bytes = tokens * (in_dim + out_dim) * precision;
  return p;
}

WorkProfile moe_expert_cost(std::uint64_t tokens, std::uint64_t h, std::uint64_t i,
                            std::uint64_t precision) {
  if (h == 0 || i == 0 || precision == 0)
    throw std::invalid_argument("moe_expert_cost: h, i, precision must be >= 1");
  WorkProfile p;
  p.kernel_class = KernelClass::moe_expert;
  if (tokens == 0) return p;  // unselected expert loads nothing
  // gate-projection (h->i), up-projection (h->i), down-projection (i->h).
  p.flops = 2 * 3 * h * i * tokens;
  p.weight_bytes = 3 * h * i * precision;
  // FC inputs/outputs once each, plus the gated activation reading both
  // i-wide operands and writing one.
  p.act_bytes = (3 * tokens * (h + i) + 3 * tokens * i) * precision;
  return p;
}

WorkProfile attention_cost(std::uint64_t ctx_len, std::uint64_t q_len, std::uint64_t n_heads,
                           std::uint64_t d_head, std::uint64_t grp, std::uint64_t precision) {
  if (q_len == 0 || ctx_len < q_len)
    throw std::invalid_argument("attention_cost: need ctx_len >= q_len >= 1");
  if (grp == 0 || n_heads == 0 || n_heads % grp != 0)
    throw std::invalid_argument("attention_cost: grp must divide n_heads");
  if (d_head == 0 || precision == 0)
    throw std::invalid_argument("attention_cost: d_head, precision must be >= 1");
  const std::uint64_t groups = n_heads / grp;
  WorkProfile p;
  p.kernel_class = KernelClass::attention_score;
  // Per group: Q (grp x q_len rows) against K^T, then scores against V.
  const std::uint64_t score_flops = 2 * (grp * q_len) * d_head * ctx_len;
  p.flops = groups * 2 * score_flops;  // score + context
  // K and V reads per group, plus Q read and output write.
  const std::uint64_t kv = 2 * ctx_len * d_head * precision;
  const std::uint64_t qo = 2 * grp * q_len * d_head * precision;
  p.act_bytes = groups * (kv + qo);
  return p;
}

WorkProfile softmax_cost(std::uint64_t ctx_len, std::uint64_t q_len, std::uint64_t n_heads,
                         std::uint64_t precision, const ElementwiseCosts& ec) {
  WorkProfile p;
  p.kernel_class = KernelClass::softmax;
  const std::uint64_t elems = n_heads * q_len * ctx_len;  // score matrix
  p.flops = ec.softmax_flops_per_elem * elems;
  p.act_bytes = 2 * elems * precision;  // read + rewrite
  return p;
}

WorkProfile activation_cost(std::uint64_t tokens, std::uint64_t i, const ElementwiseCosts& ec) {
  WorkProfile p;
  p.kernel_class = KernelClass::activation;
  p.flops = ec.activation_flops_per_elem * tokens * i;
  // Operand traffic is charged to the owning expert/FFN kernel.
  return p;
}

std::uint64_t kv_cache_bytes(const ModelConfig& m, std::uint64_t ctx_len) {
  return 2 * m.n_layers * ctx_len * (m.hidden / m.grp) * m.weight_precision_bytes;
}

std::uint64_t StageComposition::total_tokens() const {
  std::uint64_t t = decode_ctx.size();
  for (auto len : prefill_len) t += len;
  return t;
}

namespace {

// QKV generation output width: full Q plus grouped K and V.
std::uint64_t qkv_out_dim(const ModelConfig& m) { return m.hidden + 2 * (m.hidden / m.grp); }

}  // namespace

std::vector<StageKernel> stage_layer_profiles(const ModelConfig& m, const StageComposition& stage,
                                              const ElementwiseCosts& ec) {
  m.validate();
  if (stage.empty()) throw std::invalid_argument("stage_layer_profiles: empty stage");
  const std::uint64_t tokens = stage.total_tokens();
  const std::uint64_t prec = m.weight_precision_bytes;

  std::vector<StageKernel> out;
  // Token embedding, modeled as one FC over all stage tokens.
  out.push_back({-1, KernelClass::fc, fc_cost(tokens, m.hidden, m.hidden, prec), -1, AttnSide::none});

  for (std::uint64_t layer = 0; layer < m.n_layers; ++layer) {
    const auto lid = static_cast<std::int64_t>(layer);
    out.push_back({lid, KernelClass::fc, fc_cost(tokens, m.hidden, qkv_out_dim(m), prec), -1,
                   AttnSide::none});

    auto emit_attention = [&](std::uint64_t ctx, std::uint64_t q, AttnSide side) {
      WorkProfile both = attention_cost(ctx, q, m.n_heads, m.d_head, m.grp, prec);
      // Split the combined profile: K + Q traffic with the score half,
      // V + output traffic with the context half.
      const std::uint64_t groups = m.n_heads / m.grp;
      WorkProfile score, context;
      score.kernel_class = KernelClass::attention_score;
      context.kernel_class = KernelClass::attention_context;
      score.flops = both.flops / 2;
      context.flops = both.flops - score.flops;
      const std::uint64_t k_bytes = groups * ctx * m.d_head * prec;
      const std::uint64_t q_bytes = groups * m.grp * q * m.d_head * prec;
      score.act_bytes = k_bytes + q_bytes;
      context.act_bytes = both.act_bytes - score.act_bytes;
      out.push_back({lid, KernelClass::attention_score, score, -1, side});
      out.push_back({lid, KernelClass::softmax, softmax_cost(ctx, q, m.n_heads, prec, ec), -1, side});
      out.push_back({lid, KernelClass::attention_context, context, -1, side});
    };
    for (auto ctx : stage.decode_ctx) emit_attention(ctx, 1, AttnSide::decode);
    for (auto len : stage.prefill_len) emit_attention(len, len, AttnSide::prefill);

    out.push_back({lid, KernelClass::fc, fc_cost(tokens, m.hidden, m.hidden, prec), -1,
                   AttnSide::none});

    if (m.layer_is_moe(layer)) {
      out.push_back({lid, KernelClass::fc, fc_cost(tokens, m.hidden, m.n_experts, prec), -1,
                     AttnSide::none});
      if (layer >= stage.expert_tokens.size())
        throw std::invalid_argument("stage_layer_profiles: missing gate counts for MoE layer");
      const auto& counts = stage.expert_tokens[layer];
      if (counts.size() != m.n_experts)
        throw std::invalid_argument("stage_layer_profiles: gate counts must cover every expert");
      for (std::uint64_t e = 0; e < m.n_experts; ++e) {
        out.push_back({lid, KernelClass::moe_expert,
                       moe_expert_cost(counts[e], m.hidden, m.intermediate, prec),
                       static_cast<std::int64_t>(e), AttnSide::none});
        if (counts[e] > 0)
          out.push_back({lid, KernelClass::activation, activation_cost(counts[e], m.intermediate, ec),
                         static_cast<std::int64_t>(e), AttnSide::none});
      }
    } else {
      // Dense FFN: same three-FC shape as a single expert fed by all tokens.
      WorkProfile ffn = moe_expert_cost(tokens, m.hidden, m.intermediate, prec);
      ffn.kernel_class = KernelClass::fc;
      out.push_back({lid, KernelClass::fc, ffn, -1, AttnSide::none});
      out.push_back({lid, KernelClass::activation, activation_cost(tokens, m.intermediate, ec), -1,
                     AttnSide::none});
    }
  }

  // LM head for the positions that produce a logit: one per decoding
  // request plus the last position of each prefill.
  const std::uint64_t head_tokens = stage.decode_ctx.size() + stage.prefill_len.size();
  out.push_back({static_cast<std::int64_t>(m.n_layers), KernelClass::fc,
                 fc_cost(head_tokens, m.hidden, m.hidden, prec), -1, AttnSide::none});
  return out;
}

// ---- Presets (Table 1 of the evaluation setup) ------------------------------

ModelConfig model_preset(const std::string& name) {
  ModelConfig m;
  m.name = name;
  if (name == "mixtral") {
    m.total_params = 47'000'000'000ULL;
    m.n_layers = 32; m.hidden = 4096; m.intermediate = 14336;
    m.n_heads = 32; m.d_head = 128; m.grp = 4;
    m.n_experts = 8; m.top_k = 2; m.moe_layer_pattern = MoePattern::all;
  } else if (name == "glam") {
    m.total_params = 143'000'000'000ULL;
    m.n_layers = 32; m.hidden = 4096; m.intermediate = 16384;
    m.n_heads = 32; m.d_head = 128; m.grp = 1;
    m.n_experts = 64; m.top_k = 2; m.moe_layer_pattern = MoePattern::alternating;
  } else if (name == "grok1") {
    m.total_params = 314'000'000'000ULL;
    m.n_layers = 64; m.hidden = 6144; m.intermediate = 32768;
    m.n_heads = 48; m.d_head = 128; m.grp = 6;
    m.n_experts = 8; m.top_k = 2; m.moe_layer_pattern = MoePattern::all;
  } else if (name == "opt") {
    m.total_params = 66'000'000'000ULL;
    m.n_layers = 64; m.hidden = 9216; m.intermediate = 36864;
    m.n_heads = 72; m.d_head = 128; m.grp = 1;
    m.n_experts = 0; m.top_k = 0; m.moe_layer_pattern = MoePattern::none;
  } else if (name == "llama3") {
    m.total_params = 70'000'000'000ULL;
    m.n_layers = 80; m.hidden = 8192; m.intermediate = 28672;
    m.n_heads = 64; m.d_head = 128; m.grp = 8;
    m.n_experts = 0; m.top_k = 0; m.moe_layer_pattern = MoePattern::none;
  } else {
    throw std::invalid_argument("unknown model preset: " + name);
  }
  m.validate();
  return m;
}

std::vector<std::string> model_preset_names() {
  return {"mixtral", "glam", "grok1", "opt", "llama3"};
}

}  // namespace duplexsim
