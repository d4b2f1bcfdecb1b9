// SPDX-License-Identifier: Apache-2.0
//
// Independent oracles for the tests: explicit loop counters and exhaustive
// searches that never touch the implementation paths they check.
#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <vector>

namespace oracles {

// Multiply-accumulate counter for a dense t x in x out matmul, 2 flops per
// MAC, counted one scalar at a time.
inline std::uint64_t fc_flops_bruteforce(std::uint64_t t, std::uint64_t in, std::uint64_t out) {
  std::uint64_t flops = 0;
  for (std::uint64_t a = 0; a < t; ++a)
    for (std::uint64_t o = 0; o < out; ++o)
      for (std::uint64_t i = 0; i < in; ++i) flops += 2;
  return flops;
}

// Byte counter for the same FC: weights once, inputs read, outputs written.
inline std::uint64_t fc_bytes_bruteforce(std::uint64_t t, std::uint64_t in, std::uint64_t out,
                                         std::uint64_t prec) {
  std::uint64_t bytes = 0;
  for (std::uint64_t i = 0; i < in; ++i)
    for (std::uint64_t o = 0; o < out; ++o) bytes += prec;  // weight element
  for (std::uint64_t a = 0; a < t; ++a) {
    for (std::uint64_t i = 0; i < in; ++i) bytes += prec;   // input read
    for (std::uint64_t o = 0; o < out; ++o) bytes += prec;  // output write
  }
  return bytes;
}

// Attention flop counter: per KV group, score QK^T then context SV, scalar
// MACs only (softmax excluded, matching the attention profile).
inline std::uint64_t attention_flops_bruteforce(std::uint64_t ctx, std::uint64_t q,
                                                std::uint64_t n_heads, std::uint64_t d,
                                                std::uint64_t grp) {
  std::uint64_t flops = 0;
  const std::uint64_t groups = n_heads / grp;
  for (std::uint64_t g = 0; g < groups; ++g) {
    for (std::uint64_t r = 0; r < grp * q; ++r)
      for (std::uint64_t c = 0; c < ctx; ++c)
        for (std::uint64_t k = 0; k < d; ++k) flops += 2;  // score
    for (std::uint64_t r = 0; r < grp * q; ++r)
      for (std::uint64_t k = 0; k < d; ++k)
        for (std::uint64_t c = 0; c < ctx; ++c) flops += 2;  // context
  }
  return flops;
}

// K/V bytes actually resident for one request.
inline std::uint64_t kv_bytes_bruteforce(std::uint64_t ctx, std::uint64_t n_heads, std::uint64_t d,
                                         std::uint64_t grp, std::uint64_t prec) {
  std::uint64_t bytes = 0;
  for (std::uint64_t g = 0; g < n_heads / grp; ++g)
    for (std::uint64_t c = 0; c < ctx; ++c)
      for (std::uint64_t k = 0; k < d; ++k) bytes += 2 * prec;  // K and V
  return bytes;
}

// Beat-level transfer oracle: sums fixed beat intervals one at a time.
inline double beat_sum_duration(std::uint64_t bytes, std::uint64_t beat_bytes,
                                double beat_interval) {
  double t = 0;
  for (std::uint64_t sent = 0; sent < bytes; sent += beat_bytes) t += beat_interval;
  return t;
}

// Exhaustive two-machine assignment: best makespan over all 2^n subsets.
// Returns the optimum; n must stay small.
inline double partition_bruteforce(const std::vector<double>& pim_cost,
                                   const std::vector<double>& xpu_cost) {
  const std::size_t n = pim_cost.size();
  double best = std::numeric_limits<double>::infinity();
  for (std::uint64_t mask = 0; mask < (1ULL << n); ++mask) {
    double p = 0, x = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (1ULL << i)) p += pim_cost[i];
      else x += xpu_cost[i];
    }
    best = std::min(best, std::max(p, x));
  }
  return best;
}

// Best makespan over sorted-prefix assignments only.
inline double prefix_bruteforce(std::vector<std::uint64_t> counts,
                                const std::vector<double>& pim_of_count,
                                const std::vector<double>& xpu_of_count) {
  std::sort(counts.begin(), counts.end());
  const std::size_t n = counts.size();
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p <= n; ++p) {
    double pim = 0, xpu = 0;
    for (std::size_t i = 0; i < p; ++i) pim += counts[i] ? pim_of_count[counts[i]] : 0;
    for (std::size_t i = p; i < n; ++i) xpu += counts[i] ? xpu_of_count[counts[i]] : 0;
    best = std::min(best, std::max(pim, xpu));
  }
  return best;
}

// Nearest-rank percentile, spelled out independently.
inline double percentile_reference(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  std::size_t rank = 0;
  while (rank < v.size() && 100.0 * static_cast<double>(rank) / static_cast<double>(v.size()) < p)
    ++rank;
  return v[rank == 0 ? 0 : rank - 1];
}

}  // namespace oracles
