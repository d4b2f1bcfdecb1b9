// SPDX-License-Identifier: Apache-2.0
#include "duplexsim/dram.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

namespace duplexsim {

const char* to_string(AccessPath p) { return p == AccessPath::xpu ? "xpu" : "pim"; }

std::vector<std::uint64_t> stripe(std::uint64_t bytes, std::size_t n_bundles) {
  if (n_bundles == 0) throw std::invalid_argument("stripe: bundle set must be non-empty");
  std::vector<std::uint64_t> out(n_bundles, bytes / n_bundles);
  const std::uint64_t rem = bytes % n_bundles;
  for (std::uint64_t i = 0; i < rem; ++i) out[i] += 1;
  return out;
}

BundleLedger::BundleLedger(const DeviceConfig& device, bool keep_trace)
    : device_(device), keep_trace_(keep_trace) {
  device_.validate();
  busy_until_.assign(bundle_count(), 0.0);
  busy_total_.assign(bundle_count(), 0.0);
}

std::uint64_t BundleLedger::bundle_count() const {
  return device_.n_stacks * device_.stack.n_pseudo_channels * device_.stack.geometry.bundles_per_pc;
}

std::vector<BundleId> BundleLedger::all_bundles() const {
  std::vector<BundleId> v;
  v.reserve(bundle_count());
  for (std::uint32_t s = 0; s < device_.n_stacks; ++s)
    for (std::uint32_t pc = 0; pc < device_.stack.n_pseudo_channels; ++pc)
      for (std::uint32_t b = 0; b < device_.stack.geometry.bundles_per_pc; ++b)
        v.push_back({s, pc, b});
  return v;
}

std::size_t BundleLedger::index_of(const BundleId& b) const {
  const auto& g = device_.stack.geometry;
  if (b.stack >= device_.n_stacks || b.pseudo_channel >= device_.stack.n_pseudo_channels ||
      b.bundle >= g.bundles_per_pc)
    throw std::invalid_argument("BundleLedger: unknown bundle index");
  return (static_cast<std::size_t>(b.stack) * device_.stack.n_pseudo_channels +
          b.pseudo_channel) * g.bundles_per_pc + b.bundle;
}

double BundleLedger::busy_until(const BundleId& b) const { return busy_until_[index_of(b)]; }
double BundleLedger::busy_total(const BundleId& b) const { return busy_total_[index_of(b)]; }

double BundleLedger::transfer_time(AccessPath path, const std::vector<BundleId>& bundles,
                                   std::uint64_t bytes) const {
  if (bundles.empty()) throw std::invalid_argument("transfer_time: bundle set must be non-empty");
  const auto& g = device_.stack.geometry;
  // xPU drains one bank at a time per pseudo channel: one 512-bit burst
  // pair every 2*tCCD_S. Logic-PIM raises a whole bundle: 512 bits from
  // each of the four bank groups every tCCD_L, which is exactly 4x.
  const std::uint64_t beat_bytes =
      path == AccessPath::xpu ? g.bits_per_bundle_beat / 8
                              : g.bank_groups_per_pc * g.bits_per_bundle_beat / 8;
  const double beat_interval =
      (path == AccessPath::xpu ? 2.0 * g.tccd_s : g.tccd_l) / g.efficiency;

  // Per-bundle stripe, then accumulate per pseudo channel; both paths are
  // paced per channel (the PIM path serves its bundles one at a time).
  const auto shares = stripe(bytes, bundles.size());
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint64_t> per_pc;
  for (std::size_t i = 0; i < bundles.size(); ++i)
    per_pc[{bundles[i].stack, bundles[i].pseudo_channel}] += shares[i];

  double dur = 0;
  for (const auto& [pc, pc_bytes] : per_pc) {
    (void)pc;
    const std::uint64_t beats = (pc_bytes + beat_bytes - 1) / beat_bytes;
    dur = std::max(dur, static_cast<double>(beats) * beat_interval);
  }
  return dur;
}

double BundleLedger::service(const AccessRequest& req) {
  if (req.bytes == 0) throw std::invalid_argument("service: bytes must be > 0");
  const double duration = transfer_time(req.path, req.bundles, req.bytes);
  return occupy(req.bundles, req.start_time, duration, req.path, req.bytes);
}

double BundleLedger::occupy(const std::vector<BundleId>& bundles, double start, double duration,
                            AccessPath path, std::uint64_t bytes) {
  if (bundles.empty()) throw std::invalid_argument("occupy: bundle set must be non-empty");
  double eff_start = start;
  for (const auto& b : bundles) eff_start = std::max(eff_start, busy_until_[index_of(b)]);
  const double finish = eff_start + duration;
  const auto shares = stripe(bytes, bundles.size());
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    const auto idx = index_of(bundles[i]);
    busy_until_[idx] = finish;
    busy_total_[idx] += duration;
    if (keep_trace_)
      trace_.push_back({eff_start, path, bundles[i].stack, bundles[i].pseudo_channel,
                        bundles[i].bundle, shares[i], duration});
  }
  return finish;
}

std::string BundleLedger::trace_csv() const {
  std::string out = "time,path,stack,pc,bundle,bytes,duration\n";
  char line[160];
  for (const auto& r : trace_) {
    std::snprintf(line, sizeof(line), "%.9e,%s,%u,%u,%u,%llu,%.9e\n", r.time, to_string(r.path),
                  r.stack, r.pseudo_channel, r.bundle,
                  static_cast<unsigned long long>(r.bytes), r.duration);
    out += line;
  }
  return out;
}

}  // namespace duplexsim
