// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "duplexsim/hardware.hpp"

namespace duplexsim {

enum class AccessPath { xpu, pim };

const char* to_string(AccessPath p);

struct BundleId {
  std::uint32_t stack = 0;
  std::uint32_t pseudo_channel = 0;
  std::uint32_t bundle = 0;

  auto operator<=>(const BundleId&) const = default;
};

struct AccessRequest {
  AccessPath path = AccessPath::xpu;
  std::vector<BundleId> bundles;  // non-empty, unique
  std::uint64_t bytes = 0;        // > 0
  double start_time = 0;
};

struct AccessTraceRow {
  double time = 0;
  AccessPath path = AccessPath::xpu;
  std::uint32_t stack = 0;
  std::uint32_t pseudo_channel = 0;
  std::uint32_t bundle = 0;
  std::uint64_t bytes = 0;
  double duration = 0;
};

// Transaction-level bank-bundle timing: per-bundle busy-until timestamps
// plus beat-paced durations. The xPU path drains one pseudo channel at
// 512 bits per 2*tCCD_S; the Logic-PIM path reads a whole 8-bank bundle at
// once, 512 bits from each of the four bank groups per tCCD_L, i.e. 2048
// bits per beat and exactly 4x the xPU rate. Both paths are scaled by the
// geometry efficiency factor.
class BundleLedger {
 public:
  BundleLedger(const DeviceConfig& device, bool keep_trace = false);

  // Serves a striped access: effective start is the max of the request
  // start and every touched bundle's busy-until; the duration comes from
  // beat pacing over the touched pseudo channels; all touched bundles are
  // then busy until the finish time.
  double service(const AccessRequest& req);

  // Books an externally-timed interval (a kernel whose duration came from
  // the roofline model) on the same serialization rules.
  double occupy(const std::vector<BundleId>& bundles, double start, double duration,
                AccessPath path, std::uint64_t bytes);

  double busy_until(const BundleId& b) const;
  double busy_total(const BundleId& b) const;

  // Beat-paced duration for `bytes` striped over `bundles`, ignoring
  // conflicts. Exposed so tests can cross-check service().
  double transfer_time(AccessPath path, const std::vector<BundleId>& bundles,
                       std::uint64_t bytes) const;

  const DeviceConfig& device() const { return device_; }
  const std::vector<AccessTraceRow>& trace() const { return trace_; }
  void set_keep_trace(bool keep) { keep_trace_ = keep; }
  std::string trace_csv() const;

  std::uint64_t bundle_count() const;
  std::vector<BundleId> all_bundles() const;

 private:
  std::size_t index_of(const BundleId& b) const;  // throws on unknown bundle

  DeviceConfig device_;
  std::vector<double> busy_until_;
  std::vector<double> busy_total_;
  bool keep_trace_ = false;
  std::vector<AccessTraceRow> trace_;
};

// Even byte split across bundles, remainder to the lowest indices.
std::vector<std::uint64_t> stripe(std::uint64_t bytes, std::size_t n_bundles);

}  // namespace duplexsim
