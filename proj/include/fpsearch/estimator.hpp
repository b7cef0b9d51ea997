#pragma once

// Classical ancilla counters, removal of the cloner's isotropic bias, and
// the Set_Val threshold rule.

#include <cstdint>

namespace fpsearch::estimator {

struct CounterState {
  std::uint64_t c0 = 0;
  std::uint64_t c1 = 0;

  std::uint64_t k() const { return c0 + c1; }
};

/// Increments c0 or c1; bit must be 0 or 1.
CounterState record(CounterState counter, int bit);

enum class RatioKind { kFinite, kPositiveInfinite, kIndeterminate };

struct CorrectedRatio {
  RatioKind kind = RatioKind::kIndeterminate;
  double value = 0.0;  // meaningful only for kFinite

  static CorrectedRatio finite(double v) { return {RatioKind::kFinite, v}; }
  static CorrectedRatio positive_infinite() { return {RatioKind::kPositiveInfinite, 0.0}; }
  static CorrectedRatio indeterminate() { return {RatioKind::kIndeterminate, 0.0}; }

  bool operator==(const CorrectedRatio&) const = default;
};

struct CorrectedCounts {
  double c0;
  double c1;
};

/// (c1 - b) / (c0 - b) with bias b = k (1 - eta) / 2.
///  - denominator > 0: finite value (negative when c1 < b)
///  - denominator <= 0, numerator > 0: positive infinite
///  - both <= 0: indeterminate
/// Throws std::invalid_argument on k = 0.
CorrectedRatio corrected_ratio(const CounterState& counter, double eta);

/// Same rule on real-valued counters (expected increments); k = c0 + c1.
CorrectedRatio corrected_ratio(double c0, double c1, double eta);

/// (raw - b) / eta for each counter; the two sum to k.
CorrectedCounts corrected_counts(const CounterState& counter, double eta);

/// False while k < burn_in; then fires on +inf or value >= set_val.
bool should_stop(const CorrectedRatio& ratio, double set_val, std::uint64_t k,
                 std::uint64_t burn_in);

}  // namespace fpsearch::estimator
