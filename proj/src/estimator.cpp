#include "fpsearch/estimator.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace fpsearch::estimator {

namespace {

void check_eta(double eta) {
  if (!(eta > 0.0) || eta > 1.0 / 3.0 + 1e-15) {
    throw std::invalid_argument("reduction factor eta must lie in (0, 1/3]");
  }
}

// The bias k(1 - eta)/2 is rarely representable; residues at the rounding
// level of k are snapped to an exact zero so that integer counts sitting
// exactly on the bias classify deterministically.
double snap(double v, double k) {
  return std::abs(v) <= 64.0 * std::numeric_limits<double>::epsilon() * k ? 0.0 : v;
}

}  // namespace

CounterState record(CounterState counter, int bit) {
  if (bit == 0) {
    ++counter.c0;
  } else if (bit == 1) {
    ++counter.c1;
  } else {
    throw std::invalid_argument("ancilla outcome must be 0 or 1");
  }
  return counter;
}

CorrectedRatio corrected_ratio(double c0, double c1, double eta) {
  check_eta(eta);
  const double k = c0 + c1;
  if (!(k > 0.0)) throw std::invalid_argument("no samples");
  const double bias = 0.5 * k * (1.0 - eta);
  const double num = snap(c1 - bias, k);
  const double den = snap(c0 - bias, k);
  if (den > 0.0) {
    return CorrectedRatio::finite(num / den);
  }
  return num > 0.0 ? CorrectedRatio::positive_infinite() : CorrectedRatio::indeterminate();
}

CorrectedRatio corrected_ratio(const CounterState& counter, double eta) {
  if (counter.k() == 0) throw std::invalid_argument("no samples");
  return corrected_ratio(static_cast<double>(counter.c0), static_cast<double>(counter.c1), eta);
}

CorrectedCounts corrected_counts(const CounterState& counter, double eta) {
  check_eta(eta);
  if (counter.k() == 0) throw std::invalid_argument("no samples");
  const double k = static_cast<double>(counter.k());
  const double bias = 0.5 * k * (1.0 - eta);
  return {(static_cast<double>(counter.c0) - bias) / eta,
          (static_cast<double>(counter.c1) - bias) / eta};
}

bool should_stop(const CorrectedRatio& ratio, double set_val, std::uint64_t k,
                 std::uint64_t burn_in) {
  if (!(set_val > 0.0)) throw std::invalid_argument("set_val must be positive");
  if (k < burn_in) return false;
  switch (ratio.kind) {
    case RatioKind::kPositiveInfinite:
      return true;
    case RatioKind::kFinite:
      return ratio.value >= set_val;
    case RatioKind::kIndeterminate:
      return false;
  }
  return false;
}

}  // namespace fpsearch::estimator
