#pragma once

// Closed-form mathematics of the ratio-threshold fixed-point search: Grover
// success probability, expected ancilla counters, the expected corrected
// ratio (discrete sum, quadrature and closed form) and its inverse.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fpsearch {

/// Raised when an inverse problem has no solution in the admissible range.
class UnsatisfiableError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised when the expected ratio never reaches the threshold within the cap.
class ThresholdUnreachable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace analytic {

/// Fraction of marked entries P = m/N together with its Grover angle
/// theta = arcsin(sqrt(P)) in (0, pi/2].
class TargetFraction {
 public:
  explicit TargetFraction(double p);

  /// Requires 1 <= m <= n.
  static TargetFraction from_counts(std::uint64_t m, std::uint64_t n);

  double p() const { return p_; }
  double theta() const { return theta_; }

 private:
  double p_;
  double theta_;
};

/// Angle X = arcsin(sqrt(g)) of a target stop probability g.
struct StopAngle {
  double x;

  static StopAngle from_probability(double g);
  double probability() const;
};

struct RatioPoint {
  std::uint64_t r;
  double g;
  double cumulative_ratio;  // +inf when the cumulative miss mass is zero
};

struct ExpectedCounts {
  double c0;
  double c1;
};

/// g_r(P) = sin^2((2r+1) theta). Returns p exactly at r = 0.
double success_probability(const TargetFraction& p, std::uint64_t r);

/// Expected raw ancilla counters after horizon + 1 samples taken at
/// rotation counts 0..horizon, for a cloner of reduction factor eta.
ExpectedCounts expected_counts(const TargetFraction& p, std::uint64_t horizon, double eta);

/// sum g_r / sum (1 - g_r) over r = 0..horizon.
double expected_ratio_discrete(const TargetFraction& p, std::uint64_t horizon);

/// Every horizon 0..max_horizon of the discrete ratio, in one pass.
std::vector<RatioPoint> ratio_curve(const TargetFraction& p, std::uint64_t max_horizon);

/// Ratio of the integrals of g_r and 1 - g_r over the real rotation count
/// r in [0, R], where R is the point on the first rising branch at which
/// g_r reaches g_target. Evaluated by adaptive Simpson quadrature.
double expected_ratio_quadrature(const TargetFraction& p, double g_target);

/// Closed form of the integral ratio in terms of the stop angle:
///   (2X - sin2X - (2t - sin2t)) / (2X + sin2X - (2t + sin2t)),  t = theta.
/// Evaluated in a cancellation-free rearrangement; returns tan^2(theta)
/// when X is within 1e-9 of theta.
double expected_ratio_closed(const TargetFraction& p, StopAngle stop);

/// The same closed form written with explicit arcsines of g and P and
/// evaluated term by term, without any rearrangement.
double expected_ratio_arcsin_form(const TargetFraction& p, double g_target);

/// Inverts expected_ratio_closed over X in [theta, pi/2] by bisection and
/// returns g = sin^2(X). Throws UnsatisfiableError when ratio is outside
/// [tan^2(theta), expected_ratio_closed(p, pi/2)].
double solve_stop_probability(const TargetFraction& p, double ratio);

struct Table1Cell {
  std::string case_label;
  double p;
  double g_target;
  double ratio_closed;
  double ratio_paper;
};

/// Probability used for the "single target in a large database" row.
inline constexpr double kLargeDatabaseFraction = 1.0 / 1048576.0;  // 2^-20

/// Nine cells, row-major over cases I, II, III and g in {0.5, 0.75, 1.0}.
std::vector<Table1Cell> table1();

struct ExpectedStop {
  std::uint64_t r_stop;
  double g_at_stop;
  double ratio;
};

/// 10 * sqrt(1/p) + 100.
std::uint64_t default_expected_stop_cap(const TargetFraction& p);

/// First horizon at which expected_ratio_discrete reaches set_val.
/// Throws ThresholdUnreachable when it does not within cap horizons.
ExpectedStop stop_iteration_expected(const TargetFraction& p, double set_val,
                                     std::optional<std::uint64_t> cap = std::nullopt);

namespace detail {

/// d - sin(d), accurate for small d.
double x_minus_sin(double d);

}  // namespace detail

}  // namespace analytic
}  // namespace fpsearch
