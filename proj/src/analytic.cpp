#include "fpsearch/analytic.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>

namespace fpsearch::analytic {

namespace {

constexpr double kHalfPi = std::numbers::pi / 2.0;
constexpr double kInf = std::numeric_limits<double>::infinity();

// Stop angles closer than this to theta are treated as the X = theta limit.
constexpr double kLimitTolerance = 1e-9;

constexpr double kQuadratureTolerance = 1e-9;
constexpr int kQuadratureMaxDepth = 50;

double clamp_unit(double v) { return std::clamp(v, 0.0, 1.0); }

double simpson(double fa, double fm, double fb, double h) {
  return h / 6.0 * (fa + 4.0 * fm + fb);
}

double adaptive_simpson_step(const std::function<double(double)>& f, double a, double b,
                             double fa, double fm, double fb, double whole, double tol,
                             int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = simpson(fa, flm, fm, m - a);
  const double right = simpson(fm, frm, fb, b - m);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) {
    return left + right + delta / 15.0;
  }
  return adaptive_simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol) {
  const double fa = f(a);
  const double fb = f(b);
  const double fm = f(0.5 * (a + b));
  // Split once up front so a symmetric integrand cannot fool the first estimate.
  const double m = 0.5 * (a + b);
  const double fl = f(0.5 * (a + m));
  const double fr = f(0.5 * (m + b));
  const double left = simpson(fa, fl, fm, m - a);
  const double right = simpson(fm, fr, fb, b - m);
  return adaptive_simpson_step(f, a, m, fa, fl, fm, left, 0.5 * tol, kQuadratureMaxDepth) +
         adaptive_simpson_step(f, m, b, fm, fr, fb, right, 0.5 * tol, kQuadratureMaxDepth);
}

void check_eta(double eta) {
  if (!(eta > 0.0) || eta > 1.0 / 3.0 + 1e-15) {
    throw std::invalid_argument("reduction factor eta must lie in (0, 1/3]");
  }
}

double limit_ratio(const TargetFraction& p) {
  return p.p() < 1.0 ? p.p() / (1.0 - p.p()) : kInf;
}

}  // namespace

TargetFraction::TargetFraction(double p) : p_(p) {
  if (!(p > 0.0) || p > 1.0) {
    throw std::invalid_argument("target fraction must lie in (0, 1]");
  }
  theta_ = std::asin(std::sqrt(p));
}

TargetFraction TargetFraction::from_counts(std::uint64_t m, std::uint64_t n) {
  if (m < 1 || m > n) {
    throw std::invalid_argument("target count must satisfy 1 <= m <= N");
  }
  return TargetFraction(static_cast<double>(m) / static_cast<double>(n));
}

StopAngle StopAngle::from_probability(double g) {
  if (!(g >= 0.0) || g > 1.0) {
    throw std::invalid_argument("stop probability must lie in [0, 1]");
  }
  return StopAngle{std::asin(std::sqrt(g))};
}

double StopAngle::probability() const {
  const double s = std::sin(x);
  return clamp_unit(s * s);
}

double success_probability(const TargetFraction& p, std::uint64_t r) {
  if (r == 0) return p.p();
  const double s = std::sin((2.0 * static_cast<double>(r) + 1.0) * p.theta());
  return clamp_unit(s * s);
}

ExpectedCounts expected_counts(const TargetFraction& p, std::uint64_t horizon, double eta) {
  check_eta(eta);
  const double bias = 0.5 * (1.0 - eta);
  ExpectedCounts out{0.0, 0.0};
  for (std::uint64_t r = 0; r <= horizon; ++r) {
    const double g = success_probability(p, r);
    out.c0 += eta * (1.0 - g) + bias;
    out.c1 += eta * g + bias;
  }
  return out;
}

double expected_ratio_discrete(const TargetFraction& p, std::uint64_t horizon) {
  double hit = 0.0;
  double miss = 0.0;
  for (std::uint64_t r = 0; r <= horizon; ++r) {
    const double g = success_probability(p, r);
    hit += g;
    miss += 1.0 - g;
  }
  return miss > 0.0 ? hit / miss : kInf;
}

std::vector<RatioPoint> ratio_curve(const TargetFraction& p, std::uint64_t max_horizon) {
  std::vector<RatioPoint> curve;
  curve.reserve(max_horizon + 1);
  double hit = 0.0;
  double miss = 0.0;
  for (std::uint64_t r = 0; r <= max_horizon; ++r) {
    const double g = success_probability(p, r);
    hit += g;
    miss += 1.0 - g;
    curve.push_back({r, g, miss > 0.0 ? hit / miss : kInf});
  }
  return curve;
}

double expected_ratio_quadrature(const TargetFraction& p, double g_target) {
  if (!(g_target <= 1.0) || g_target < p.p()) {
    throw std::invalid_argument("g_target must lie in [p, 1]");
  }
  const double theta = p.theta();
  const double x = std::asin(std::sqrt(g_target));
  const double horizon = 0.5 * (x / theta - 1.0);
  if (horizon <= 0.0) return limit_ratio(p);

  // Integrate over t = r / horizon in [0, 1]; the common factor cancels.
  auto g_of_t = [&](double t) {
    const double s = std::sin((2.0 * t * horizon + 1.0) * theta);
    return s * s;
  };
  auto miss_of_t = [&](double t) { return 1.0 - g_of_t(t); };
  const double hit = adaptive_simpson(g_of_t, 0.0, 1.0, kQuadratureTolerance);
  const double miss = adaptive_simpson(miss_of_t, 0.0, 1.0, kQuadratureTolerance);
  return miss > 0.0 ? hit / miss : kInf;
}

double detail::x_minus_sin(double d) {
  if (std::abs(d) < 1e-2) {
    const double d2 = d * d;
    // d^3/3! - d^5/5! + d^7/7! - d^9/9!
    return d * d2 / 6.0 * (1.0 - d2 / 20.0 * (1.0 - d2 / 42.0 * (1.0 - d2 / 72.0)));
  }
  return d - std::sin(d);
}

double expected_ratio_closed(const TargetFraction& p, StopAngle stop) {
  const double theta = p.theta();
  const double d = stop.x - theta;
  if (d < -kLimitTolerance || stop.x > kHalfPi + 1e-12) {
    throw std::invalid_argument("stop angle must lie in [theta, pi/2]");
  }
  if (std::abs(d) < kLimitTolerance) return limit_ratio(p);

  // With s = X + theta:
  //   2X - sin2X - (2t - sin2t) = 2[(d - sin d) + 2 sin^2(s/2) sin d]
  //   2X + sin2X - (2t + sin2t) = 2[(d - sin d) + 2 cos^2(s/2) sin d]
  // Every term is nonnegative on the admissible range.
  const double half_s = 0.5 * (stop.x + theta);
  const double sh = std::sin(half_s);
  const double ch = std::cos(half_s);
  const double sd = std::sin(d);
  const double base = detail::x_minus_sin(d);
  const double num = base + 2.0 * sh * sh * sd;
  const double den = base + 2.0 * ch * ch * sd;
  return den > 0.0 ? num / den : kInf;
}

double expected_ratio_arcsin_form(const TargetFraction& p, double g_target) {
  const double asg = std::asin(std::sqrt(g_target));
  const double asp = std::asin(std::sqrt(p.p()));
  const double lin = 2.0 * (asg - asp);
  const double osc = std::sin(2.0 * asg) - std::sin(2.0 * asp);
  return (lin - osc) / (lin + osc);
}

double solve_stop_probability(const TargetFraction& p, double ratio) {
  if (p.p() >= 1.0) {
    throw UnsatisfiableError("P = 1 has no rising branch to stop on");
  }
  const double lo_ratio = limit_ratio(p);
  const double hi_ratio = expected_ratio_closed(p, StopAngle{kHalfPi});
  constexpr double kRatioTolerance = 1e-10;
  if (!(ratio >= lo_ratio - kRatioTolerance) || ratio > hi_ratio + kRatioTolerance) {
    std::ostringstream msg;
    msg.precision(12);
    msg << "ratio " << ratio << " is outside the reachable range [" << lo_ratio << ", "
        << hi_ratio << "] for P = " << p.p();
    throw UnsatisfiableError(msg.str());
  }

  double lo = p.theta();
  double hi = kHalfPi;
  for (int i = 0; i < 200 && hi - lo > 0.0; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (expected_ratio_closed(p, StopAngle{mid}) < ratio) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double lo_err = std::abs(expected_ratio_closed(p, StopAngle{lo}) - ratio);
  const double hi_err = std::abs(expected_ratio_closed(p, StopAngle{hi}) - ratio);
  const StopAngle best{lo_err <= hi_err ? lo : hi};
  if (std::min(lo_err, hi_err) > kRatioTolerance) {
    throw UnsatisfiableError("bisection did not converge to the requested ratio");
  }
  return best.probability();
}

std::vector<Table1Cell> table1() {
  struct Row {
    const char* label;
    double p;
    double printed[3];
  };
  static constexpr Row kRows[] = {
      {"I", kLargeDatabaseFraction, {0.23, 0.42, 1.00}},
      {"II", 0.25, {0.60, 1.00, 2.41}},
      {"III", 0.5, {1.00, 1.69, 4.50}},
  };
  static constexpr double kTargets[] = {0.5, 0.75, 1.0};

  std::vector<Table1Cell> cells;
  cells.reserve(9);
  for (const auto& row : kRows) {
    const TargetFraction p(row.p);
    for (int j = 0; j < 3; ++j) {
      const double g = kTargets[j];
      cells.push_back({row.label, row.p, g,
                       expected_ratio_closed(p, StopAngle::from_probability(g)),
                       row.printed[j]});
    }
  }
  return cells;
}

std::uint64_t default_expected_stop_cap(const TargetFraction& p) {
  return static_cast<std::uint64_t>(10.0 * std::sqrt(1.0 / p.p())) + 100;
}

ExpectedStop stop_iteration_expected(const TargetFraction& p, double set_val,
                                     std::optional<std::uint64_t> cap) {
  if (!(set_val > 0.0)) {
    throw std::invalid_argument("set_val must be positive");
  }
  const std::uint64_t limit = cap.value_or(default_expected_stop_cap(p));
  double hit = 0.0;
  double miss = 0.0;
  for (std::uint64_t r = 0; r <= limit; ++r) {
    const double g = success_probability(p, r);
    hit += g;
    miss += 1.0 - g;
    const double ratio = miss > 0.0 ? hit / miss : kInf;
    if (ratio >= set_val) return {r, g, ratio};
  }
  std::ostringstream msg;
  msg << "threshold unreachable in expectation: set_val " << set_val << " not reached within "
      << limit << " rotations for P = " << p.p();
  throw ThresholdUnreachable(msg.str());
}

}  // namespace fpsearch::analytic
