#pragma once

// Seeded Monte-Carlo experiments, the exact stop-time oracle, sweeps,
// complexity fits and the statistics they report.

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "fpsearch/search.hpp"

namespace fpsearch::harness {

// ---------------------------------------------------------------------------
// Statistics

struct Interval {
  double lo;
  double hi;
};

/// Wilson score interval; z defaults to the two-sided 95% quantile.
Interval wilson_interval(std::uint64_t successes, std::uint64_t n, double z = 1.959963984540054);

struct ChiSquareResult {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
  int bins_used = 0;
};

/// Pearson goodness of fit of observed counts against cell probabilities.
/// Adjacent cells with expected count below min_expected are pooled.
ChiSquareResult chi_square_gof(std::span<const std::uint64_t> observed,
                               std::span<const double> probabilities,
                               double min_expected = 5.0);

// ---------------------------------------------------------------------------
// Monte Carlo

enum class Algorithm { kProposed, kCanonical };

struct MonteCarloOptions {
  std::uint64_t trials = 1000;
  std::uint64_t seed = 0;
  /// 0 picks std::thread::hardware_concurrency().
  unsigned workers = 0;
  Algorithm algorithm = Algorithm::kProposed;
};

struct TrialStats {
  std::uint64_t trials = 0;
  std::uint64_t successes = 0;
  double success_rate = 0.0;
  Interval success_ci{0.0, 0.0};

  std::uint64_t attempts = 0;
  std::uint64_t attempt_successes = 0;
  double per_attempt_success_rate = 0.0;
  Interval per_attempt_ci{0.0, 0.0};

  double mean_queries = 0.0;
  double median_queries = 0.0;
  double mean_restarts = 0.0;
  double mean_g_at_stop = 0.0;
  double mean_g_measured = 0.0;

  std::uint64_t forced_measurements = 0;
  std::uint64_t restarts_exhausted = 0;
  /// Stop horizon -> number of attempts that stopped there (forced excluded).
  std::map<std::uint64_t, std::uint64_t> stop_histogram;
};

/// Runs every trial; trial i draws from CounterRng(seed, i) and lands in
/// slot i regardless of which worker ran it.
std::vector<search::SearchOutcome> run_trials(const search::ProblemInstance& problem,
                                              const search::AlgorithmConfig& config,
                                              const MonteCarloOptions& options);

/// Order-fixed aggregation of trial outcomes.
TrialStats summarize(const search::ProblemInstance& problem,
                     std::span<const search::SearchOutcome> outcomes);

/// summarize(run_trials(...)): bit-identical for any worker count.
TrialStats monte_carlo(const search::ProblemInstance& problem,
                       const search::AlgorithmConfig& config, const MonteCarloOptions& options);

// ---------------------------------------------------------------------------
// Exact oracle

struct StopTimeDistribution {
  std::uint64_t horizon = 0;
  /// prob_stop[r]: probability the rule first fires on the sample taken at
  /// rotation count r.
  std::vector<double> prob_stop;
  /// Success probability of the state measured after a stop at r.
  std::vector<double> g_at_stop;
  /// Mass still running after `horizon` samples.
  double truncated_mass = 0.0;
  /// Success probability of the forced measurement after `horizon` samples.
  double truncated_g = 0.0;

  double stopped_mass() const;
  /// Exact per-attempt success: sum_r prob_stop[r] g_at_stop[r] plus the
  /// forced-measurement contribution of the truncated mass.
  double per_attempt_success() const;
};

inline constexpr std::uint64_t kMaxOracleHorizon = 10000;

/// Dynamic program over (samples k, ones c1) for the idealized dynamics:
/// the k-th ancilla reads 1 with probability eta g_{k-1} + (1 - eta)/2 and
/// the stop rule is applied to (k - c1, c1) after every sample. Throws
/// std::invalid_argument when horizon exceeds kMaxOracleHorizon or is 0.
StopTimeDistribution exact_stop_distribution(const analytic::TargetFraction& p,
                                             const search::AlgorithmConfig& config,
                                             std::uint64_t horizon);

/// Exact distribution with the horizon set to the per-attempt iteration cap,
/// i.e. the law of a single attempt of run_proposed in idealized mode.
StopTimeDistribution exact_attempt_distribution(const search::ProblemInstance& problem,
                                                const search::AlgorithmConfig& config);

// ---------------------------------------------------------------------------
// Sweeps and scaling

struct SweepRow {
  double p = 0.0;
  std::uint64_t n = 0;
  std::uint64_t m = 0;
  TrialStats stats;
  search::ExpectationRun expectation;
};

/// One row per problem in input order; row j keys its trial streams with a
/// hash of (seed, j).
std::vector<SweepRow> sweep(std::span<const search::ProblemInstance> problems,
                            const search::AlgorithmConfig& config,
                            const MonteCarloOptions& options);

/// {2^-20, 2^-16, 2^-12, 2^-8, 2^-4, 0.1, 0.25, 0.4, 0.5}.
std::vector<double> default_probability_grid();

/// Geometric grid of `points` values from p_min to p_max inclusive.
std::vector<double> geometric_grid(double p_min, double p_max, int points);

struct ScalingPoint {
  std::uint64_t n = 0;
  std::uint64_t r_stop = 0;
  double queries_proposed = 0.0;
  double queries_canonical = 0.0;
  double ratio = 0.0;
};

/// Deterministic-expectation stop point and query counts for m = 1 and
/// N = 2^e for every e in [exp_min, exp_max].
std::vector<ScalingPoint> scaling_points(int exp_min, int exp_max,
                                         const search::AlgorithmConfig& config);

struct ScalingFit {
  double slope = 0.0;
  double intercept = 0.0;
  /// Proposed / canonical queries at the largest N.
  double limiting_ratio = 0.0;
};

/// Least-squares slope of log(queries_proposed) against log(N). Requires at
/// least 4 points spanning at least 3 octaves.
ScalingFit scaling_fit(std::span<const ScalingPoint> points);

}  // namespace fpsearch::harness
