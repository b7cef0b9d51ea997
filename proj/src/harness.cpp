#include "fpsearch/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>

#include <boost/math/special_functions/gamma.hpp>

#include "fpsearch/estimator.hpp"

namespace fpsearch::harness {

namespace {

std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

unsigned resolve_workers(unsigned requested) {
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

template <class Fn>
void parallel_for(std::uint64_t count, unsigned workers, Fn&& fn) {
  workers = static_cast<unsigned>(std::min<std::uint64_t>(workers, std::max<std::uint64_t>(count, 1)));
  if (workers <= 1) {
    for (std::uint64_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::uint64_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      try {
        for (std::uint64_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(count);
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

double median_of(std::vector<double> values) {
  if (values.empty()) return 0.0;
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + mid);
  return 0.5 * (lower + upper);
}

}  // namespace

Interval wilson_interval(std::uint64_t successes, std::uint64_t n, double z) {
  if (n == 0) return {0.0, 1.0};
  if (successes > n) throw std::invalid_argument("successes exceed trials");
  const double nn = static_cast<double>(n);
  const double phat = static_cast<double>(successes) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double centre = (phat + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(phat * (1.0 - phat) / nn + z2 / (4.0 * nn * nn)) / denom;
  return {std::clamp(std::min(centre - half, phat), 0.0, 1.0),
          std::clamp(std::max(centre + half, phat), 0.0, 1.0)};
}

ChiSquareResult chi_square_gof(std::span<const std::uint64_t> observed,
                               std::span<const double> probabilities, double min_expected) {
  if (observed.size() != probabilities.size()) {
    throw std::invalid_argument("observed and probability vectors differ in length");
  }
  double total = 0.0;
  for (auto o : observed) total += static_cast<double>(o);

  std::vector<double> obs_bins;
  std::vector<double> exp_bins;
  double obs_acc = 0.0;
  double exp_acc = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    obs_acc += static_cast<double>(observed[i]);
    exp_acc += probabilities[i] * total;
    if (exp_acc >= min_expected) {
      obs_bins.push_back(obs_acc);
      exp_bins.push_back(exp_acc);
      obs_acc = exp_acc = 0.0;
    }
  }
  if (obs_acc > 0.0 || exp_acc > 0.0) {
    if (obs_bins.empty()) {
      obs_bins.push_back(obs_acc);
      exp_bins.push_back(exp_acc);
    } else {
      obs_bins.back() += obs_acc;
      exp_bins.back() += exp_acc;
    }
  }

  ChiSquareResult out;
  out.bins_used = static_cast<int>(obs_bins.size());
  for (std::size_t i = 0; i < obs_bins.size(); ++i) {
    if (exp_bins[i] > 0.0) {
      const double d = obs_bins[i] - exp_bins[i];
      out.statistic += d * d / exp_bins[i];
    } else if (obs_bins[i] > 0.0) {
      out.statistic = std::numeric_limits<double>::infinity();
    }
  }
  out.dof = std::max(0, out.bins_used - 1);
  if (out.dof == 0) {
    out.p_value = 1.0;
  } else if (std::isinf(out.statistic)) {
    out.p_value = 0.0;
  } else {
    out.p_value = boost::math::gamma_q(0.5 * out.dof, 0.5 * out.statistic);
  }
  return out;
}

std::vector<search::SearchOutcome> run_trials(const search::ProblemInstance& problem,
                                              const search::AlgorithmConfig& config,
                                              const MonteCarloOptions& options) {
  if (options.trials < 1) throw std::invalid_argument("trials must be at least 1");
  config.validate();
  std::vector<search::SearchOutcome> outcomes(options.trials);
  parallel_for(options.trials, resolve_workers(options.workers), [&](std::uint64_t i) {
    CounterRng rng(options.seed, i);
    outcomes[i] = options.algorithm == Algorithm::kProposed
                      ? search::run_proposed(problem, config, rng)
                      : search::run_canonical(problem, config, rng);
  });
  return outcomes;
}

TrialStats summarize(const search::ProblemInstance& problem,
                     std::span<const search::SearchOutcome> outcomes) {
  if (outcomes.empty()) throw std::invalid_argument("no trials to summarize");
  TrialStats stats;
  stats.trials = outcomes.size();
  std::vector<double> queries;
  queries.reserve(outcomes.size());
  double query_sum = 0.0;
  double restart_sum = 0.0;
  double g_stop_sum = 0.0;
  double g_measured_sum = 0.0;
  for (const auto& out : outcomes) {
    if (out.found) {
      ++stats.successes;
      if (!problem.targets().contains(out.measured_index)) {
        throw std::logic_error("found outcome with an unmarked measured index");
      }
    }
    if (out.restarts_exhausted) ++stats.restarts_exhausted;
    const auto q = static_cast<double>(out.oracle_queries_total);
    queries.push_back(q);
    query_sum += q;
    restart_sum += static_cast<double>(out.restarts);
    for (const auto& a : out.attempts) {
      ++stats.attempts;
      if (a.success) ++stats.attempt_successes;
      g_stop_sum += a.g_at_stop;
      g_measured_sum += a.g_measured;
      if (a.forced) {
        ++stats.forced_measurements;
      } else {
        ++stats.stop_histogram[a.stop_horizon];
      }
    }
  }
  const double n = static_cast<double>(stats.trials);
  const double attempts = static_cast<double>(stats.attempts);
  stats.success_rate = static_cast<double>(stats.successes) / n;
  stats.success_ci = wilson_interval(stats.successes, stats.trials);
  stats.per_attempt_success_rate = static_cast<double>(stats.attempt_successes) / attempts;
  stats.per_attempt_ci = wilson_interval(stats.attempt_successes, stats.attempts);
  stats.mean_queries = query_sum / n;
  stats.median_queries = median_of(std::move(queries));
  stats.mean_restarts = restart_sum / n;
  stats.mean_g_at_stop = g_stop_sum / attempts;
  stats.mean_g_measured = g_measured_sum / attempts;
  return stats;
}

TrialStats monte_carlo(const search::ProblemInstance& problem,
                       const search::AlgorithmConfig& config, const MonteCarloOptions& options) {
  const auto outcomes = run_trials(problem, config, options);
  return summarize(problem, outcomes);
}

double StopTimeDistribution::stopped_mass() const {
  double total = 0.0;
  for (double v : prob_stop) total += v;
  return total;
}

double StopTimeDistribution::per_attempt_success() const {
  double total = 0.0;
  for (std::size_t r = 0; r < prob_stop.size(); ++r) total += prob_stop[r] * g_at_stop[r];
  return total + truncated_mass * truncated_g;
}

StopTimeDistribution exact_stop_distribution(const analytic::TargetFraction& p,
                                             const search::AlgorithmConfig& config,
                                             std::uint64_t horizon) {
  config.validate();
  if (horizon == 0 || horizon > kMaxOracleHorizon) {
    throw std::invalid_argument("oracle horizon must lie in 1..10000");
  }
  const engine::CloneChannel channel(config.eta);

  StopTimeDistribution dist;
  dist.horizon = horizon;
  dist.prob_stop.assign(horizon, 0.0);
  dist.g_at_stop.assign(horizon, 0.0);

  // running[c1]: probability of having c1 ones after k samples without stopping.
  std::vector<double> running(horizon + 1, 0.0);
  running[0] = 1.0;
  for (std::uint64_t k = 1; k <= horizon; ++k) {
    const double g = analytic::success_probability(p, k - 1);
    const double p1 = engine::ancilla_distribution(g, channel);
    for (std::uint64_t c1 = k; c1 >= 1; --c1) {
      running[c1] = running[c1] * (1.0 - p1) + running[c1 - 1] * p1;
    }
    running[0] *= 1.0 - p1;

    double stopped = 0.0;
    for (std::uint64_t c1 = 0; c1 <= k; ++c1) {
      if (running[c1] == 0.0) continue;
      const estimator::CounterState counter{k - c1, c1};
      const auto ratio = estimator::corrected_ratio(counter, channel.eta());
      if (estimator::should_stop(ratio, config.set_val, k, config.burn_in)) {
        stopped += running[c1];
        running[c1] = 0.0;
      }
    }
    dist.prob_stop[k - 1] = stopped;
    dist.g_at_stop[k - 1] = config.order == search::MeasureOrder::kLastSample
                                ? g
                                : analytic::success_probability(p, k);
  }
  for (double v : running) dist.truncated_mass += v;
  dist.truncated_g = analytic::success_probability(p, horizon);
  return dist;
}

StopTimeDistribution exact_attempt_distribution(const search::ProblemInstance& problem,
                                                const search::AlgorithmConfig& config) {
  return exact_stop_distribution(problem.fraction(), config, config.iteration_cap(problem));
}

std::vector<SweepRow> sweep(std::span<const search::ProblemInstance> problems,
                            const search::AlgorithmConfig& config,
                            const MonteCarloOptions& options) {
  std::vector<SweepRow> rows;
  rows.reserve(problems.size());
  for (std::size_t j = 0; j < problems.size(); ++j) {
    const auto& problem = problems[j];
    MonteCarloOptions row_options = options;
    row_options.seed = mix64(options.seed ^ mix64(j));
    SweepRow row;
    row.p = problem.p();
    row.n = problem.n();
    row.m = problem.m();
    row.stats = monte_carlo(problem, config, row_options);
    row.expectation = search::deterministic_expectation_run(problem, config);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<double> default_probability_grid() {
  return {std::ldexp(1.0, -20), std::ldexp(1.0, -16), std::ldexp(1.0, -12),
          std::ldexp(1.0, -8),  std::ldexp(1.0, -4),  0.1,
          0.25,                 0.4,                  0.5};
}

std::vector<double> geometric_grid(double p_min, double p_max, int points) {
  if (points < 1 || !(p_min > 0.0) || p_max < p_min || p_max > 1.0) {
    throw std::invalid_argument("invalid geometric grid");
  }
  std::vector<double> grid;
  grid.reserve(static_cast<std::size_t>(points));
  if (points == 1) return {p_min};
  const double step = std::log(p_max / p_min) / (points - 1);
  for (int i = 0; i < points; ++i) {
    grid.push_back(i == points - 1 ? p_max : p_min * std::exp(step * i));
  }
  return grid;
}

std::vector<ScalingPoint> scaling_points(int exp_min, int exp_max,
                                         const search::AlgorithmConfig& config) {
  if (exp_min < 1 || exp_max > 62 || exp_max < exp_min) {
    throw std::invalid_argument("scaling exponents must satisfy 1 <= min <= max <= 62");
  }
  std::vector<ScalingPoint> points;
  for (int e = exp_min; e <= exp_max; ++e) {
    const std::uint64_t n = std::uint64_t{1} << e;
    const auto problem = search::ProblemInstance::from_counts(1, n);
    const auto run = search::deterministic_expectation_run(problem, config);
    ScalingPoint pt;
    pt.n = n;
    pt.r_stop = run.r_stop;
    pt.queries_proposed = static_cast<double>(run.oracle_queries());
    pt.queries_canonical = static_cast<double>(search::canonical_rotations(problem.fraction()));
    pt.ratio = pt.queries_proposed / pt.queries_canonical;
    points.push_back(pt);
  }
  return points;
}

ScalingFit scaling_fit(std::span<const ScalingPoint> points) {
  if (points.size() < 4) throw std::invalid_argument("degenerate grid: need at least 4 points");
  double n_min = points.front().n;
  double n_max = points.front().n;
  for (const auto& pt : points) {
    n_min = std::min(n_min, static_cast<double>(pt.n));
    n_max = std::max(n_max, static_cast<double>(pt.n));
    if (!(pt.queries_proposed > 0.0)) {
      throw std::invalid_argument("degenerate grid: nonpositive query count");
    }
  }
  if (std::log2(n_max / n_min) < 3.0) {
    throw std::invalid_argument("degenerate grid: must span at least 3 octaves");
  }

  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (const auto& pt : points) {
    const double x = std::log(static_cast<double>(pt.n));
    const double y = std::log(pt.queries_proposed);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double k = static_cast<double>(points.size());
  ScalingFit fit;
  fit.slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
  fit.intercept = (sy - fit.slope * sx) / k;
  const auto largest = std::max_element(points.begin(), points.end(),
                                        [](const auto& a, const auto& b) { return a.n < b.n; });
  fit.limiting_ratio = largest->ratio;
  return fit;
}

}  // namespace fpsearch::harness
