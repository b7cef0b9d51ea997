#include "fpsearch/search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "fpsearch/estimator.hpp"

namespace fpsearch::search {

namespace {

using engine::CloneChannel;
using engine::TargetSet;

// Uniform rank in [0, count) from a uniform double in [0, 1).
std::uint64_t scaled_rank(double u, std::uint64_t count) {
  const auto k = static_cast<std::uint64_t>(u * static_cast<double>(count));
  return std::min(k, count - 1);
}

// Measurement of a register described only by its success probability:
// subspace from the first draw, uniform member of it from the second.
std::uint64_t measure_symmetric(double g, const TargetSet& targets, CounterRng& rng) {
  const double u_subspace = rng.uniform();
  const double u_index = rng.uniform();
  const std::uint64_t m = targets.size();
  const std::uint64_t n = targets.universe();
  if (m == n || u_subspace < g) {
    return targets.nth(scaled_rank(u_index, m));
  }
  return targets.nth_complement(scaled_rank(u_index, n - m));
}

class AngleBackend {
 public:
  explicit AngleBackend(const ProblemInstance& problem)
      : theta0_(problem.fraction().theta()), targets_(problem.targets()) {}

  void reset() { state_ = engine::TwoDimState{theta0_}; }
  double success() const { return state_.success_probability(); }
  void after_sample() {}
  void rotate() { state_ = engine::grover_step_2d(state_, theta0_); }
  std::uint64_t measure(CounterRng& rng) const { return measure_symmetric(success(), targets_, rng); }

 private:
  double theta0_;
  const TargetSet& targets_;
  engine::TwoDimState state_{};
};

class StatevectorBackend {
 public:
  explicit StatevectorBackend(const ProblemInstance& problem)
      : reg_(require_qubits(problem), problem.targets()) {}

  void reset() { reg_.reset_uniform(); }
  double success() const { return engine::success_prob_full(reg_); }
  void after_sample() {}
  void rotate() { engine::apply_grover_full(reg_); }
  std::uint64_t measure(CounterRng& rng) const { return engine::measure_full(reg_, rng); }

 private:
  static int require_qubits(const ProblemInstance& problem) {
    if (!problem.n_qubits()) {
      throw std::invalid_argument("full statevector mode needs a qubit-defined problem");
    }
    return *problem.n_qubits();
  }

  engine::Register reg_;
};

// Diagnostic, outside the idealized model: the register is dephased after every Of1 + measure
// cycle, which is its exact reduced state once the ancilla is traced out.
class DensityBackend {
 public:
  explicit DensityBackend(const ProblemInstance& problem)
      : theta0_(problem.fraction().theta()), targets_(problem.targets()) {}

  void reset() { rho_ = engine::DensityMatrix2::pure(theta0_); }
  double success() const { return std::clamp(rho_.target_weight(), 0.0, 1.0); }
  void after_sample() { rho_ = engine::dephase_2d(rho_); }
  void rotate() { rho_ = engine::grover_step_density(rho_, theta0_); }
  std::uint64_t measure(CounterRng& rng) const { return measure_symmetric(success(), targets_, rng); }

 private:
  double theta0_;
  const TargetSet& targets_;
  engine::DensityMatrix2 rho_{};
};

template <class Backend>
AttemptRecord run_attempt(Backend& backend, const AlgorithmConfig& config, std::uint64_t cap,
                          const CloneChannel& channel, const TargetSet& targets,
                          CounterRng& rng) {
  backend.reset();
  estimator::CounterState counter;
  AttemptRecord rec;
  bool stopped = false;
  for (std::uint64_t i = 0; i < cap && !stopped; ++i) {
    const double g = backend.success();
    const int bit = engine::sample_ancilla(engine::ancilla_distribution(g, channel), rng);
    counter = estimator::record(counter, bit);
    backend.after_sample();
    ++rec.samples;
    rec.stop_horizon = i;
    rec.g_at_stop = g;

    const auto ratio = estimator::corrected_ratio(counter, channel.eta());
    stopped = estimator::should_stop(ratio, config.set_val, counter.k(), config.burn_in);
    if (!stopped || config.order == MeasureOrder::kAfterRotation) {
      backend.rotate();
      ++rec.rotations;
    }
  }
  rec.forced = !stopped;
  rec.g_measured = backend.success();
  rec.measured_index = backend.measure(rng);
  rec.success = targets.contains(rec.measured_index);
  return rec;
}

template <class Backend>
SearchOutcome run_proposed_with(Backend& backend, const ProblemInstance& problem,
                                const AlgorithmConfig& config, CounterRng& rng) {
  const CloneChannel channel(config.eta);
  const std::uint64_t cap = config.iteration_cap(problem);
  SearchOutcome out;
  while (true) {
    AttemptRecord rec = run_attempt(backend, config, cap, channel, problem.targets(), rng);
    out.grover_iterations_total += rec.rotations;
    out.oracle_queries_total += rec.oracle_queries();
    out.measured_index = rec.measured_index;
    out.attempts.push_back(rec);
    if (rec.success) {
      out.found = true;
      break;
    }
    if (out.restarts >= config.max_restarts) {
      out.restarts_exhausted = true;
      break;
    }
    ++out.restarts;
  }
  return out;
}

template <class Backend>
SearchOutcome run_canonical_with(Backend& backend, const ProblemInstance& problem,
                                 std::uint64_t rotations, std::uint64_t max_restarts,
                                 CounterRng& rng) {
  SearchOutcome out;
  while (true) {
    backend.reset();
    for (std::uint64_t i = 0; i < rotations; ++i) backend.rotate();
    AttemptRecord rec;
    rec.stop_horizon = rotations;
    rec.rotations = rotations;
    rec.g_at_stop = backend.success();
    rec.g_measured = rec.g_at_stop;
    rec.measured_index = backend.measure(rng);
    rec.success = problem.targets().contains(rec.measured_index);
    out.grover_iterations_total += rotations;
    out.oracle_queries_total += rotations;
    out.measured_index = rec.measured_index;
    out.attempts.push_back(rec);
    if (rec.success) {
      out.found = true;
      break;
    }
    if (out.restarts >= max_restarts) {
      out.restarts_exhausted = true;
      break;
    }
    ++out.restarts;
  }
  return out;
}

}  // namespace

std::string_view to_string(EngineMode mode) {
  switch (mode) {
    case EngineMode::kIdealized2d:
      return "ideal";
    case EngineMode::kFullStatevector:
      return "full";
    case EngineMode::kDephasedDensity:
      return "dephased";
  }
  return "?";
}

std::string_view to_string(MeasureOrder order) {
  return order == MeasureOrder::kLastSample ? "last-sample" : "after-rotation";
}

EngineMode parse_engine_mode(std::string_view text) {
  if (text == "ideal" || text == "2d") return EngineMode::kIdealized2d;
  if (text == "full" || text == "statevector") return EngineMode::kFullStatevector;
  if (text == "dephased" || text == "density") return EngineMode::kDephasedDensity;
  throw std::invalid_argument("unknown engine mode: " + std::string(text));
}

MeasureOrder parse_measure_order(std::string_view text) {
  if (text == "last-sample") return MeasureOrder::kLastSample;
  if (text == "after-rotation") return MeasureOrder::kAfterRotation;
  throw std::invalid_argument("unknown measure order: " + std::string(text));
}

ProblemInstance::ProblemInstance(engine::TargetSet targets, std::optional<int> n_qubits)
    : targets_(std::move(targets)),
      n_qubits_(n_qubits),
      fraction_(analytic::TargetFraction::from_counts(targets_.size(), targets_.universe())) {}

ProblemInstance ProblemInstance::from_qubits(int n_qubits, std::vector<std::uint64_t> targets) {
  if (n_qubits < 1 || n_qubits > 62) {
    throw std::invalid_argument("qubit count must lie in 1..62");
  }
  const std::uint64_t universe = std::uint64_t{1} << n_qubits;
  return ProblemInstance(engine::TargetSet::explicit_indices(std::move(targets), universe),
                         n_qubits);
}

ProblemInstance ProblemInstance::from_counts(std::uint64_t m, std::uint64_t n) {
  return ProblemInstance(engine::TargetSet::prefix(m, n), std::nullopt);
}

ProblemInstance ProblemInstance::from_fraction(double p) {
  if (!(p > 0.0) || p > 1.0) {
    throw std::invalid_argument("target fraction must lie in (0, 1]");
  }
  constexpr std::uint64_t kUniverse = std::uint64_t{1} << 62;
  const double scaled = std::round(p * static_cast<double>(kUniverse));
  auto m = static_cast<std::uint64_t>(std::min(scaled, static_cast<double>(kUniverse)));
  m = std::clamp<std::uint64_t>(m, 1, kUniverse);
  return from_counts(m, kUniverse);
}

void AlgorithmConfig::validate() const {
  if (!(set_val > 0.0)) throw std::invalid_argument("set_val must be positive");
  CloneChannel{eta};
  if (max_iterations_per_attempt && *max_iterations_per_attempt == 0) {
    throw std::invalid_argument("max_iterations_per_attempt must be positive");
  }
}

std::uint64_t AlgorithmConfig::iteration_cap(const ProblemInstance& problem) const {
  if (max_iterations_per_attempt) return *max_iterations_per_attempt;
  return static_cast<std::uint64_t>(20.0 * std::sqrt(1.0 / problem.p())) + 200;
}

SearchOutcome run_proposed(const ProblemInstance& problem, const AlgorithmConfig& config,
                           CounterRng& rng) {
  config.validate();
  switch (config.mode) {
    case EngineMode::kIdealized2d: {
      AngleBackend backend(problem);
      return run_proposed_with(backend, problem, config, rng);
    }
    case EngineMode::kFullStatevector: {
      StatevectorBackend backend(problem);
      return run_proposed_with(backend, problem, config, rng);
    }
    case EngineMode::kDephasedDensity: {
      DensityBackend backend(problem);
      return run_proposed_with(backend, problem, config, rng);
    }
  }
  throw std::logic_error("unhandled engine mode");
}

std::uint64_t canonical_rotations(const analytic::TargetFraction& p) {
  return static_cast<std::uint64_t>(std::floor(std::numbers::pi / (4.0 * p.theta())));
}

SearchOutcome run_canonical(const ProblemInstance& problem, const AlgorithmConfig& config,
                            CounterRng& rng, std::optional<std::uint64_t> r_override) {
  const std::uint64_t r = r_override.value_or(canonical_rotations(problem.fraction()));
  switch (config.mode) {
    case EngineMode::kIdealized2d: {
      AngleBackend backend(problem);
      return run_canonical_with(backend, problem, r, config.max_restarts, rng);
    }
    case EngineMode::kFullStatevector: {
      StatevectorBackend backend(problem);
      return run_canonical_with(backend, problem, r, config.max_restarts, rng);
    }
    case EngineMode::kDephasedDensity: {
      DensityBackend backend(problem);
      return run_canonical_with(backend, problem, r, config.max_restarts, rng);
    }
  }
  throw std::logic_error("unhandled engine mode");
}

ExpectationRun deterministic_expectation_run(const ProblemInstance& problem,
                                             const AlgorithmConfig& config) {
  config.validate();
  const auto& p = problem.fraction();
  const CloneChannel channel(config.eta);
  const double eta = channel.eta();
  const double bias = 0.5 * (1.0 - eta);
  const std::uint64_t cap = config.iteration_cap(problem);

  double c0 = 0.0;
  double c1 = 0.0;
  ExpectationRun run;
  for (std::uint64_t i = 0; i < cap; ++i) {
    const double g = analytic::success_probability(p, i);
    c1 += engine::ancilla_distribution(g, channel);
    c0 += eta * (1.0 - g) + bias;  // outcome-0 probability
    const auto ratio = estimator::corrected_ratio(c0, c1, eta);
    run.samples = i + 1;
    run.r_stop = i;
    run.g_at_stop = g;
    run.ratio_at_stop = ratio.kind == estimator::RatioKind::kFinite
                            ? ratio.value
                            : (ratio.kind == estimator::RatioKind::kPositiveInfinite
                                   ? std::numeric_limits<double>::infinity()
                                   : std::numeric_limits<double>::quiet_NaN());
    if (estimator::should_stop(ratio, config.set_val, i + 1, config.burn_in)) {
      run.stopped = true;
      run.rotations = config.order == MeasureOrder::kLastSample ? i : i + 1;
      run.g_measured = analytic::success_probability(p, run.rotations);
      return run;
    }
  }
  run.rotations = cap;
  run.g_measured = analytic::success_probability(p, cap);
  return run;
}

}  // namespace fpsearch::search
