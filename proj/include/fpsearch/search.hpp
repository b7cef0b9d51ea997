#pragma once

// Attempt loops for the ratio-threshold fixed-point search and the
// canonical Grover baseline, with exact oracle-query accounting.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fpsearch/analytic.hpp"
#include "fpsearch/engine.hpp"
#include "fpsearch/rng.hpp"

namespace fpsearch::search {

enum class EngineMode { kIdealized2d, kFullStatevector, kDephasedDensity };

/// Which register state is measured when the stop rule fires.
///  - kLastSample: the state whose ancilla sample completed the ratio, i.e.
///    the rotation count the expected-ratio analysis is indexed by.
///  - kAfterRotation: the listed step order, where G is applied before the
///    threshold check, so the measured state carries one extra rotation.
enum class MeasureOrder { kLastSample, kAfterRotation };

std::string_view to_string(EngineMode mode);
std::string_view to_string(MeasureOrder order);
/// Accepts "ideal"/"2d", "full"/"statevector", "dephased"/"density".
EngineMode parse_engine_mode(std::string_view text);
/// Accepts "last-sample" and "after-rotation".
MeasureOrder parse_measure_order(std::string_view text);

class ProblemInstance {
 public:
  /// n-qubit search space with explicit marked set; usable in every mode.
  static ProblemInstance from_qubits(int n_qubits, std::vector<std::uint64_t> targets);
  /// Abstract N with the first m indices marked (2-D and density modes only).
  static ProblemInstance from_counts(std::uint64_t m, std::uint64_t n);
  /// Abstract instance over N = 2^62 with m = round(p N) (p is re-derived).
  static ProblemInstance from_fraction(double p);

  const engine::TargetSet& targets() const { return targets_; }
  std::optional<int> n_qubits() const { return n_qubits_; }
  std::uint64_t m() const { return targets_.size(); }
  std::uint64_t n() const { return targets_.universe(); }
  const analytic::TargetFraction& fraction() const { return fraction_; }
  double p() const { return fraction_.p(); }

 private:
  ProblemInstance(engine::TargetSet targets, std::optional<int> n_qubits);

  engine::TargetSet targets_;
  std::optional<int> n_qubits_;
  analytic::TargetFraction fraction_;
};

struct AlgorithmConfig {
  EngineMode mode = EngineMode::kIdealized2d;
  MeasureOrder order = MeasureOrder::kLastSample;
  double set_val = 1.0;
  double eta = 1.0 / 3.0;
  std::uint64_t burn_in = 25;
  /// Samples per attempt before a forced measurement; default 20 sqrt(N/m) + 200.
  std::optional<std::uint64_t> max_iterations_per_attempt;
  std::uint64_t max_restarts = 1000;

  void validate() const;
  std::uint64_t iteration_cap(const ProblemInstance& problem) const;
};

struct AttemptRecord {
  std::uint64_t stop_horizon = 0;  // rotation count of the last sampled state
  std::uint64_t samples = 0;       // ancilla samples (Of1 queries)
  std::uint64_t rotations = 0;     // G applications (one oracle query each)
  double g_at_stop = 0.0;          // success probability of the last sampled state
  double g_measured = 0.0;         // success probability of the measured state
  bool forced = false;             // measured because the iteration cap was hit
  bool success = false;
  std::uint64_t measured_index = 0;

  std::uint64_t oracle_queries() const { return samples + rotations; }
};

struct SearchOutcome {
  bool found = false;
  std::uint64_t measured_index = 0;
  std::uint64_t grover_iterations_total = 0;
  std::uint64_t oracle_queries_total = 0;
  std::uint64_t restarts = 0;
  bool restarts_exhausted = false;
  std::vector<AttemptRecord> attempts;
};

/// Proposed algorithm: per attempt, reset counters and prepare the uniform
/// state, then loop {Of1, clone, sample ancilla, update corrected ratio,
/// apply G, threshold check} and measure when the rule fires. A wrong
/// measurement restarts from scratch, up to max_restarts times.
SearchOutcome run_proposed(const ProblemInstance& problem, const AlgorithmConfig& config,
                           CounterRng& rng);

/// floor(pi / (4 theta)) for the canonical baseline.
std::uint64_t canonical_rotations(const analytic::TargetFraction& p);

/// Canonical Grover: G applied r times, measure, restart on failure. Only
/// config.mode and config.max_restarts are consulted.
SearchOutcome run_canonical(const ProblemInstance& problem, const AlgorithmConfig& config,
                            CounterRng& rng,
                            std::optional<std::uint64_t> r_override = std::nullopt);

struct ExpectationRun {
  bool stopped = false;
  std::uint64_t r_stop = 0;
  double g_at_stop = 0.0;
  /// Success probability of the state measured under config.order.
  double g_measured = 0.0;
  double ratio_at_stop = 0.0;
  std::uint64_t samples = 0;
  std::uint64_t rotations = 0;

  std::uint64_t oracle_queries() const { return samples + rotations; }
};

/// Noise-free run in the 2-D picture: every ancilla draw is replaced by its
/// expected increment and fed through the estimator and stop rule.
ExpectationRun deterministic_expectation_run(const ProblemInstance& problem,
                                             const AlgorithmConfig& config);

}  // namespace fpsearch::search
