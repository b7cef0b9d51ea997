#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fpsearch/analytic.hpp"
#include "fpsearch/harness.hpp"
#include "fpsearch/search.hpp"

using namespace fpsearch;
using namespace fpsearch::search;

namespace {

std::vector<std::uint64_t> spread_targets(int n, std::uint64_t m) {
  const std::uint64_t dim = std::uint64_t{1} << n;
  std::vector<std::uint64_t> t;
  for (std::uint64_t i = 0; i < m; ++i) t.push_back((i * 37 + 5) % dim);
  return t;
}

AlgorithmConfig config_for(EngineMode mode, std::uint64_t burn_in = 25) {
  AlgorithmConfig c;
  c.mode = mode;
  c.burn_in = burn_in;
  return c;
}

}  // namespace

TEST_CASE("problem instances") {
  const auto a = ProblemInstance::from_qubits(4, {3, 1, 3});
  CHECK(a.m() == 2);
  CHECK(a.n() == 16);
  CHECK(a.p() == 0.125);
  CHECK(*a.n_qubits() == 4);
  const auto b = ProblemInstance::from_fraction(0.00390625);
  CHECK(b.p() == 0.00390625);
  CHECK_FALSE(b.n_qubits().has_value());
  CHECK_THROWS_AS(ProblemInstance::from_fraction(0.0), std::invalid_argument);
  CHECK_THROWS_AS(ProblemInstance::from_fraction(1.01), std::invalid_argument);
  CHECK_THROWS_AS(ProblemInstance::from_qubits(0, {0}), std::invalid_argument);
  CHECK_THROWS_AS(ProblemInstance::from_counts(0, 4), std::invalid_argument);
}

TEST_CASE("config validation and parsing") {
  AlgorithmConfig c;
  CHECK_NOTHROW(c.validate());
  c.set_val = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = AlgorithmConfig{};
  c.eta = 0.5;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = AlgorithmConfig{};
  c.max_iterations_per_attempt = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);

  CHECK(parse_engine_mode("2d") == EngineMode::kIdealized2d);
  CHECK(parse_engine_mode("statevector") == EngineMode::kFullStatevector);
  CHECK(parse_engine_mode("density") == EngineMode::kDephasedDensity);
  CHECK_THROWS_AS(parse_engine_mode("gpu"), std::invalid_argument);
  CHECK(parse_measure_order("after-rotation") == MeasureOrder::kAfterRotation);
  CHECK_THROWS_AS(parse_measure_order("never"), std::invalid_argument);
  CHECK(to_string(EngineMode::kDephasedDensity) == "dephased");

  const auto prob = ProblemInstance::from_counts(1, 1024);
  CHECK(AlgorithmConfig{}.iteration_cap(prob) == 840);
}

TEST_CASE("every state marked") {
  for (auto mode : {EngineMode::kIdealized2d, EngineMode::kFullStatevector,
                    EngineMode::kDephasedDensity}) {
    const auto prob = ProblemInstance::from_qubits(3, {0, 1, 2, 3, 4, 5, 6, 7});
    for (std::uint64_t s = 0; s < 20; ++s) {
      CounterRng rng(s, 0);
      const auto out = run_proposed(prob, config_for(mode), rng);
      CHECK(out.found);
      CHECK(out.restarts == 0);
    }
  }
}

TEST_CASE("noise-free runs") {
  const auto cfg = config_for(EngineMode::kIdealized2d, 0);
  auto run = deterministic_expectation_run(ProblemInstance::from_fraction(0.5), cfg);
  CHECK(run.stopped);
  CHECK(run.r_stop == 0);
  CHECK(run.g_at_stop == 0.5);
  run = deterministic_expectation_run(ProblemInstance::from_fraction(0.25), cfg);
  CHECK(run.r_stop == 1);
  CHECK(run.g_at_stop == doctest::Approx(1.0));
  CHECK(run.g_measured == doctest::Approx(1.0));
  CHECK(run.oracle_queries() == 3);
  run = deterministic_expectation_run(ProblemInstance::from_fraction(1.0 / 4096), cfg);
  CHECK(run.g_at_stop >= 0.5);

  auto after = cfg;
  after.order = MeasureOrder::kAfterRotation;
  run = deterministic_expectation_run(ProblemInstance::from_fraction(0.25), after);
  CHECK(run.r_stop == 1);
  CHECK(run.rotations == 2);
  CHECK(run.oracle_queries() == 4);
  CHECK(run.g_measured == doctest::Approx(0.25));
}

TEST_CASE("noise-free stop matches the expected-ratio iteration") {
  const auto cfg = config_for(EngineMode::kIdealized2d, 0);
  for (double p : harness::default_probability_grid()) {
    const auto prob = ProblemInstance::from_fraction(p);
    const auto run = deterministic_expectation_run(prob, cfg);
    const auto want = analytic::stop_iteration_expected(prob.fraction(), 1.0);
    CHECK(run.stopped);
    CHECK(run.r_stop == want.r_stop);
    CHECK(run.g_at_stop == doctest::Approx(want.g_at_stop));
    CHECK(run.g_at_stop >= 0.5);
  }
}

TEST_CASE("canonical baseline") {
  const auto cfg = config_for(EngineMode::kIdealized2d);
  CHECK(canonical_rotations(analytic::TargetFraction(0.25)) == 1);
  CounterRng rng(5, 0);
  auto out = run_canonical(ProblemInstance::from_fraction(0.25), cfg, rng);
  CHECK(out.found);
  CHECK(out.attempts.size() == 1);
  CHECK(out.oracle_queries_total == 1);

  out = run_canonical(ProblemInstance::from_counts(1, 1024), cfg, rng);
  CHECK(out.attempts.front().g_measured >= 0.999);
  CHECK(out.attempts.front().rotations == 25);

  out = run_canonical(ProblemInstance::from_fraction(0.1), cfg, rng, 0);
  CHECK(out.attempts.front().g_measured == 0.1);

  auto full = config_for(EngineMode::kFullStatevector);
  out = run_canonical(ProblemInstance::from_qubits(6, {9}), full, rng);
  CHECK(out.attempts.front().g_measured ==
        doctest::Approx(analytic::success_probability(analytic::TargetFraction(1.0 / 64), 6)));
}

TEST_CASE("query accounting") {
  for (auto order : {MeasureOrder::kLastSample, MeasureOrder::kAfterRotation}) {
    auto cfg = config_for(EngineMode::kIdealized2d, 0);
    cfg.order = order;
    const auto prob = ProblemInstance::from_fraction(1.0 / 200);
    for (std::uint64_t s = 0; s < 300; ++s) {
      CounterRng rng(s, 1);
      const auto out = run_proposed(prob, cfg, rng);
      std::uint64_t queries = 0;
      std::uint64_t rotations = 0;
      for (const auto& a : out.attempts) {
        if (a.forced || order == MeasureOrder::kAfterRotation) {
          CHECK(a.oracle_queries() == 2 * a.rotations);
        } else {
          // The closing G is skipped when the sampled state is measured.
          CHECK(a.oracle_queries() == 2 * a.samples - 1);
        }
        CHECK(a.samples == a.stop_horizon + 1);
        queries += a.oracle_queries();
        rotations += a.rotations;
      }
      CHECK(out.oracle_queries_total == queries);
      CHECK(out.grover_iterations_total == rotations);
      CHECK(out.restarts + 1 == out.attempts.size());
    }
  }
}

TEST_CASE("idealized and statevector modes agree under the same seeds") {
  for (int n = 2; n <= 10; ++n) {
    for (std::uint64_t m : {std::uint64_t{1}, std::uint64_t{3}}) {
      const auto targets = spread_targets(n, m);
      const auto full_prob = ProblemInstance::from_qubits(n, targets);
      for (std::uint64_t burn : {0u, 25u}) {
        for (std::uint64_t s = 0; s < 10; ++s) {
          CounterRng r1(s, 100 + n);
          CounterRng r2(s, 100 + n);
          const auto a = run_proposed(full_prob, config_for(EngineMode::kIdealized2d, burn), r1);
          const auto b = run_proposed(full_prob, config_for(EngineMode::kFullStatevector, burn), r2);
          REQUIRE(a.attempts.size() == b.attempts.size());
          for (std::size_t i = 0; i < a.attempts.size(); ++i) {
            CHECK(a.attempts[i].stop_horizon == b.attempts[i].stop_horizon);
            CHECK(a.attempts[i].success == b.attempts[i].success);
            CHECK(a.attempts[i].g_at_stop == doctest::Approx(b.attempts[i].g_at_stop).epsilon(1e-9));
          }
          CHECK(a.measured_index == b.measured_index);
        }
      }
    }
  }
}

TEST_CASE("found implies a marked index") {
  for (auto mode : {EngineMode::kIdealized2d, EngineMode::kFullStatevector,
                    EngineMode::kDephasedDensity}) {
    const auto prob = ProblemInstance::from_qubits(7, spread_targets(7, 2));
    for (std::uint64_t s = 0; s < 200; ++s) {
      CounterRng rng(s, 7);
      const auto out = run_proposed(prob, config_for(mode), rng);
      CHECK(out.found);
      CHECK(prob.targets().contains(out.measured_index));
      for (const auto& a : out.attempts) CHECK(a.success == prob.targets().contains(a.measured_index));
    }
  }
}

TEST_CASE("restart cap and forced measurement") {
  auto cfg = config_for(EngineMode::kIdealized2d, 0);
  cfg.max_iterations_per_attempt = 1;
  cfg.max_restarts = 3;
  cfg.burn_in = 1000;
  const auto prob = ProblemInstance::from_counts(1, std::uint64_t{1} << 40);
  CounterRng rng(1, 1);
  const auto out = run_proposed(prob, cfg, rng);
  CHECK_FALSE(out.found);
  CHECK(out.restarts_exhausted);
  CHECK(out.attempts.size() == 4);
  for (const auto& a : out.attempts) {
    CHECK(a.samples == 1);
    CHECK(a.rotations == 1);
    CHECK(a.forced);
  }
}

TEST_CASE("seeded runs are reproducible") {
  const auto prob = ProblemInstance::from_fraction(0.01);
  for (auto mode : {EngineMode::kIdealized2d, EngineMode::kDephasedDensity}) {
    CounterRng a(8, 8);
    CounterRng b(8, 8);
    const auto x = run_proposed(prob, config_for(mode), a);
    const auto y = run_proposed(prob, config_for(mode), b);
    CHECK(x.oracle_queries_total == y.oracle_queries_total);
    CHECK(x.measured_index == y.measured_index);
    CHECK(x.attempts.size() == y.attempts.size());
  }
}
