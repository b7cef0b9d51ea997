#pragma once

// State evolution for the search register in three fidelities (2-D angle,
// full statevector, 2x2 density matrix in the {|t_perp>, |t>} basis), plus
// the effective disentanglement channel seen by the measured ancilla.

#include <complex>
#include <cstdint>
#include <span>
#include <vector>

#include "fpsearch/rng.hpp"

namespace fpsearch::engine {

using Complex = std::complex<double>;

/// Angle between the register and |t_perp>; success probability sin^2(theta).
/// Not wrapped: rotations past pi/2 are kept as is.
struct TwoDimState {
  double theta = 0.0;

  double success_probability() const;
};

TwoDimState grover_step_2d(TwoDimState state, double theta0);

/// Marked basis states. Either an explicit sorted index list or the prefix
/// [0, m) of the universe; the prefix form lets abstract problems with huge
/// N stay O(1) in memory.
class TargetSet {
 public:
  static TargetSet explicit_indices(std::vector<std::uint64_t> indices, std::uint64_t universe);
  static TargetSet prefix(std::uint64_t m, std::uint64_t universe);

  std::uint64_t size() const;
  std::uint64_t universe() const { return universe_; }
  bool is_prefix() const { return prefix_; }
  bool contains(std::uint64_t index) const;

  /// k-th marked index in ascending order, k < size().
  std::uint64_t nth(std::uint64_t k) const;
  /// k-th unmarked index in ascending order, k < universe() - size().
  std::uint64_t nth_complement(std::uint64_t k) const;

  /// Explicit indices; empty for prefix sets.
  std::span<const std::uint64_t> indices() const { return indices_; }

  template <class F>
  void for_each(F&& f) const {
    if (prefix_) {
      for (std::uint64_t i = 0; i < prefix_size_; ++i) f(i);
    } else {
      for (std::uint64_t i : indices_) f(i);
    }
  }

 private:
  TargetSet() = default;

  bool prefix_ = false;
  std::uint64_t prefix_size_ = 0;
  std::uint64_t universe_ = 0;
  std::vector<std::uint64_t> indices_;
};

/// Full 2^n amplitude vector of the search register plus its marked set.
class Register {
 public:
  static constexpr int kMaxQubits = 24;

  /// Starts in the uniform superposition H^n|0>.
  Register(int n_qubits, TargetSet targets);

  void reset_uniform();

  int n_qubits() const { return n_qubits_; }
  std::uint64_t dimension() const { return amplitudes_.size(); }
  const TargetSet& targets() const { return targets_; }

  std::span<const Complex> amplitudes() const { return amplitudes_; }
  std::span<Complex> amplitudes() { return amplitudes_; }

  double norm_squared() const;

 private:
  int n_qubits_;
  TargetSet targets_;
  std::vector<Complex> amplitudes_;
};

/// Phase oracle: negates every marked amplitude.
void apply_oracle_full(Register& reg);

/// Inversion about the mean: a_i -> 2 <a> - a_i.
void apply_diffusion_full(Register& reg);

/// One Grover iteration G (oracle followed by diffusion).
void apply_grover_full(Register& reg);

/// Total probability on the marked set.
double success_prob_full(const Register& reg);

/// Born-rule measurement in two stages: the marked/unmarked subspace is
/// chosen with the first uniform draw, then a basis state inside it with the
/// second. Exactly two draws are consumed.
std::uint64_t measure_full(const Register& reg, CounterRng& rng);

/// Effective universal isotropic cloner acting on the measured ancilla.
class CloneChannel {
 public:
  static constexpr double kMaxEta = 1.0 / 3.0;

  CloneChannel() = default;
  explicit CloneChannel(double eta);

  double eta() const { return eta_; }

 private:
  double eta_ = kMaxEta;
};

/// Probability that the cloned ancilla reads 1: eta sin^2 + (1 - eta)/2.
double ancilla_distribution(double sin2theta, const CloneChannel& channel);

/// Bernoulli(p1) draw; consumes one uniform.
int sample_ancilla(double p1, CounterRng& rng);

/// 2x2 density matrix in the {|t_perp>, |t>} basis.
struct DensityMatrix2 {
  Complex a00{1.0, 0.0};
  Complex a01{0.0, 0.0};
  Complex a10{0.0, 0.0};
  Complex a11{0.0, 0.0};

  static DensityMatrix2 pure(double theta);
  static DensityMatrix2 diagonal(double w0, double w1);

  double trace() const { return a00.real() + a11.real(); }
  /// Weight on |t>.
  double target_weight() const { return a11.real(); }
  bool is_valid(double tol = 1e-12) const;
};

/// Post-cloning ancilla matrix eta rho + (1 - eta) I / 2 for the ancilla
/// state cos|0> + sin|1>.
DensityMatrix2 channel_output_density(double sin2theta, const CloneChannel& channel);

/// Zeroes the coherences; diagonal untouched.
DensityMatrix2 dephase_2d(const DensityMatrix2& rho);

/// U rho U^T with U the plane rotation by 2 theta0.
DensityMatrix2 grover_step_density(const DensityMatrix2& rho, double theta0);

}  // namespace fpsearch::engine
