#include "fpsearch/engine.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fpsearch::engine {

double TwoDimState::success_probability() const {
  const double s = std::sin(theta);
  return std::clamp(s * s, 0.0, 1.0);
}

TwoDimState grover_step_2d(TwoDimState state, double theta0) {
  return TwoDimState{state.theta + 2.0 * theta0};
}

// ---------------------------------------------------------------------------
// TargetSet

TargetSet TargetSet::explicit_indices(std::vector<std::uint64_t> indices,
                                      std::uint64_t universe) {
  std::sort(indices.begin(), indices.end());
  indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
  if (indices.empty()) {
    throw std::invalid_argument("target set must contain at least one index");
  }
  if (indices.back() >= universe) {
    throw std::invalid_argument("target index outside the search space");
  }
  TargetSet set;
  set.universe_ = universe;
  set.indices_ = std::move(indices);
  return set;
}

TargetSet TargetSet::prefix(std::uint64_t m, std::uint64_t universe) {
  if (m < 1 || m > universe) {
    throw std::invalid_argument("target count must satisfy 1 <= m <= N");
  }
  TargetSet set;
  set.prefix_ = true;
  set.prefix_size_ = m;
  set.universe_ = universe;
  return set;
}

std::uint64_t TargetSet::size() const { return prefix_ ? prefix_size_ : indices_.size(); }

bool TargetSet::contains(std::uint64_t index) const {
  if (index >= universe_) return false;
  if (prefix_) return index < prefix_size_;
  return std::binary_search(indices_.begin(), indices_.end(), index);
}

std::uint64_t TargetSet::nth(std::uint64_t k) const {
  if (k >= size()) throw std::out_of_range("target rank out of range");
  return prefix_ ? k : indices_[k];
}

std::uint64_t TargetSet::nth_complement(std::uint64_t k) const {
  if (k >= universe_ - size()) throw std::out_of_range("complement rank out of range");
  if (prefix_) return prefix_size_ + k;
  std::uint64_t candidate = k;
  for (std::uint64_t t : indices_) {
    if (t > candidate) break;
    ++candidate;
  }
  return candidate;
}

// ---------------------------------------------------------------------------
// Register

Register::Register(int n_qubits, TargetSet targets)
    : n_qubits_(n_qubits), targets_(std::move(targets)) {
  if (n_qubits < 1 || n_qubits > kMaxQubits) {
    throw std::invalid_argument("statevector register supports 1..24 qubits");
  }
  if (targets_.universe() != (std::uint64_t{1} << n_qubits)) {
    throw std::invalid_argument("target set universe must equal 2^n");
  }
  amplitudes_.resize(std::size_t{1} << n_qubits);
  reset_uniform();
}

void Register::reset_uniform() {
  const double amp = 1.0 / std::sqrt(static_cast<double>(amplitudes_.size()));
  std::fill(amplitudes_.begin(), amplitudes_.end(), Complex{amp, 0.0});
}

double Register::norm_squared() const {
  double total = 0.0;
  for (const Complex& a : amplitudes_) total += std::norm(a);
  return total;
}

void apply_oracle_full(Register& reg) {
  auto amps = reg.amplitudes();
  reg.targets().for_each([&](std::uint64_t i) { amps[i] = -amps[i]; });
}

void apply_diffusion_full(Register& reg) {
  auto amps = reg.amplitudes();
  Complex sum{0.0, 0.0};
  for (const Complex& a : amps) sum += a;
  const Complex twice_mean = 2.0 * sum / static_cast<double>(amps.size());
  for (Complex& a : amps) a = twice_mean - a;
}

void apply_grover_full(Register& reg) {
  apply_oracle_full(reg);
  apply_diffusion_full(reg);
}

double success_prob_full(const Register& reg) {
  const auto amps = reg.amplitudes();
  double total = 0.0;
  reg.targets().for_each([&](std::uint64_t i) { total += std::norm(amps[i]); });
  return std::clamp(total, 0.0, 1.0);
}

std::uint64_t measure_full(const Register& reg, CounterRng& rng) {
  const double u_subspace = rng.uniform();
  const double u_index = rng.uniform();
  const auto amps = reg.amplitudes();
  const TargetSet& targets = reg.targets();
  const std::uint64_t m = targets.size();
  const std::uint64_t n = reg.dimension();

  const double hit = success_prob_full(reg);
  const bool in_targets = (m == n) || (m > 0 && u_subspace < hit);

  if (in_targets) {
    double weight = 0.0;
    targets.for_each([&](std::uint64_t i) { weight += std::norm(amps[i]); });
    const double cut = u_index * weight;
    double acc = 0.0;
    std::uint64_t chosen = targets.nth(m - 1);
    bool done = false;
    targets.for_each([&](std::uint64_t i) {
      if (done) return;
      acc += std::norm(amps[i]);
      if (cut < acc) {
        chosen = i;
        done = true;
      }
    });
    return chosen;
  }

  double weight = 0.0;
  for (std::uint64_t i = 0; i < n; ++i) {
    if (!targets.contains(i)) weight += std::norm(amps[i]);
  }
  const double cut = u_index * weight;
  double acc = 0.0;
  std::uint64_t last = targets.nth_complement(n - m - 1);
  for (std::uint64_t i = 0; i < n; ++i) {
    if (targets.contains(i)) continue;
    acc += std::norm(amps[i]);
    if (cut < acc) return i;
  }
  return last;
}

// ---------------------------------------------------------------------------
// Channel

CloneChannel::CloneChannel(double eta) : eta_(eta) {
  if (!(eta > 0.0) || eta > kMaxEta + 1e-15) {
    throw std::invalid_argument("reduction factor eta must lie in (0, 1/3]");
  }
}

double ancilla_distribution(double sin2theta, const CloneChannel& channel) {
  if (!(sin2theta >= 0.0) || sin2theta > 1.0) {
    throw std::invalid_argument("sin^2(theta) must lie in [0, 1]");
  }
  const double eta = channel.eta();
  return eta * sin2theta + 0.5 * (1.0 - eta);
}

int sample_ancilla(double p1, CounterRng& rng) { return rng.bernoulli(p1) ? 1 : 0; }

// ---------------------------------------------------------------------------
// Density matrices

DensityMatrix2 DensityMatrix2::pure(double theta) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  return {{c * c, 0.0}, {c * s, 0.0}, {s * c, 0.0}, {s * s, 0.0}};
}

DensityMatrix2 DensityMatrix2::diagonal(double w0, double w1) {
  return {{w0, 0.0}, {0.0, 0.0}, {0.0, 0.0}, {w1, 0.0}};
}

bool DensityMatrix2::is_valid(double tol) const {
  if (std::abs(trace() - 1.0) > tol) return false;
  if (std::abs(a00.imag()) > tol || std::abs(a11.imag()) > tol) return false;
  if (std::abs(a01 - std::conj(a10)) > tol) return false;
  // 2x2 Hermitian is PSD iff both diagonal entries and the determinant are >= 0.
  const double det = a00.real() * a11.real() - std::norm(a01);
  return a00.real() >= -tol && a11.real() >= -tol && det >= -tol;
}

DensityMatrix2 channel_output_density(double sin2theta, const CloneChannel& channel) {
  if (!(sin2theta >= 0.0) || sin2theta > 1.0) {
    throw std::invalid_argument("sin^2(theta) must lie in [0, 1]");
  }
  const double eta = channel.eta();
  const double mix = 0.5 * (1.0 - eta);
  const double cos2 = 1.0 - sin2theta;
  const double off = eta * std::sqrt(sin2theta * cos2);
  return {{eta * cos2 + mix, 0.0}, {off, 0.0}, {off, 0.0}, {eta * sin2theta + mix, 0.0}};
}

DensityMatrix2 dephase_2d(const DensityMatrix2& rho) {
  return {rho.a00, {0.0, 0.0}, {0.0, 0.0}, rho.a11};
}

DensityMatrix2 grover_step_density(const DensityMatrix2& rho, double theta0) {
  const double c = std::cos(2.0 * theta0);
  const double s = std::sin(2.0 * theta0);
  // U = [[c, -s], [s, c]]; first T = U rho, then T U^T.
  const Complex t00 = c * rho.a00 - s * rho.a10;
  const Complex t01 = c * rho.a01 - s * rho.a11;
  const Complex t10 = s * rho.a00 + c * rho.a10;
  const Complex t11 = s * rho.a01 + c * rho.a11;
  return {t00 * c - t01 * s, t00 * s + t01 * c, t10 * c - t11 * s, t10 * s + t11 * c};
}

}  // namespace fpsearch::engine
