#pragma once

// Reference computations used only by the tests. Each is written from the
// defining formulas, without calling into the library under test.

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <set>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace oracle {

inline double grover_g(double p, std::uint64_t r) {
  const double s = std::sin((2.0 * static_cast<double>(r) + 1.0) * std::asin(std::sqrt(p)));
  return s * s;
}

// Integral ratio over the rotation angle u in [theta, x]:
// int sin^2 u du / int cos^2 u du.
inline double ratio_integral(double theta, double x) {
  using boost::math::quadrature::gauss_kronrod;
  if (x - theta < 1e-12) return std::tan(theta) * std::tan(theta);
  double err = 0.0;
  const double num = gauss_kronrod<double, 61>::integrate(
      [](double u) { return std::sin(u) * std::sin(u); }, theta, x, 5, 1e-13, &err);
  const double den = gauss_kronrod<double, 61>::integrate(
      [](double u) { return std::cos(u) * std::cos(u); }, theta, x, 5, 1e-13, &err);
  return num / den;
}

inline double discrete_ratio(double p, std::uint64_t horizon) {
  double hit = 0.0;
  double miss = 0.0;
  for (std::uint64_t r = 0; r <= horizon; ++r) {
    const double g = grover_g(p, r);
    hit += g;
    miss += 1.0 - g;
  }
  return hit / miss;
}

// Grover via explicit dense matrices: G = (2|s><s| - I) O.
inline std::vector<std::complex<double>> dense_grover(int n, const std::set<std::uint64_t>& marked,
                                                      int r) {
  const std::size_t dim = std::size_t{1} << n;
  std::vector<double> g(dim * dim, 0.0);
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      const double diff = 2.0 / static_cast<double>(dim) - (i == j ? 1.0 : 0.0);
      g[i * dim + j] = diff * (marked.count(j) ? -1.0 : 1.0);
    }
  }
  std::vector<std::complex<double>> v(dim, 1.0 / std::sqrt(static_cast<double>(dim)));
  for (int step = 0; step < r; ++step) {
    std::vector<std::complex<double>> w(dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) {
      for (std::size_t j = 0; j < dim; ++j) w[i] += g[i * dim + j] * v[j];
    }
    v = w;
  }
  return v;
}

}  // namespace oracle
