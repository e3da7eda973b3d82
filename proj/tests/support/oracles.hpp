#pragma once

// Independent reference implementations used only by the tests.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include "m2rec/types.hpp"

namespace oracle {

inline std::vector<std::complex<double>> dft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double ang = -2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / n;
      acc += x[t] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

inline m2rec::Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed,
                                   double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, scale);
  m2rec::Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

// Relative error with a floor on the denominator so entries near zero are
// judged on an absolute scale.
inline double rel_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct GradCheck {
  double max_rel = 0.0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  Eigen::Index worst_index = -1;
};

// Central differences of a scalar function over every entry of `param`.
inline GradCheck check_gradient(m2rec::Matrix& param, const m2rec::Matrix& analytic,
                                const std::function<double()>& f, double h = 1e-4,
                                double floor = 1e-6) {
  GradCheck out;
  for (Eigen::Index i = 0; i < param.size(); ++i) {
    const double saved = param.data()[i];
    param.data()[i] = saved + h;
    const double up = f();
    param.data()[i] = saved - h;
    const double down = f();
    param.data()[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double e = rel_error(analytic.data()[i], numeric, floor);
    if (e > out.max_rel) {
      out.max_rel = e;
      out.worst_analytic = analytic.data()[i];
      out.worst_numeric = numeric;
      out.worst_index = i;
    }
  }
  return out;
}

}  // namespace oracle
