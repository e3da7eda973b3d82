#include "m2rec/ssm.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>

#include "m2rec/error.hpp"

namespace m2rec {

// Cody-Waite reduction to |r| <= ln2/2, degree-13 Taylor polynomial, then the
// 2^k scale is written straight into the exponent bits. Branch-free so the loop
// vectorizes; within 1 ulp of std::exp for inputs in [-708, 708], inputs below
// are clamped (the result is then ~1e-308 rather than 0, harmless for A_bar).
void vector_exp(const double* in, double* out, std::size_t n) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) {
    const double s = std::min(std::max(in[i], -708.0), 708.0);
    const double kd = s * 1.4426950408889634 + 0x1.8p52;
    const double k = kd - 0x1.8p52;
    const double r = (s - k * 6.93147180369123816490e-01) - k * 1.90821492927058770002e-10;
    double p = 1.0 / 6227020800.0;
    p = p * r + 1.0 / 479001600.0;
    p = p * r + 1.0 / 39916800.0;
    p = p * r + 1.0 / 3628800.0;
    p = p * r + 1.0 / 362880.0;
    p = p * r + 1.0 / 40320.0;
    p = p * r + 1.0 / 5040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    p = p * r + 1.0;
    const auto bits = std::bit_cast<std::int64_t>(kd);
    out[i] = p * std::bit_cast<double>((bits + 1023) << 52);
  }
}

DiscretizedStep discretize(double a, double b, double delta, Discretization mode) {
  if (!(delta > 0.0)) throw ParameterError("discretize: delta must be positive");
  const double s = delta * a;
  const double a_bar = std::exp(s);
  double psi;
  if (mode == Discretization::kZoh) {
    psi = std::abs(s) < kZohSeriesThreshold ? delta : std::expm1(s) / a;
  } else {
    if (a == 0.0) throw NumericError("discretize: paper_variant is singular at A = 0");
    psi = a_bar / a;
  }
  return {a_bar, psi * b};
}

SsmScan::SsmScan(std::size_t length, std::size_t channels, std::size_t state,
                 Discretization mode)
    : length_(length), channels_(channels), state_(state), mode_(mode) {
  const std::size_t es = channels * state;
  a_.resize(es);
  inv_a_.resize(es);
  s_.resize(state);
  ab_.resize(state);
  ps_.resize(state);
  zeros_.resize(state);
  h_.resize(es);
  adj_.resize(es);
}

void SsmScan::prepare(const Matrix& a) {
  const std::size_t es = channels_ * state_;
  if (static_cast<std::size_t>(a.rows()) != channels_ || static_cast<std::size_t>(a.cols()) != state_)
    throw ContractError("ssm: A must be channels x state");
  for (std::size_t i = 0; i < es; ++i) {
    a_[i] = a.data()[i];
    inv_a_[i] = 1.0 / a_[i];
  }
}

// Per-channel step coefficients for state row e: A_bar = exp(Delta A) and
// psi with B_bar = psi * B. Working on one row keeps everything in L1.
void SsmScan::channel_coefficients(double dt, std::size_t e, double* a_bar, double* psi) {
  const std::size_t n = state_;
  const double* ae = a_.data() + e * n;
  const double* ie = inv_a_.data() + e * n;
  double* s = s_.data();
  for (std::size_t j = 0; j < n; ++j) s[j] = dt * ae[j];
  vector_exp(s, a_bar, n);
  if (mode_ == Discretization::kZoh) {
#pragma omp simd
    for (std::size_t j = 0; j < n; ++j)
      psi[j] = std::abs(s[j]) < kZohSeriesThreshold ? dt : (a_bar[j] - 1.0) * ie[j];
  } else {
#pragma omp simd
    for (std::size_t j = 0; j < n; ++j) psi[j] = a_bar[j] * ie[j];
  }
}

void SsmScan::forward(const Eigen::Ref<const Matrix>& u, const Eigen::Ref<const Matrix>& delta,
                      const Eigen::Ref<const Matrix>& b, const Eigen::Ref<const Matrix>& c,
                      const Matrix& a, std::size_t first_valid, Eigen::Ref<Matrix> y) {
  prepare(a);
  const std::size_t n = state_;
  std::fill(h_.begin(), h_.end(), 0.0);
  for (std::size_t t = 0; t < first_valid && t < length_; ++t)
    y.row(static_cast<Eigen::Index>(t)).setZero();
  double* ab = ab_.data();
  double* ps = ps_.data();
  for (std::size_t t = first_valid; t < length_; ++t) {
    const auto ti = static_cast<Eigen::Index>(t);
    const double* bt = b.data() + ti * b.outerStride();
    const double* ct = c.data() + ti * c.outerStride();
    for (std::size_t e = 0; e < channels_; ++e) {
      const auto ei = static_cast<Eigen::Index>(e);
      channel_coefficients(delta(ti, ei), e, ab, ps);
      const double ue = u(ti, ei);
      double* h = h_.data() + e * n;
      double acc = 0.0;
#pragma omp simd reduction(+ : acc)
      for (std::size_t j = 0; j < n; ++j) {
        h[j] = ab[j] * h[j] + ps[j] * bt[j] * ue;
        acc += h[j] * ct[j];
      }
      y(ti, ei) = acc;
    }
  }
}

// The forward sweep keeps states and A_bar; psi is rederived from A_bar in the
// reverse sweep, which avoids a second exp per element.
void SsmScan::backward(const Eigen::Ref<const Matrix>& u, const Eigen::Ref<const Matrix>& delta,
                       const Eigen::Ref<const Matrix>& b, const Eigen::Ref<const Matrix>& c,
                       const Matrix& a, std::size_t first_valid,
                       const Eigen::Ref<const Matrix>& dy, Eigen::Ref<Matrix> du,
                       Eigen::Ref<Matrix> ddelta, Eigen::Ref<Matrix> db, Eigen::Ref<Matrix> dc,
                       Matrix& da) {
  du.setZero();
  ddelta.setZero();
  db.setZero();
  dc.setZero();
  if (first_valid >= length_) return;
  prepare(a);
  const std::size_t n = state_;
  const std::size_t es = channels_ * n;
  const std::size_t steps = length_ - first_valid;
  h_hist_.resize(steps * es);
  ab_hist_.resize(steps * es);
  double* ps = ps_.data();

  for (std::size_t k = 0; k < steps; ++k) {
    const auto ti = static_cast<Eigen::Index>(first_valid + k);
    double* h = h_hist_.data() + k * es;
    const double* bt = b.data() + ti * b.outerStride();
    for (std::size_t e = 0; e < channels_; ++e) {
      const auto ei = static_cast<Eigen::Index>(e);
      double* ab = ab_hist_.data() + k * es + e * n;
      channel_coefficients(delta(ti, ei), e, ab, ps);
      const double ue = u(ti, ei);
      double* he = h + e * n;
      if (k == 0) {
#pragma omp simd
        for (std::size_t j = 0; j < n; ++j) he[j] = ps[j] * bt[j] * ue;
      } else {
        const double* hp = he - es;
#pragma omp simd
        for (std::size_t j = 0; j < n; ++j) he[j] = ab[j] * hp[j] + ps[j] * bt[j] * ue;
      }
    }
  }

  std::fill(adj_.begin(), adj_.end(), 0.0);
  std::fill(zeros_.begin(), zeros_.end(), 0.0);
  const bool zoh = mode_ == Discretization::kZoh;
  for (std::size_t k = steps; k-- > 0;) {
    const auto ti = static_cast<Eigen::Index>(first_valid + k);
    const double* h = h_hist_.data() + k * es;
    const double* bt = b.data() + ti * b.outerStride();
    const double* ct = c.data() + ti * c.outerStride();
    double* dct = dc.data() + ti * dc.outerStride();
    double* dbt = db.data() + ti * db.outerStride();
    for (std::size_t e = 0; e < channels_; ++e) {
      const auto ei = static_cast<Eigen::Index>(e);
      const double dye = dy(ti, ei);
      const double ue = u(ti, ei);
      const double dt = delta(ti, ei);
      const double* ab = ab_hist_.data() + k * es + e * n;
      const double* he = h + e * n;
      const double* hp = k > 0 ? he - es : zeros_.data();
      const double* ae = a_.data() + e * n;
      const double* ie = inv_a_.data() + e * n;
      double* g = adj_.data() + e * n;
      double* dA = da.data() + e * n;
      double du_acc = 0.0;
      double dd_acc = 0.0;
#pragma omp simd reduction(+ : du_acc, dd_acc)
      for (std::size_t j = 0; j < n; ++j) {
        const double gj = g[j] + dye * ct[j];
        dct[j] += dye * he[j];
        const double d_abar = gj * hp[j];
        const double d_bbar = gj * ue;  // gradient w.r.t. psi * B
        const double s = dt * ae[j];
        const double psj = !zoh ? ab[j] * ie[j] : std::abs(s) < kZohSeriesThreshold ? dt : (ab[j] - 1.0) * ie[j];
        const double series = dt * dt * (0.5 + s * (1.0 / 3.0) + s * s * 0.125);
        const double dpsi_da = !zoh                 ? ab[j] * (s - 1.0) * ie[j] * ie[j]
                               : std::abs(s) < 1e-4 ? series
                                                    : (ab[j] * dt - psj) * ie[j];
        du_acc += gj * psj * bt[j];
        dd_acc += (d_abar * ae[j] + d_bbar * bt[j]) * ab[j];
        dA[j] += d_abar * dt * ab[j] + d_bbar * bt[j] * dpsi_da;
        dbt[j] += d_bbar * psj;
        g[j] = gj * ab[j];
      }
      du(ti, ei) = du_acc;
      ddelta(ti, ei) = dd_acc;
    }
  }
}

}  // namespace m2rec
