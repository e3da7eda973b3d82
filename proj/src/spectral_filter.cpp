#include "m2rec/spectral_filter.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "m2rec/error.hpp"

namespace m2rec {
namespace {

void check_theta(double theta) {
  if (!(theta > 0.0 && theta <= 1.0))
    throw ParameterError("spectral filter: theta must lie in (0, 1], got " + std::to_string(theta));
}

// Bins that are their own conjugate partner: DC and, for even T, Nyquist.
bool self_conjugate(std::size_t k, std::size_t n) { return k == 0 || 2 * k == n; }

}  // namespace

std::size_t retained_bins(double theta, std::size_t length) {
  check_theta(theta);
  if (length == 0) throw LengthError("spectral filter: empty sequence");
  const std::size_t half = length / 2 + 1;
  const auto kept = static_cast<std::size_t>(std::ceil(theta * static_cast<double>(half) - 1e-12));
  return std::clamp<std::size_t>(kept, 1, half);
}

SpectralFilterParams SpectralFilterParams::identity(std::size_t length, std::size_t channels,
                                                    double theta, FilterMode mode) {
  SpectralFilterParams p;
  p.theta = theta;
  p.mode = mode;
  const std::size_t kept = retained_bins(theta, length);
  if (mode == FilterMode::kElementwise) {
    p.w_re = Matrix::Ones(kept, channels);
    p.w_im = Matrix::Zero(kept, channels);
  } else {
    p.w_re = Matrix::Zero(kept, kept * channels);
    p.w_im = Matrix::Zero(kept, kept * channels);
    for (std::size_t c = 0; c < channels; ++c)
      p.w_re.block(0, c * kept, kept, kept).setIdentity();
  }
  return p;
}

SpectralFilterKernel::SpectralFilterKernel(std::size_t length, std::size_t channels, double theta,
                                           FilterMode mode)
    : plan_(length), channels_(channels), kept_(retained_bins(theta, length)), mode_(mode) {}

void SpectralFilterKernel::check_weights(const Matrix& w_re, const Matrix& w_im) const {
  const auto cols = mode_ == FilterMode::kElementwise ? channels_ : kept_ * channels_;
  if (static_cast<std::size_t>(w_re.rows()) != kept_ ||
      static_cast<std::size_t>(w_re.cols()) != cols || w_im.rows() != w_re.rows() ||
      w_im.cols() != w_re.cols())
    throw ContractError("spectral filter: kernel shape does not match the kept band");
  if (!w_re.allFinite() || !w_im.allFinite())
    throw NumericError("spectral filter: non-finite kernel weight");
}

std::size_t SpectralFilterKernel::row_offset(Eigen::Index rows, std::size_t first_valid) const {
  const std::size_t n = plan_.size();
  if (first_valid > n) throw ContractError("spectral filter: first valid index beyond the window");
  const auto r = static_cast<std::size_t>(rows);
  if (r == n) return first_valid;
  if (r == n - first_valid) return 0;
  throw ContractError("spectral filter: block rows match neither the window nor its valid part");
}

void SpectralFilterKernel::load_channel(const Eigen::Ref<const Matrix>& x, std::size_t channel,
                                        std::size_t first_valid, ComplexVec& buf) const {
  const std::size_t n = plan_.size();
  const std::size_t off = row_offset(x.rows(), first_valid);
  buf.assign(n, Complex{});
  for (std::size_t t = first_valid; t < n; ++t)
    buf[t] = x(static_cast<Eigen::Index>(t - first_valid + off), static_cast<Eigen::Index>(channel));
}

void SpectralFilterKernel::apply_kernel(ComplexVec& spec, std::size_t c, const Matrix& w_re,
                                        const Matrix& w_im) const {
  const std::size_t n = plan_.size();
  thread_local ComplexVec z;
  z.assign(kept_, Complex{});
  if (mode_ == FilterMode::kElementwise) {
    for (std::size_t k = 0; k < kept_; ++k) z[k] = Complex(w_re(k, c), w_im(k, c)) * spec[k];
  } else {
    const std::size_t off = c * kept_;
    for (std::size_t k = 0; k < kept_; ++k) {
      Complex acc{};
      for (std::size_t j = 0; j < kept_; ++j)
        acc += Complex(w_re(k, off + j), w_im(k, off + j)) * spec[j];
      z[k] = acc;
    }
  }
  std::fill(spec.begin(), spec.end(), Complex{});
  for (std::size_t k = 0; k < kept_; ++k) {
    if (self_conjugate(k, n)) {
      spec[k] = z[k].real();
    } else {
      spec[k] = z[k];
      spec[n - k] = std::conj(z[k]);
    }
  }
}

void SpectralFilterKernel::forward(const Eigen::Ref<const Matrix>& x, const Matrix& w_re,
                                   const Matrix& w_im, std::size_t first_valid,
                                   Eigen::Ref<Matrix> out) const {
  const std::size_t n = plan_.size();
  const std::size_t off = row_offset(out.rows(), first_valid);
  thread_local ComplexVec buf;
  for (std::size_t c = 0; c < channels_; ++c) {
    const auto ci = static_cast<Eigen::Index>(c);
    load_channel(x, c, first_valid, buf);
    plan_.forward(buf);
    apply_kernel(buf, c, w_re, w_im);
    plan_.inverse(buf);
    out.col(ci).head(static_cast<Eigen::Index>(off)).setZero();
    for (std::size_t t = first_valid; t < n; ++t)
      out(static_cast<Eigen::Index>(t - first_valid + off), ci) = buf[t].real();
  }
}

double SpectralFilterKernel::max_imaginary_residual(const Eigen::Ref<const Matrix>& x,
                                                    const Matrix& w_re, const Matrix& w_im,
                                                    std::size_t first_valid) const {
  double worst = 0.0;
  ComplexVec buf;
  for (std::size_t c = 0; c < channels_; ++c) {
    load_channel(x, c, first_valid, buf);
    plan_.forward(buf);
    apply_kernel(buf, c, w_re, w_im);
    plan_.inverse(buf);
    for (const auto& v : buf) worst = std::max(worst, std::abs(v.imag()));
  }
  return worst;
}

// With Y = FFT(dy) and the output spectrum Z on the kept bins, the packed
// gradient dL/dRe(Z_k) + j dL/dIm(Z_k) is (2/T) Y_k for bins that carry a
// conjugate partner and (1/T) Re(Y_k) for self-conjugate bins. From there
// dW = dZ conj(X) and dX = conj(W) dZ; the input gradient is
// Re(sum_k dX_k exp(+2 pi j k t / T)).
void SpectralFilterKernel::backward(const Eigen::Ref<const Matrix>& x,
                                    const Eigen::Ref<const Matrix>& dy, const Matrix& w_re,
                                    const Matrix& w_im, std::size_t first_valid,
                                    Eigen::Ref<Matrix> dx, Matrix& dw_re, Matrix& dw_im) const {
  const std::size_t n = plan_.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  const std::size_t off = row_offset(dx.rows(), first_valid);
  thread_local ComplexVec xs;
  thread_local ComplexVec ys;
  thread_local ComplexVec dz;
  thread_local ComplexVec dxs;
  for (std::size_t c = 0; c < channels_; ++c) {
    load_channel(x, c, first_valid, xs);
    plan_.forward(xs);
    load_channel(dy, c, first_valid, ys);
    plan_.forward(ys);

    dz.assign(kept_, Complex{});
    for (std::size_t k = 0; k < kept_; ++k)
      dz[k] = self_conjugate(k, n) ? Complex(ys[k].real() * inv_n, 0.0) : 2.0 * inv_n * ys[k];

    dxs.assign(n, Complex{});
    if (mode_ == FilterMode::kElementwise) {
      for (std::size_t k = 0; k < kept_; ++k) {
        const Complex g = dz[k] * std::conj(xs[k]);
        dw_re(k, c) += g.real();
        dw_im(k, c) += g.imag();
        dxs[k] = std::conj(Complex(w_re(k, c), w_im(k, c))) * dz[k];
      }
    } else {
      const std::size_t off = c * kept_;
      for (std::size_t k = 0; k < kept_; ++k) {
        for (std::size_t j = 0; j < kept_; ++j) {
          const Complex g = dz[k] * std::conj(xs[j]);
          dw_re(k, off + j) += g.real();
          dw_im(k, off + j) += g.imag();
          dxs[j] += std::conj(Complex(w_re(k, off + j), w_im(k, off + j))) * dz[k];
        }
      }
    }
    // sum_k dX_k exp(+j...) == n * inverse(dX)
    plan_.inverse(dxs);
    const auto ci = static_cast<Eigen::Index>(c);
    dx.col(ci).head(static_cast<Eigen::Index>(off)).setZero();
    for (std::size_t t = first_valid; t < n; ++t)
      dx(static_cast<Eigen::Index>(t - first_valid + off), ci) =
          static_cast<double>(n) * dxs[t].real();
  }
}

Matrix spectral_filter(const Matrix& x, const SpectralFilterParams& params,
                       std::size_t first_valid) {
  if (x.rows() == 0) throw LengthError("spectral_filter: empty sequence");
  SpectralFilterKernel kernel(static_cast<std::size_t>(x.rows()), static_cast<std::size_t>(x.cols()),
                              params.theta, params.mode);
  kernel.check_weights(params.w_re, params.w_im);
  Matrix out(x.rows(), x.cols());
  kernel.forward(x, params.w_re, params.w_im, first_valid, out);
  return out;
}

}  // namespace m2rec
