#include "m2rec/fft.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "m2rec/error.hpp"

namespace m2rec {
namespace {

bool power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_power_of_two(std::size_t n) {
  std::size_t m = 1;
  while (m < n) m <<= 1;
  return m;
}

void require_length(std::size_t n, const char* what) {
  if (n == 0) throw LengthError(std::string(what) + ": empty input");
}

template <typename T>
void require_finite(std::span<const T> data, const char* what) {
  for (const auto& v : data) {
    if constexpr (std::is_same_v<T, Complex>) {
      if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
        throw NumericError(std::string(what) + ": non-finite input");
    } else {
      if (!std::isfinite(v)) throw NumericError(std::string(what) + ": non-finite input");
    }
  }
}

// exp(-j * 2 pi * num / den) with the angle reduced exactly in integers.
Complex unit_root(std::size_t num, std::size_t den) {
  const double angle = -2.0 * std::numbers::pi * static_cast<double>(num % den) /
                       static_cast<double>(den);
  return {std::cos(angle), std::sin(angle)};
}

}  // namespace

FftPlan::FftPlan(std::size_t n) : n_(n), pow2_(power_of_two(n)) {
  require_length(n, "FftPlan");
  if (pow2_) {
    twiddle_.resize(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) twiddle_[k] = unit_root(k, n);
    bitrev_.resize(n);
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < n) ++bits;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (std::size_t b = 0; b < bits; ++b) r |= ((i >> b) & 1U) << (bits - 1 - b);
      bitrev_[i] = r;
    }
    return;
  }
  // chirp[k] = exp(-j pi k^2 / n); k^2 is reduced mod 2n to keep the angle small.
  const std::size_t m = next_power_of_two(2 * n - 1);
  chirp_.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t k2 = (k * k) % (2 * n);
    const double angle = -std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n);
    chirp_[k] = {std::cos(angle), std::sin(angle)};
  }
  inner_ = std::make_unique<FftPlan>(m);
  chirp_kernel_fft_.assign(m, Complex{});
  chirp_kernel_fft_[0] = std::conj(chirp_[0]);
  for (std::size_t k = 1; k < n; ++k) {
    chirp_kernel_fft_[k] = std::conj(chirp_[k]);
    chirp_kernel_fft_[m - k] = std::conj(chirp_[k]);
  }
  inner_->forward(chirp_kernel_fft_);
}

FftPlan::~FftPlan() = default;
FftPlan::FftPlan(FftPlan&&) noexcept = default;
FftPlan& FftPlan::operator=(FftPlan&&) noexcept = default;

void FftPlan::radix2(std::span<Complex> a, bool inverse) const {
  const std::size_t n = n_;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = bitrev_[i];
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t stride = n / len;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t j = 0; j < half; ++j) {
        const Complex w = inverse ? std::conj(twiddle_[j * stride]) : twiddle_[j * stride];
        const Complex u = a[i + j];
        const Complex v = a[i + j + half] * w;
        a[i + j] = u + v;
        a[i + j + half] = u - v;
      }
    }
  }
}

void FftPlan::bluestein(std::span<Complex> data) const {
  const std::size_t m = inner_->size();
  std::vector<Complex> work(m, Complex{});
  for (std::size_t k = 0; k < n_; ++k) work[k] = data[k] * chirp_[k];
  inner_->forward(work);
  for (std::size_t k = 0; k < m; ++k) work[k] *= chirp_kernel_fft_[k];
  inner_->inverse(work);
  for (std::size_t k = 0; k < n_; ++k) data[k] = work[k] * chirp_[k];
}

void FftPlan::forward(std::span<Complex> data) const {
  if (data.size() != n_) throw LengthError("FftPlan::forward: size mismatch");
  if (pow2_) {
    radix2(data, false);
  } else {
    bluestein(data);
  }
}

void FftPlan::inverse(std::span<Complex> data) const {
  if (data.size() != n_) throw LengthError("FftPlan::inverse: size mismatch");
  const double scale = 1.0 / static_cast<double>(n_);
  if (pow2_) {
    radix2(data, true);
    for (auto& v : data) v *= scale;
    return;
  }
  for (auto& v : data) v = std::conj(v);
  bluestein(data);
  for (auto& v : data) v = std::conj(v) * scale;
}

ComplexVec fft(std::span<const double> signal) {
  require_length(signal.size(), "fft");
  require_finite(signal, "fft");
  ComplexVec out(signal.begin(), signal.end());
  FftPlan(out.size()).forward(out);
  return out;
}

ComplexVec fft(std::span<const Complex> signal) {
  require_length(signal.size(), "fft");
  require_finite(signal, "fft");
  ComplexVec out(signal.begin(), signal.end());
  FftPlan(out.size()).forward(out);
  return out;
}

ComplexVec ifft(std::span<const Complex> spectrum) {
  require_length(spectrum.size(), "ifft");
  require_finite(spectrum, "ifft");
  ComplexVec out(spectrum.begin(), spectrum.end());
  FftPlan(out.size()).inverse(out);
  return out;
}

ComplexVec naive_dft(std::span<const Complex> signal) {
  require_length(signal.size(), "naive_dft");
  const std::size_t n = signal.size();
  ComplexVec out(n);
  for (std::size_t k = 0; k < n; ++k) {
    Complex acc{};
    for (std::size_t t = 0; t < n; ++t) acc += signal[t] * unit_root(k * t, n);
    out[k] = acc;
  }
  return out;
}

ComplexVec naive_idft(std::span<const Complex> spectrum) {
  require_length(spectrum.size(), "naive_idft");
  const std::size_t n = spectrum.size();
  ComplexVec out(n);
  for (std::size_t t = 0; t < n; ++t) {
    Complex acc{};
    for (std::size_t k = 0; k < n; ++k) acc += spectrum[k] * std::conj(unit_root(k * t, n));
    out[t] = acc / static_cast<double>(n);
  }
  return out;
}

std::vector<SpectrumPoint> power_spectrum(std::span<const double> signal) {
  if (signal.size() < 2) throw LengthError("power_spectrum: need at least 2 samples");
  const ComplexVec spec = fft(signal);
  const std::size_t n = signal.size();
  std::vector<SpectrumPoint> out;
  out.reserve(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    out.push_back({static_cast<double>(k) / static_cast<double>(n),
                   std::norm(spec[k]) / static_cast<double>(n)});
  }
  return out;
}

}  // namespace m2rec
