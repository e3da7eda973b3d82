#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace m2rec {

using Complex = std::complex<double>;
using ComplexVec = std::vector<Complex>;

// Precomputed transform of a fixed length. Powers of two use an iterative
// radix-2 decimation in time; every other length goes through Bluestein's
// chirp-z convolution on a power-of-two grid, so all lengths are O(T log T).
//
// Forward is unnormalized, inverse carries the 1/T factor:
//   X[k] = sum_n x[n] exp(-2 pi j k n / T)
//   x[n] = (1/T) sum_k X[k] exp(+2 pi j k n / T)
//
// A plan is immutable after construction and may be shared across threads.
class FftPlan {
 public:
  explicit FftPlan(std::size_t n);
  ~FftPlan();
  FftPlan(FftPlan&&) noexcept;
  FftPlan& operator=(FftPlan&&) noexcept;
  FftPlan(const FftPlan&) = delete;
  FftPlan& operator=(const FftPlan&) = delete;

  std::size_t size() const { return n_; }
  bool is_power_of_two() const { return pow2_; }

  // In place; data.size() must equal size().
  void forward(std::span<Complex> data) const;
  void inverse(std::span<Complex> data) const;

 private:
  void radix2(std::span<Complex> data, bool inverse) const;
  void bluestein(std::span<Complex> data) const;

  std::size_t n_ = 0;
  bool pow2_ = false;
  // radix-2 tables
  std::vector<Complex> twiddle_;
  std::vector<std::size_t> bitrev_;
  // Bluestein tables
  std::vector<Complex> chirp_;
  std::vector<Complex> chirp_kernel_fft_;
  std::unique_ptr<FftPlan> inner_;
};

ComplexVec fft(std::span<const double> signal);
ComplexVec fft(std::span<const Complex> signal);
ComplexVec ifft(std::span<const Complex> spectrum);

// Direct O(T^2) evaluation of the same two sums; test oracle for the fast path.
ComplexVec naive_dft(std::span<const Complex> signal);
ComplexVec naive_idft(std::span<const Complex> spectrum);

struct SpectrumPoint {
  double frequency;  // cycles per step, k / T
  double power;      // |X[k]|^2 / T
};

// One-sided power spectrum for bins k = 0 .. floor(T/2).
std::vector<SpectrumPoint> power_spectrum(std::span<const double> signal);

}  // namespace m2rec
