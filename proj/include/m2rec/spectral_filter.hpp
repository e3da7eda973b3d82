#pragma once

#include <cstddef>

#include "m2rec/fft.hpp"
#include "m2rec/types.hpp"

namespace m2rec {

enum class FilterMode { kElementwise, kDense };

// Number of non-redundant low-frequency bins kept for cut ratio theta:
// ceil(theta * (floor(T/2) + 1)), never less than one (the DC bin).
std::size_t retained_bins(double theta, std::size_t length);

// Learnable kernel W applied to the kept bins. Elementwise mode stores one
// complex weight per (bin, channel) as kept x d matrices; dense mode stores a
// kept x kept complex block per channel, laid out as kept x (kept * d) with
// channel c occupying columns [c * kept, (c + 1) * kept).
struct SpectralFilterParams {
  double theta = 1.0;
  FilterMode mode = FilterMode::kElementwise;
  Matrix w_re;
  Matrix w_im;

  // W = 1 + 0j (all-pass over the kept band).
  static SpectralFilterParams identity(std::size_t length, std::size_t channels, double theta,
                                       FilterMode mode = FilterMode::kElementwise);
};

// Per-channel FFT -> keep low bins -> multiply by W -> conjugate-symmetric
// completion -> IFFT. The kept-bin spectrum is completed with conjugate
// partners so the inverse transform is real up to rounding.
//
// Rows before `first_valid` are padding: they are zero-filled before the
// transform and re-zeroed afterwards. The operator is linear in x.
class SpectralFilterKernel {
 public:
  SpectralFilterKernel(std::size_t length, std::size_t channels, double theta, FilterMode mode);

  std::size_t length() const { return plan_.size(); }
  std::size_t channels() const { return channels_; }
  std::size_t kept() const { return kept_; }
  FilterMode mode() const { return mode_; }

  // x, out (and dy, dx): either the full length x channels block, or only its
  // length - first_valid valid rows; the transform always runs over `length`.
  void forward(const Eigen::Ref<const Matrix>& x, const Matrix& w_re, const Matrix& w_im,
               std::size_t first_valid, Eigen::Ref<Matrix> out) const;

  // Accumulates into dw_re/dw_im; overwrites dx.
  void backward(const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const Matrix>& dy,
                const Matrix& w_re, const Matrix& w_im, std::size_t first_valid,
                Eigen::Ref<Matrix> dx, Matrix& dw_re, Matrix& dw_im) const;

  // Largest |imag| of the inverse transform before the real part is taken.
  double max_imaginary_residual(const Eigen::Ref<const Matrix>& x, const Matrix& w_re,
                                const Matrix& w_im, std::size_t first_valid) const;

  void check_weights(const Matrix& w_re, const Matrix& w_im) const;

 private:
  // Filtered full spectrum of one channel (in place over `spec`, which holds
  // the forward transform of the channel on entry).
  void apply_kernel(ComplexVec& spec, std::size_t channel, const Matrix& w_re,
                    const Matrix& w_im) const;
  void load_channel(const Eigen::Ref<const Matrix>& x, std::size_t channel,
                    std::size_t first_valid, ComplexVec& buf) const;
  // Row of x holding time step first_valid: 0 for valid-only blocks.
  std::size_t row_offset(Eigen::Index rows, std::size_t first_valid) const;

  FftPlan plan_;
  std::size_t channels_;
  std::size_t kept_;
  FilterMode mode_;
};

// Convenience wrapper: T x d in, T x d out.
Matrix spectral_filter(const Matrix& x, const SpectralFilterParams& params,
                       std::size_t first_valid = 0);

}  // namespace m2rec
