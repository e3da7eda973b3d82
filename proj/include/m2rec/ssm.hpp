#pragma once

#include <cstddef>
#include <vector>

#include "m2rec/types.hpp"

namespace m2rec {

// How continuous (A, B) become (A_bar, B_bar) for a step Delta on a diagonal A.
//   kZoh:   A_bar = exp(dA),  B_bar = (exp(dA) - 1) / A * B   (limit Delta*B as dA -> 0)
//   kPaper: A_bar = exp(dA),  B_bar = exp(dA) / A * B          (the (dA)^-1 exp(dA) dB form
//                                                              without the -1 term)
enum class Discretization { kZoh, kPaper };

// Elementwise exp used by the scan; exposed for testing.
void vector_exp(const double* in, double* out, std::size_t n);

struct DiscretizedStep {
  double a_bar;
  double b_bar;
};

// Below this |Delta * A| the ZOH input gain falls back to its limit Delta * B.
inline constexpr double kZohSeriesThreshold = 1e-8;

DiscretizedStep discretize(double a, double b, double delta, Discretization mode);

// Row-major E x N array, the per-timestep shape of the SSM state.
using StateArray = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Diagonal linear recurrence over one sequence with per-timestep parameters:
//   h_t = A_bar_t * h_{t-1} + B_bar_t * u_t,   y_t = C_t . h_t,   h_{first_valid - 1} = 0
// Shapes: u, delta: T x E; b, c: T x N; a: E x N (continuous, typically negative).
// Rows before first_valid produce zero output.
class SsmScan {
 public:
  SsmScan(std::size_t length, std::size_t channels, std::size_t state, Discretization mode);

  // Scratch depends only on E and N, so one instance serves windows of any length.
  void set_length(std::size_t length) { length_ = length; }

  void forward(const Eigen::Ref<const Matrix>& u, const Eigen::Ref<const Matrix>& delta,
               const Eigen::Ref<const Matrix>& b, const Eigen::Ref<const Matrix>& c,
               const Matrix& a, std::size_t first_valid, Eigen::Ref<Matrix> y);

  // Re-runs the forward recurrence to recover states, then propagates dy
  // backwards through time. du/ddelta/db/dc are overwritten, da accumulates.
  void backward(const Eigen::Ref<const Matrix>& u, const Eigen::Ref<const Matrix>& delta,
                const Eigen::Ref<const Matrix>& b, const Eigen::Ref<const Matrix>& c,
                const Matrix& a, std::size_t first_valid, const Eigen::Ref<const Matrix>& dy,
                Eigen::Ref<Matrix> du, Eigen::Ref<Matrix> ddelta, Eigen::Ref<Matrix> db,
                Eigen::Ref<Matrix> dc, Matrix& da);

 private:
  // Fills a_bar / psi (length N) for channel e at step size dt.
  void channel_coefficients(double dt, std::size_t e, double* a_bar, double* psi);
  void prepare(const Matrix& a);

  std::size_t length_;
  std::size_t channels_;
  std::size_t state_;
  Discretization mode_;
  // scratch, reused across calls
  std::vector<double> a_;      // A, E x N
  std::vector<double> inv_a_;  // 1 / A
  std::vector<double> s_;      // Delta * A for one channel
  std::vector<double> ab_;
  std::vector<double> ps_;
  std::vector<double> zeros_;
  std::vector<double> h_;
  std::vector<double> adj_;
  // per-step states and A_bar, for the backward sweep
  std::vector<double> h_hist_;
  std::vector<double> ab_hist_;
};

}  // namespace m2rec
