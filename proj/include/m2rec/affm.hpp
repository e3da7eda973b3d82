#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "m2rec/ssm.hpp"
#include "m2rec/types.hpp"

namespace m2rec {

struct AffmDims {
  std::size_t model = 64;     // d
  std::size_t state = 32;     // N
  std::size_t expand = 4;
  std::size_t conv_width = 2;
  std::size_t dt_rank = 0;    // 0 -> ceil(d / 16)

  std::size_t inner() const { return expand * model; }
  std::size_t rank() const { return dt_rank != 0 ? dt_rank : (model + 15) / 16; }
};

// One block: in_proj splits into a scan branch and a gate branch; the scan
// branch goes SiLU -> causal depthwise conv -> selective scan, the gate
// branch through SiLU; their product is projected back to d, added to the
// block input and layer-normalised.
struct AffmLayerParams {
  Matrix in_proj;   // d x 2E
  Matrix conv_w;    // E x K; column k multiplies the input k - (K - 1) steps back
  Matrix conv_b;    // 1 x E
  Matrix x_proj;    // E x (R + 2N): [dt low-rank | B | C]
  Matrix dt_proj;   // R x E
  Matrix dt_bias;   // 1 x E
  Matrix a_log;     // E x N, A = -exp(a_log)
  Matrix out_proj;  // E x d
  Matrix ln_gain;   // 1 x d
  Matrix ln_bias;   // 1 x d

  static AffmLayerParams init(const AffmDims& dims, std::mt19937_64& rng);
  static AffmLayerParams zeros_like(const AffmLayerParams& other);

  Matrix a() const { return -a_log.array().exp().matrix(); }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + "in_proj", in_proj);
    f(prefix + "conv_w", conv_w);
    f(prefix + "conv_b", conv_b);
    f(prefix + "x_proj", x_proj);
    f(prefix + "dt_proj", dt_proj);
    f(prefix + "dt_bias", dt_bias);
    f(prefix + "a_log", a_log);
    f(prefix + "out_proj", out_proj);
    f(prefix + "ln_gain", ln_gain);
    f(prefix + "ln_bias", ln_bias);
  }
};

// Windows are stored back to back with their padding dropped: window b owns
// rows [offsets[b], offsets[b + 1]), all of them real positions.
struct RowLayout {
  std::vector<std::size_t> offsets{0};

  // Packs windows of a padded T-grid given each window's first valid index.
  static RowLayout packed(std::size_t length, std::span<const std::size_t> first_valid);
  static RowLayout single(std::size_t rows) { return RowLayout{{0, rows}}; }

  std::size_t windows() const { return offsets.size() - 1; }
  std::size_t rows() const { return offsets.back(); }
  std::size_t begin(std::size_t b) const { return offsets[b]; }
  std::size_t size(std::size_t b) const { return offsets[b + 1] - offsets[b]; }
};

struct AffmLayerCache {
  Matrix input;
  Matrix xz;
  Matrix conv_in;   // SiLU of the scan branch
  Matrix u;         // scan input
  Matrix xp;
  Matrix dt_pre;
  Matrix delta;
  Matrix y;
  Matrix gate;      // SiLU of the gate branch
  Matrix xhat;
  Vector rstd;
};

void affm_layer_forward(const AffmLayerParams& p, const AffmDims& dims, Discretization mode,
                        const RowLayout& layout, const Matrix& input, AffmLayerCache* cache,
                        Matrix& output);

// Accumulates parameter gradients into `grads`; overwrites d_input.
void affm_layer_backward(const AffmLayerParams& p, const AffmDims& dims, Discretization mode,
                         const RowLayout& layout, const AffmLayerCache& cache,
                         const Matrix& d_output, Matrix& d_input, AffmLayerParams& grads);

// Delta/B/C projections from u followed by the recurrence; u is T x E.
Matrix selective_scan(const Matrix& u, const AffmLayerParams& p, const AffmDims& dims,
                      Discretization mode, std::size_t first_valid = 0);

// Stacks the blocks over one filtered sequence (T x d).
Matrix affm_forward(const Matrix& filtered, std::span<const AffmLayerParams> layers,
                    const AffmDims& dims, Discretization mode, std::size_t first_valid = 0);

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double silu(double x) { return x * sigmoid(x); }
inline double silu_grad(double x) {
  const double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}
inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

}  // namespace m2rec
