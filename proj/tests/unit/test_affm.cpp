#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "m2rec/affm.hpp"
#include "m2rec/error.hpp"
#include "oracles.hpp"

using namespace m2rec;

namespace {

AffmDims small_dims() {
  AffmDims d;
  d.model = 8;
  d.state = 4;
  d.expand = 2;
  d.conv_width = 2;
  return d;
}

Matrix layer_norm(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mean = x.row(i).mean();
    const double var = (x.row(i).array() - mean).square().mean();
    out.row(i) = (x.row(i).array() - mean) / std::sqrt(var + 1e-5);
  }
  return out;
}

// Perturb every tensor so gradient checks do not sit at a symmetric point.
void jitter(AffmLayerParams& p, std::uint64_t seed) {
  std::uint64_t s = seed;
  p.visit("", [&](const std::string&, Matrix& m) {
    m += oracle::random_matrix(m.rows(), m.cols(), ++s, 0.1);
  });
}

}  // namespace

TEST_CASE("initialisation") {
  std::mt19937_64 rng(1);
  AffmDims dims;
  const auto p = AffmLayerParams::init(dims, rng);
  CHECK(p.in_proj.rows() == 64);
  CHECK(p.in_proj.cols() == 512);
  CHECK(p.x_proj.cols() == 4 + 64);
  CHECK(dims.rank() == 4);
  const Matrix a = p.a();
  for (Eigen::Index n = 0; n < 32; ++n) CHECK(a(5, n) == doctest::Approx(-(n + 1.0)));
  for (Eigen::Index c = 0; c < p.dt_bias.cols(); ++c) {
    const double dt = softplus(p.dt_bias(0, c));
    CHECK(dt >= 1e-3 - 1e-12);
    CHECK(dt <= 1e-1 + 1e-12);
  }
  CHECK(p.ln_gain.isOnes());
  CHECK(p.ln_bias.isZero());
}

TEST_CASE("all-zero weights leave the normalised residual path") {
  const AffmDims dims = small_dims();
  std::mt19937_64 rng(2);
  auto p = AffmLayerParams::init(dims, rng);
  p.in_proj.setZero();
  p.x_proj.setZero();
  p.dt_proj.setZero();
  p.out_proj.setZero();
  p.conv_w.setZero();
  p.conv_b.setZero();
  const Matrix x = oracle::random_matrix(10, 8, 3);
  const Matrix y = affm_forward(x, std::span<const AffmLayerParams>(&p, 1), dims,
                                Discretization::kZoh);
  CHECK((y - layer_norm(x)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("single timestep by hand") {
  const AffmDims dims = small_dims();
  std::mt19937_64 rng(4);
  auto p = AffmLayerParams::init(dims, rng);
  jitter(p, 4);
  const Matrix x = oracle::random_matrix(1, 8, 5);
  const Eigen::Index e = 16;
  const Eigen::Index r = 1;
  const Eigen::Index n = 4;
  const Matrix xz = x * p.in_proj;
  RowVector u(e);
  for (Eigen::Index c = 0; c < e; ++c)
    u(c) = p.conv_b(0, c) + p.conv_w(c, 1) * silu(xz(0, c));
  const RowVector xp = u * p.x_proj;
  RowVector y(e);
  for (Eigen::Index c = 0; c < e; ++c) {
    double dt_pre = p.dt_bias(0, c);
    for (Eigen::Index j = 0; j < r; ++j) dt_pre += xp(j) * p.dt_proj(j, c);
    const double dt = softplus(dt_pre);
    double acc = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      const double a = -std::exp(p.a_log(c, k));
      const double b_bar = (std::exp(dt * a) - 1.0) / a * xp(r + k);
      acc += xp(r + n + k) * b_bar * u(c);  // h_1 = B_bar u_1
    }
    y(c) = acc * silu(xz(0, e + c));
  }
  const Matrix resid = x + y * p.out_proj;
  Matrix expect = layer_norm(resid).cwiseProduct(p.ln_gain);
  expect += p.ln_bias;
  const Matrix got = affm_forward(x, std::span<const AffmLayerParams>(&p, 1), dims,
                                  Discretization::kZoh);
  CHECK((got - expect).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("causality") {
  const AffmDims dims = small_dims();
  std::mt19937_64 rng(6);
  auto p = AffmLayerParams::init(dims, rng);
  jitter(p, 6);
  const Matrix x = oracle::random_matrix(16, 8, 7);
  const auto layers = std::span<const AffmLayerParams>(&p, 1);
  const Matrix base = affm_forward(x, layers, dims, Discretization::kZoh);
  for (Eigen::Index t0 : {3, 9, 15}) {
    Matrix xp = x;
    xp.row(t0).array() += 0.5;
    const Matrix y = affm_forward(xp, layers, dims, Discretization::kZoh);
    CHECK((y.topRows(t0) - base.topRows(t0)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((y.row(t0) - base.row(t0)).cwiseAbs().maxCoeff() > 0.0);
  }
}

TEST_CASE("batched layout equals per-sequence evaluation") {
  const AffmDims dims = small_dims();
  std::mt19937_64 rng(8);
  auto p = AffmLayerParams::init(dims, rng);
  jitter(p, 8);
  const std::vector<std::size_t> fv{0, 5, 15};
  const RowLayout layout = RowLayout::packed(16, fv);
  REQUIRE(layout.rows() == 16 + 11 + 1);
  Matrix x = oracle::random_matrix(48, 8, 9);
  for (std::size_t b = 0; b < 3; ++b) x.middleRows(16 * b, fv[b]).setZero();
  Matrix packed(28, 8);
  for (std::size_t b = 0; b < 3; ++b)
    packed.middleRows(layout.begin(b), layout.size(b)) = x.middleRows(16 * b + fv[b], 16 - fv[b]);
  Matrix out;
  affm_layer_forward(p, dims, Discretization::kZoh, layout, packed, nullptr, out);
  for (std::size_t b = 0; b < 3; ++b) {
    const Matrix one = affm_forward(x.middleRows(16 * b, 16),
                                    std::span<const AffmLayerParams>(&p, 1), dims,
                                    Discretization::kZoh, fv[b]);
    CHECK((one.bottomRows(16 - fv[b]) - out.middleRows(layout.begin(b), layout.size(b)))
              .cwiseAbs()
              .maxCoeff() < 1e-12);
    CHECK(one.topRows(fv[b]).cwiseAbs().sum() == 0.0);
  }
}

TEST_CASE("shape mismatch") {
  const AffmDims dims = small_dims();
  std::mt19937_64 rng(1);
  auto p = AffmLayerParams::init(dims, rng);
  const std::vector<std::size_t> fv{0};
  Matrix out;
  CHECK_THROWS_AS(affm_layer_forward(p, dims, Discretization::kZoh, RowLayout::packed(16, fv),
                                     Matrix::Zero(16, 7), nullptr, out),
                  ContractError);
  CHECK_THROWS_AS(selective_scan(Matrix::Zero(4, 3), p, dims, Discretization::kZoh),
                  ContractError);
}

TEST_CASE("block gradients match central differences") {
  const AffmDims dims = small_dims();
  for (auto mode : {Discretization::kZoh, Discretization::kPaper}) {
    std::mt19937_64 rng(11);
    auto p = AffmLayerParams::init(dims, rng);
    jitter(p, 11);
    const std::vector<std::size_t> fv{0, 6};
    const RowLayout layout = RowLayout::packed(16, fv);
    Matrix x = oracle::random_matrix(26, 8, 12);
    const Matrix g = oracle::random_matrix(26, 8, 13);
    const auto f = [&] {
      Matrix y;
      affm_layer_forward(p, dims, mode, layout, x, nullptr, y);
      return y.cwiseProduct(g).sum();
    };
    AffmLayerCache cache;
    Matrix y;
    affm_layer_forward(p, dims, mode, layout, x, &cache, y);
    Matrix dx;
    auto grads = AffmLayerParams::zeros_like(p);
    affm_layer_backward(p, dims, mode, layout, cache, g, dx, grads);

    std::vector<std::pair<std::string, Matrix*>> analytic;
    grads.visit("", [&](const std::string& name, Matrix& m) { analytic.emplace_back(name, &m); });
    std::size_t i = 0;
    p.visit("", [&](const std::string& name, Matrix& m) {
      const auto r = oracle::check_gradient(m, *analytic[i++].second, f);
      INFO(name << " mode " << static_cast<int>(mode) << " worst " << r.worst_analytic << " vs "
                << r.worst_numeric);
      CHECK(r.max_rel < 1e-4);
    });
    Matrix xv = x;
    const auto fx = [&] {
      Matrix out;
      affm_layer_forward(p, dims, mode, layout, xv, nullptr, out);
      return out.cwiseProduct(g).sum();
    };
    const auto rx = oracle::check_gradient(xv, dx, fx);
    CHECK(rx.max_rel < 1e-4);
  }
}
