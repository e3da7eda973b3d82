#include "m2rec/affm.hpp"

#include <cmath>

#include "m2rec/error.hpp"

namespace m2rec {
namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kInitStd = 0.02;

Matrix normal(Eigen::Index rows, Eigen::Index cols, double std, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Matrix uniform(Eigen::Index rows, Eigen::Index cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

template <typename F>
Matrix map(const Matrix& m, F f) {
  return m.unaryExpr(f);
}

void check_input(const AffmDims& dims, const RowLayout& layout, const Matrix& input) {
  if (static_cast<std::size_t>(input.rows()) != layout.rows() ||
      static_cast<std::size_t>(input.cols()) != dims.model)
    throw ContractError("affm: input shape does not match the layout");
}

}  // namespace

RowLayout RowLayout::packed(std::size_t length, std::span<const std::size_t> first_valid) {
  RowLayout layout;
  layout.offsets.reserve(first_valid.size() + 1);
  for (std::size_t fv : first_valid) {
    if (fv > length) throw ContractError("affm: first valid index beyond the window");
    layout.offsets.push_back(layout.offsets.back() + (length - fv));
  }
  return layout;
}

AffmLayerParams AffmLayerParams::init(const AffmDims& dims, std::mt19937_64& rng) {
  const auto d = static_cast<Eigen::Index>(dims.model);
  const auto e = static_cast<Eigen::Index>(dims.inner());
  const auto n = static_cast<Eigen::Index>(dims.state);
  const auto k = static_cast<Eigen::Index>(dims.conv_width);
  const auto r = static_cast<Eigen::Index>(dims.rank());
  AffmLayerParams p;
  p.in_proj = normal(d, 2 * e, kInitStd, rng);
  const double conv_bound = 1.0 / std::sqrt(static_cast<double>(k));
  p.conv_w = uniform(e, k, conv_bound, rng);
  p.conv_b = uniform(1, e, conv_bound, rng);
  p.x_proj = normal(e, r + 2 * n, kInitStd, rng);
  p.dt_proj = normal(r, e, kInitStd, rng);
  // softplus(dt_bias) uniform in [1e-3, 1e-1]
  std::uniform_real_distribution<double> dt_dist(1e-3, 1e-1);
  p.dt_bias.resize(1, e);
  for (Eigen::Index c = 0; c < e; ++c) {
    const double dt = dt_dist(rng);
    p.dt_bias(0, c) = dt + std::log(-std::expm1(-dt));
  }
  p.a_log.resize(e, n);
  for (Eigen::Index c = 0; c < e; ++c)
    for (Eigen::Index j = 0; j < n; ++j) p.a_log(c, j) = std::log(static_cast<double>(j + 1));
  p.out_proj = normal(e, d, kInitStd, rng);
  p.ln_gain = Matrix::Ones(1, d);
  p.ln_bias = Matrix::Zero(1, d);
  return p;
}

AffmLayerParams AffmLayerParams::zeros_like(const AffmLayerParams& o) {
  AffmLayerParams p;
  p.in_proj = Matrix::Zero(o.in_proj.rows(), o.in_proj.cols());
  p.conv_w = Matrix::Zero(o.conv_w.rows(), o.conv_w.cols());
  p.conv_b = Matrix::Zero(o.conv_b.rows(), o.conv_b.cols());
  p.x_proj = Matrix::Zero(o.x_proj.rows(), o.x_proj.cols());
  p.dt_proj = Matrix::Zero(o.dt_proj.rows(), o.dt_proj.cols());
  p.dt_bias = Matrix::Zero(o.dt_bias.rows(), o.dt_bias.cols());
  p.a_log = Matrix::Zero(o.a_log.rows(), o.a_log.cols());
  p.out_proj = Matrix::Zero(o.out_proj.rows(), o.out_proj.cols());
  p.ln_gain = Matrix::Zero(o.ln_gain.rows(), o.ln_gain.cols());
  p.ln_bias = Matrix::Zero(o.ln_bias.rows(), o.ln_bias.cols());
  return p;
}

void affm_layer_forward(const AffmLayerParams& p, const AffmDims& dims, Discretization mode,
                        const RowLayout& layout, const Matrix& input, AffmLayerCache* cache,
                        Matrix& output) {
  check_input(dims, layout, input);
  const auto e = static_cast<Eigen::Index>(dims.inner());
  const auto n = static_cast<Eigen::Index>(dims.state);
  const auto r = static_cast<Eigen::Index>(dims.rank());
  const auto k = static_cast<Eigen::Index>(dims.conv_width);
  const auto rows = static_cast<Eigen::Index>(layout.rows());

  AffmLayerCache local;
  AffmLayerCache& c = cache != nullptr ? *cache : local;
  c.input = input;
  c.xz.noalias() = input * p.in_proj;
  c.conv_in = map(c.xz.leftCols(e), silu);

  c.u.resize(rows, e);
  for (std::size_t b = 0; b < layout.windows(); ++b) {
    const auto base = static_cast<Eigen::Index>(layout.begin(b));
    const auto len = static_cast<Eigen::Index>(layout.size(b));
    for (Eigen::Index t = 0; t < len; ++t) {
      auto out = c.u.row(base + t);
      out = p.conv_b.row(0);
      for (Eigen::Index j = 0; j < k; ++j) {
        const Eigen::Index src = t - (k - 1) + j;
        if (src < 0) continue;
        out.array() += p.conv_w.col(j).transpose().array() * c.conv_in.row(base + src).array();
      }
    }
  }

  c.xp.noalias() = c.u * p.x_proj;
  c.dt_pre.noalias() = c.xp.leftCols(r) * p.dt_proj;
  c.dt_pre.rowwise() += p.dt_bias.row(0);
  c.delta = map(c.dt_pre, softplus);

  const Matrix a = p.a();
  c.y.resize(rows, e);
  SsmScan scan(0, dims.inner(), dims.state, mode);
  for (std::size_t b = 0; b < layout.windows(); ++b) {
    const auto base = static_cast<Eigen::Index>(layout.begin(b));
    const auto len = static_cast<Eigen::Index>(layout.size(b));
    scan.set_length(layout.size(b));
    scan.forward(c.u.middleRows(base, len), c.delta.middleRows(base, len),
                 c.xp.block(base, r, len, n), c.xp.block(base, r + n, len, n), a, 0,
                 c.y.middleRows(base, len));
  }

  c.gate = map(c.xz.rightCols(e), silu);
  const Matrix resid = input + (c.y.cwiseProduct(c.gate)) * p.out_proj;

  const auto d = resid.cols();
  c.xhat.resize(rows, d);
  c.rstd.resize(rows);
  output.resize(rows, d);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double mean = resid.row(i).mean();
    const double var = (resid.row(i).array() - mean).square().mean();
    const double rstd = 1.0 / std::sqrt(var + kLayerNormEps);
    c.rstd(i) = rstd;
    c.xhat.row(i) = (resid.row(i).array() - mean) * rstd;
    output.row(i) = c.xhat.row(i).cwiseProduct(p.ln_gain.row(0)) + p.ln_bias.row(0);
  }
}

void affm_layer_backward(const AffmLayerParams& p, const AffmDims& dims, Discretization mode,
                         const RowLayout& layout, const AffmLayerCache& c,
                         const Matrix& d_output, Matrix& d_input, AffmLayerParams& g) {
  const auto e = static_cast<Eigen::Index>(dims.inner());
  const auto n = static_cast<Eigen::Index>(dims.state);
  const auto r = static_cast<Eigen::Index>(dims.rank());
  const auto k = static_cast<Eigen::Index>(dims.conv_width);
  const auto rows = static_cast<Eigen::Index>(layout.rows());
  const auto d = static_cast<Eigen::Index>(dims.model);

  // layer norm
  Matrix d_resid = Matrix::Zero(rows, d);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const RowVector dy = d_output.row(i);
    g.ln_gain.row(0) += dy.cwiseProduct(c.xhat.row(i));
    g.ln_bias.row(0) += dy;
    const RowVector dxhat = dy.cwiseProduct(p.ln_gain.row(0));
    const double m1 = dxhat.mean();
    const double m2 = dxhat.cwiseProduct(c.xhat.row(i)).mean();
    d_resid.row(i) = c.rstd(i) * (dxhat.array() - m1 - c.xhat.row(i).array() * m2).matrix();
  }

  const Matrix yg = c.y.cwiseProduct(c.gate);
  g.out_proj.noalias() += yg.transpose() * d_resid;
  const Matrix d_yg = d_resid * p.out_proj.transpose();
  const Matrix d_y = d_yg.cwiseProduct(c.gate);
  Matrix d_xz(rows, 2 * e);
  d_xz.rightCols(e) = d_yg.cwiseProduct(c.y).cwiseProduct(map(c.xz.rightCols(e), silu_grad));

  // scan
  const Matrix a = p.a();
  Matrix d_u(rows, e);
  Matrix d_delta(rows, e);
  Matrix d_xp(rows, r + 2 * n);
  Matrix d_a = Matrix::Zero(e, n);
  SsmScan scan(0, dims.inner(), dims.state, mode);
  for (std::size_t b = 0; b < layout.windows(); ++b) {
    const auto base = static_cast<Eigen::Index>(layout.begin(b));
    const auto len = static_cast<Eigen::Index>(layout.size(b));
    scan.set_length(layout.size(b));
    scan.backward(c.u.middleRows(base, len), c.delta.middleRows(base, len),
                  c.xp.block(base, r, len, n), c.xp.block(base, r + n, len, n), a, 0,
                  d_y.middleRows(base, len), d_u.middleRows(base, len),
                  d_delta.middleRows(base, len), d_xp.block(base, r, len, n),
                  d_xp.block(base, r + n, len, n), d_a);
  }
  g.a_log.array() += d_a.array() * a.array();

  const Matrix d_dt_pre =
      d_delta.cwiseProduct(c.dt_pre.unaryExpr([](double x) { return sigmoid(x); }));
  g.dt_bias.row(0) += d_dt_pre.colwise().sum();
  g.dt_proj.noalias() += c.xp.leftCols(r).transpose() * d_dt_pre;
  d_xp.leftCols(r).noalias() = d_dt_pre * p.dt_proj.transpose();

  g.x_proj.noalias() += c.u.transpose() * d_xp;
  d_u.noalias() += d_xp * p.x_proj.transpose();

  // causal depthwise conv
  Matrix d_conv_in = Matrix::Zero(rows, e);
  for (std::size_t b = 0; b < layout.windows(); ++b) {
    const auto base = static_cast<Eigen::Index>(layout.begin(b));
    const auto len = static_cast<Eigen::Index>(layout.size(b));
    for (Eigen::Index t = 0; t < len; ++t) {
      const auto du = d_u.row(base + t);
      g.conv_b.row(0) += du;
      for (Eigen::Index j = 0; j < k; ++j) {
        const Eigen::Index src = t - (k - 1) + j;
        if (src < 0) continue;
        g.conv_w.col(j).array() += (du.array() * c.conv_in.row(base + src).array()).transpose();
        d_conv_in.row(base + src).array() += du.array() * p.conv_w.col(j).transpose().array();
      }
    }
  }
  d_xz.leftCols(e) = d_conv_in.cwiseProduct(map(c.xz.leftCols(e), silu_grad));

  g.in_proj.noalias() += c.input.transpose() * d_xz;
  d_input = d_resid;
  d_input.noalias() += d_xz * p.in_proj.transpose();
}

Matrix selective_scan(const Matrix& u, const AffmLayerParams& p, const AffmDims& dims,
                      Discretization mode, std::size_t first_valid) {
  const auto e = static_cast<Eigen::Index>(dims.inner());
  const auto n = static_cast<Eigen::Index>(dims.state);
  const auto r = static_cast<Eigen::Index>(dims.rank());
  if (u.cols() != e) throw ContractError("selective_scan: input width must equal expand * d");
  const Matrix xp = u * p.x_proj;
  Matrix dt_pre = xp.leftCols(r) * p.dt_proj;
  dt_pre.rowwise() += p.dt_bias.row(0);
  const Matrix delta = map(dt_pre, softplus);
  Matrix y(u.rows(), e);
  SsmScan scan(static_cast<std::size_t>(u.rows()), dims.inner(), dims.state, mode);
  scan.forward(u, delta, xp.middleCols(r, n), xp.rightCols(n), p.a(), first_valid, y);
  if (!y.allFinite()) throw NumericError("selective_scan: non-finite output");
  return y;
}

Matrix affm_forward(const Matrix& filtered, std::span<const AffmLayerParams> layers,
                    const AffmDims& dims, Discretization mode, std::size_t first_valid) {
  const auto total = filtered.rows();
  if (first_valid > static_cast<std::size_t>(total))
    throw ContractError("affm: first valid index beyond the window");
  const auto valid = total - static_cast<Eigen::Index>(first_valid);
  const RowLayout layout = RowLayout::single(static_cast<std::size_t>(valid));
  Matrix h = filtered.bottomRows(valid);
  Matrix out;
  for (const auto& layer : layers) {
    affm_layer_forward(layer, dims, mode, layout, h, nullptr, out);
    h.swap(out);
  }
  Matrix result = Matrix::Zero(total, filtered.cols());
  result.bottomRows(valid) = h;
  return result;
}

}  // namespace m2rec
