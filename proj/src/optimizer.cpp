#include "m2rec/optimizer.hpp"

#include <cmath>

#include "m2rec/error.hpp"

namespace m2rec {

void adam_update(Matrix& w, const Matrix& g, Matrix& m, Matrix& v, std::size_t step,
                 const AdamConfig& c) {
  m = c.beta1 * m + (1.0 - c.beta1) * g;
  v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseAbs2();
  const double k = static_cast<double>(step);
  const double c1 = 1.0 - std::pow(c.beta1, k);
  const double c2 = 1.0 - std::pow(c.beta2, k);
  w.array() -= c.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + c.eps);
}

Adam::Adam(AdamConfig config, const Params& like)
    : config_(config), m_(Params::zeros_like(like)), v_(Params::zeros_like(like)) {}

void Adam::step(Params& params, const Params& grads) {
  ++steps_;
  auto p = params.named();
  auto g = const_cast<Params&>(grads).named();
  auto m = m_.named();
  auto v = v_.named();
  if (p.size() != g.size() || p.size() != m.size())
    throw ContractError("adam: gradient set does not match the parameters");
  for (std::size_t i = 0; i < p.size(); ++i)
    adam_update(*p[i].second, *g[i].second, *m[i].second, *v[i].second, steps_, config_);
  params.item_embedding.row(0).setZero();
}

double global_norm(Params& grads) {
  double sq = 0.0;
  grads.visit([&](const std::string&, Matrix& m) { sq += m.squaredNorm(); });
  return std::sqrt(sq);
}

double clip_global_norm(Params& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    grads.visit([&](const std::string&, Matrix& m) { m *= scale; });
  }
  return norm;
}

void check_finite(Params& grads) {
  grads.visit([](const std::string& name, Matrix& m) {
    if (!m.allFinite()) throw NumericError("non-finite gradient in " + name);
  });
}

}  // namespace m2rec
