#include "m2rec/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "m2rec/error.hpp"

namespace m2rec {
namespace {

struct RowResult {
  double omega;
  std::size_t terms;
};

// scores[first, end) are the candidate items; target indexes into that range.
RowResult row_loss(const double* scores, std::size_t count, std::size_t target, LossMode mode,
                   double scale, double* grad) {
  for (std::size_t i = 0; i < count; ++i)
    if (!std::isfinite(scores[i])) throw NumericError("loss: non-finite score");
  if (target >= count) throw ContractError("loss: target outside the catalogue");

  if (mode == LossMode::kSoftmaxCe) {
    const double top = *std::max_element(scores, scores + count);
    double sum = 0.0;
    for (std::size_t i = 0; i < count; ++i) sum += std::exp(scores[i] - top);
    const double log_z = top + std::log(sum);
    if (grad != nullptr) {
      for (std::size_t i = 0; i < count; ++i) grad[i] = scale * std::exp(scores[i] - log_z);
      grad[target] -= scale;
    }
    return {scores[target] - log_z, 1};
  }

  double omega = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double raw = 1.0 / (1.0 + std::exp(-scores[i]));
    const double p = std::clamp(raw, kProbabilityFloor, 1.0 - kProbabilityFloor);
    const bool clamped = p != raw;
    const double y = i == target ? 1.0 : 0.0;
    omega += y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    if (grad != nullptr) grad[i] = clamped ? 0.0 : scale * (raw - y);
  }
  return {omega, count};
}

}  // namespace

LossReport loss(std::span<const double> scores, std::size_t target, LossMode mode) {
  if (scores.empty()) throw ContractError("loss: empty score vector");
  const RowResult r = row_loss(scores.data(), scores.size(), target, mode, 1.0, nullptr);
  return {-r.omega, r.omega, r.terms};
}

LossReport batch_loss(const Matrix& scores, std::span<const ItemId> targets, LossMode mode,
                      double normalizer, Matrix* d_scores) {
  if (static_cast<std::size_t>(scores.rows()) != targets.size())
    throw ContractError("batch_loss: one target per score row required");
  if (!(normalizer > 0.0)) throw ContractError("batch_loss: normalizer must be positive");
  const auto items = static_cast<std::size_t>(scores.cols()) - 1;
  if (d_scores != nullptr) d_scores->setZero(scores.rows(), scores.cols());
  LossReport report;
  const double scale = 1.0 / normalizer;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const ItemId target = targets[static_cast<std::size_t>(i)];
    if (target < 1) throw ContractError("batch_loss: padding target");
    double* grad = d_scores != nullptr ? d_scores->row(i).data() + 1 : nullptr;
    const RowResult r = row_loss(scores.row(i).data() + 1, items,
                                 static_cast<std::size_t>(target) - 1, mode, scale, grad);
    report.omega_sum += r.omega;
    report.terms += r.terms;
  }
  report.value = -report.omega_sum / normalizer;
  return report;
}

}  // namespace m2rec
