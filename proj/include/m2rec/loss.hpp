#pragma once

#include <cstddef>
#include <span>

#include "m2rec/types.hpp"

namespace m2rec {

enum class LossMode {
  kSoftmaxCe,    // -log softmax(scores)[target]
  kBceAllItems,  // -(1/|U|) sum_t sum_v [y log p + (1 - y) log(1 - p)], p = sigmoid(score)
};

inline constexpr double kProbabilityFloor = 1e-12;

struct LossReport {
  double value = 0.0;      // normalised loss
  double omega_sum = 0.0;  // sum of log-likelihood terms before normalisation
  std::size_t terms = 0;   // (u, t, v) terms (bce) or scored positions (softmax)
};

// Single example over a catalogue without padding entry; target is 0-based.
LossReport loss(std::span<const double> scores, std::size_t target, LossMode mode);

// Batched form over score rows whose column 0 is the padding item (ignored).
// The loss is divided by `normalizer`; d_scores (optional) receives the
// gradient of that normalised loss.
LossReport batch_loss(const Matrix& scores, std::span<const ItemId> targets, LossMode mode,
                      double normalizer, Matrix* d_scores);

}  // namespace m2rec
