#pragma once

#include <cstddef>

#include "m2rec/model.hpp"

namespace m2rec {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update of a single tensor; `step` is 1-based.
void adam_update(Matrix& w, const Matrix& g, Matrix& m, Matrix& v, std::size_t step,
                 const AdamConfig& config);

class Adam {
 public:
  Adam(AdamConfig config, const Params& like);

  // Applies one update to every tensor and re-zeroes the padding embedding row.
  void step(Params& params, const Params& grads);

  const AdamConfig& config() const { return config_; }
  std::size_t steps() const { return steps_; }
  void set_steps(std::size_t steps) { steps_ = steps; }
  Params& first_moment() { return m_; }
  Params& second_moment() { return v_; }
  const Params& first_moment() const { return m_; }
  const Params& second_moment() const { return v_; }

 private:
  AdamConfig config_;
  std::size_t steps_ = 0;
  Params m_;
  Params v_;
};

double global_norm(Params& grads);
// Scales grads so their global L2 norm is at most max_norm; returns the norm before scaling.
double clip_global_norm(Params& grads, double max_norm);

// Throws NumericError naming the first tensor holding a NaN or infinity.
void check_finite(Params& grads);

}  // namespace m2rec
