#pragma once

#include <Eigen/Dense>

#include <cstdint>

namespace m2rec {

// Sequences are stored row-per-timestep, so row-major keeps a timestep's
// channels contiguous.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

using ItemId = std::int32_t;
inline constexpr ItemId kPaddingItem = 0;

}  // namespace m2rec
