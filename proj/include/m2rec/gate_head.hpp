#pragma once

#include <cstddef>

#include "m2rec/types.hpp"

namespace m2rec {

// How the semantic and temporal representations are combined before the
// output projection.
enum class Fusion {
  kGate,          // alpha * e_l + beta * e_m
  kConcat,        // [e_l, e_m] -> linear
  kTemporalOnly,  // e_m alone (semantic branch removed)
};

struct GateHead {
  double alpha = 0.5;
  double beta = 0.5;
  Matrix out_w;  // d x (|V| + 1), column 0 is the padding item
  Matrix out_b;  // 1 x (|V| + 1)
};

inline constexpr double kInitialGate = 0.5;

// Scores every catalogue item from the last row of e_l and e_m (T x d).
// Entry 0 (padding) is -inf. Throws ContractError for an all-padding window.
Vector fuse_and_score(const Matrix& e_l, const Matrix& e_m, const GateHead& head,
                      std::size_t first_valid);

}  // namespace m2rec
