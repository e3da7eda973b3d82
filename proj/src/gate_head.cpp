#include "m2rec/gate_head.hpp"

#include <limits>

#include "m2rec/error.hpp"

namespace m2rec {

Vector fuse_and_score(const Matrix& e_l, const Matrix& e_m, const GateHead& head,
                      std::size_t first_valid) {
  if (e_m.rows() == 0 || first_valid >= static_cast<std::size_t>(e_m.rows()))
    throw ContractError("fuse_and_score: window has no valid position");
  if (e_l.size() != 0 && (e_l.rows() != e_m.rows() || e_l.cols() != e_m.cols()))
    throw ContractError("fuse_and_score: e_l and e_m shapes differ");
  if (head.out_w.rows() != e_m.cols() || head.out_b.cols() != head.out_w.cols())
    throw ContractError("fuse_and_score: output projection shape mismatch");
  const Eigen::Index last = e_m.rows() - 1;
  RowVector z = head.beta * e_m.row(last);
  if (e_l.size() != 0) z += head.alpha * e_l.row(last);
  Vector scores = (z * head.out_w + head.out_b).transpose();
  scores(0) = -std::numeric_limits<double>::infinity();
  return scores;
}

}  // namespace m2rec
