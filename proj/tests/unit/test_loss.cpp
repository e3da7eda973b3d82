#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "m2rec/error.hpp"
#include "m2rec/loss.hpp"
#include "oracles.hpp"

using namespace m2rec;

TEST_CASE("softmax examples") {
  const std::vector<double> uniform{0.0, 0.0};
  CHECK(loss(uniform, 0, LossMode::kSoftmaxCe).value == doctest::Approx(std::numbers::ln2).epsilon(1e-14));
  const std::vector<double> sure{20.0, -20.0};
  CHECK(loss(sure, 0, LossMode::kSoftmaxCe).value < 1e-8);
  // stable for large magnitudes
  const std::vector<double> big{1000.0, 999.0};
  CHECK(loss(big, 1, LossMode::kSoftmaxCe).value ==
        doctest::Approx(1.0 + std::log1p(std::exp(-1.0))).epsilon(1e-12));
}

TEST_CASE("binary all-items example") {
  const std::vector<double> uniform{0.0, 0.0};
  const auto r = loss(uniform, 0, LossMode::kBceAllItems);
  CHECK(r.omega_sum == doctest::Approx(2.0 * std::log(0.5)).epsilon(1e-14));
  CHECK(r.value == doctest::Approx(2.0 * std::numbers::ln2).epsilon(1e-14));
  CHECK(r.terms == 2);
  // clamped probabilities keep the loss finite
  const std::vector<double> extreme{-800.0, 800.0};
  const auto c = loss(extreme, 0, LossMode::kBceAllItems);
  CHECK(std::isfinite(c.value));
  // the upper clamp 1 - floor is not exact in binary, so its complement differs slightly
  const double upper = 1.0 - kProbabilityFloor;
  CHECK(c.value == doctest::Approx(-std::log(kProbabilityFloor) - std::log(1.0 - upper)).epsilon(1e-12));
}

TEST_CASE("errors") {
  const std::vector<double> nan{0.0, std::numeric_limits<double>::quiet_NaN()};
  CHECK_THROWS_AS(loss(nan, 0, LossMode::kSoftmaxCe), NumericError);
  const std::vector<double> inf{0.0, std::numeric_limits<double>::infinity()};
  CHECK_THROWS_AS(loss(inf, 0, LossMode::kBceAllItems), NumericError);
  const std::vector<double> ok{0.0, 1.0};
  CHECK_THROWS_AS(loss(ok, 2, LossMode::kSoftmaxCe), ContractError);
  Matrix s = Matrix::Zero(1, 3);
  const std::vector<ItemId> pad{0};
  CHECK_THROWS_AS(batch_loss(s, pad, LossMode::kSoftmaxCe, 1.0, nullptr), ContractError);
}

TEST_CASE("batched loss ignores the padding column and matches central differences") {
  for (auto mode : {LossMode::kSoftmaxCe, LossMode::kBceAllItems}) {
    Matrix scores = oracle::random_matrix(4, 9, 3, 2.0);
    scores.col(0).setConstant(-std::numeric_limits<double>::infinity());
    const std::vector<ItemId> targets{1, 8, 3, 3};
    Matrix grad;
    const auto r = batch_loss(scores, targets, mode, 2.5, &grad);
    CHECK(grad.col(0).isZero(0.0));

    double expect = 0.0;
    for (Eigen::Index i = 0; i < 4; ++i) {
      std::vector<double> row(scores.row(i).data() + 1, scores.row(i).data() + 9);
      expect += loss(row, static_cast<std::size_t>(targets[i]) - 1, mode).value;
    }
    CHECK(r.value == doctest::Approx(expect / 2.5).epsilon(1e-13));

    Matrix inner = scores.rightCols(8);
    const auto f = [&] {
      Matrix s(4, 9);
      s.col(0).setConstant(-std::numeric_limits<double>::infinity());
      s.rightCols(8) = inner;
      return batch_loss(s, targets, mode, 2.5, nullptr).value;
    };
    const Matrix analytic = grad.rightCols(8);
    CHECK(oracle::check_gradient(inner, analytic, f).max_rel < 1e-6);
  }
}

TEST_CASE("saturated predictions give vanishing gradients") {
  Matrix scores = Matrix::Constant(2, 5, -40.0);
  scores(0, 2) = 40.0;
  scores(1, 4) = 40.0;
  const std::vector<ItemId> targets{2, 4};
  Matrix grad;
  const auto r = batch_loss(scores, targets, LossMode::kSoftmaxCe, 2.0, &grad);
  CHECK(r.value < 1e-8);
  CHECK(grad.cwiseAbs().maxCoeff() < 1e-8);
}
