#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "m2rec/checkpoint.hpp"
#include "m2rec/error.hpp"
#include "m2rec/model.hpp"
#include "m2rec/optimizer.hpp"
#include "oracles.hpp"

using namespace m2rec;

namespace {

Params small_params() {
  Params p;
  p.item_embedding = oracle::random_matrix(5, 3, 1);
  p.item_embedding.row(0).setZero();
  p.out_b = oracle::random_matrix(1, 5, 2);
  p.alpha = Matrix::Constant(1, 1, 0.5);
  return p;
}

Params gradients_like(const Params& p, std::uint64_t seed) {
  Params g = Params::zeros_like(p);
  std::uint64_t s = seed;
  g.visit([&](const std::string&, Matrix& m) { m = oracle::random_matrix(m.rows(), m.cols(), s++); });
  return g;
}

}  // namespace

TEST_CASE("first Adam step moves by about lr") {
  Matrix w = Matrix::Constant(1, 1, 1.0);
  const Matrix g = Matrix::Constant(1, 1, 1.0);
  Matrix m = Matrix::Zero(1, 1);
  Matrix v = Matrix::Zero(1, 1);
  adam_update(w, g, m, v, 1, AdamConfig{});
  // m_hat = 1, v_hat = 1, so the step is lr / (1 + eps)
  CHECK(w(0, 0) == doctest::Approx(1.0 - 1e-3 / (1.0 + 1e-8)).epsilon(1e-15));
  CHECK(m(0, 0) == doctest::Approx(0.1));
  CHECK(v(0, 0) == doctest::Approx(0.001));
}

TEST_CASE("Adam on a quadratic follows the closed-form recursion") {
  // f(w) = w^2, g = 2w; replay the recursion by hand
  Matrix w = Matrix::Constant(1, 1, 0.7);
  Matrix m = Matrix::Zero(1, 1);
  Matrix v = Matrix::Zero(1, 1);
  double ww = 0.7;
  double mm = 0.0;
  double vv = 0.0;
  const AdamConfig c{0.05, 0.9, 0.999, 1e-8};
  for (std::size_t t = 1; t <= 20; ++t) {
    const Matrix g = 2.0 * w;
    adam_update(w, g, m, v, t, c);
    const double gg = 2.0 * ww;
    mm = 0.9 * mm + 0.1 * gg;
    vv = 0.999 * vv + 0.001 * gg * gg;
    const double mh = mm / (1.0 - std::pow(0.9, static_cast<double>(t)));
    const double vh = vv / (1.0 - std::pow(0.999, static_cast<double>(t)));
    ww -= 0.05 * mh / (std::sqrt(vh) + 1e-8);
    CHECK(w(0, 0) == doctest::Approx(ww).epsilon(1e-12));
  }
  CHECK(std::abs(ww) < 0.7);
}

TEST_CASE("zero gradients leave parameters unchanged") {
  Params p = small_params();
  const Params before = p;
  Adam opt(AdamConfig{}, p);
  opt.step(p, gradients_like(p, 3));
  Params zero = Params::zeros_like(p);
  const Matrix m_before = opt.first_moment().out_b;
  opt.step(p, zero);
  // moments decay, the update is driven only by the decayed first moment
  CHECK((opt.first_moment().out_b - 0.9 * m_before).cwiseAbs().maxCoeff() < 1e-15);

  Params fresh = before;
  Adam idle(AdamConfig{}, fresh);
  idle.step(fresh, Params::zeros_like(fresh));
  CHECK(fresh.out_b == before.out_b);
  CHECK(fresh.item_embedding == before.item_embedding);
}

TEST_CASE("padding row stays zero") {
  Params p = small_params();
  Adam opt(AdamConfig{}, p);
  for (int i = 0; i < 5; ++i) {
    Params g = gradients_like(p, 10 + i);
    opt.step(p, g);
    CHECK(p.item_embedding.row(0).isZero(0.0));
  }
}

TEST_CASE("identical runs are bit-identical") {
  const auto run = [] {
    Params p = small_params();
    Adam opt(AdamConfig{}, p);
    for (int i = 0; i < 8; ++i) opt.step(p, gradients_like(p, 100 + i));
    return p;
  };
  const Params a = run();
  const Params b = run();
  CHECK(a.item_embedding == b.item_embedding);
  CHECK(a.out_b == b.out_b);
  CHECK(a.alpha == b.alpha);
}

TEST_CASE("global norm clipping") {
  Params g = small_params();
  g.item_embedding.setConstant(1.0);  // 15 entries
  g.out_b.setConstant(2.0);           // 5 entries
  g.alpha.setConstant(0.0);
  const double norm = std::sqrt(15.0 + 20.0);
  CHECK(global_norm(g) == doctest::Approx(norm));
  CHECK(clip_global_norm(g, 5.0) == doctest::Approx(norm));
  CHECK(global_norm(g) == doctest::Approx(5.0));
  const Matrix before = g.out_b;
  CHECK(clip_global_norm(g, 100.0) == doctest::Approx(5.0));
  CHECK(g.out_b == before);
}

TEST_CASE("non-finite gradients are named") {
  Params g = small_params();
  check_finite(g);
  g.out_b(0, 2) = std::numeric_limits<double>::quiet_NaN();
  try {
    check_finite(g);
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("head.out_b") != std::string::npos);
  }
}

TEST_CASE("checkpoint round trip") {
  const auto path = std::filesystem::temp_directory_path() / "m2rec_test_ckpt.bin";
  CheckpointFile f;
  f.meta = {{"epoch", 3}, {"name", "x"}};
  f.tensors["b"] = {oracle::random_matrix(3, 4, 1), DType::kF64};
  f.tensors["a"] = {oracle::random_matrix(1, 7, 2), DType::kF64};
  f.tensors["c"] = {oracle::random_matrix(2, 2, 3), DType::kF32};
  write_checkpoint(path, f);
  const auto back = read_checkpoint(path);
  CHECK(back.meta == f.meta);
  CHECK(back.tensor("a") == f.tensors["a"].data);
  CHECK(back.tensor("b") == f.tensors["b"].data);
  CHECK(back.tensor("c") == f.tensors["c"].data.cast<float>().cast<double>());
  CHECK(back.tensors.at("c").dtype == DType::kF32);
  CHECK_THROWS_AS(back.tensor("missing"), FormatError);
  CHECK(!std::filesystem::exists(path.string() + ".tmp"));

  // same content, same bytes
  const auto path2 = std::filesystem::temp_directory_path() / "m2rec_test_ckpt2.bin";
  write_checkpoint(path2, back);
  const auto bytes = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  CHECK(bytes(path) == bytes(path2));

  SUBCASE("bad magic") {
    std::fstream io(path, std::ios::in | std::ios::out | std::ios::binary);
    io.seekp(1);
    io.put('Z');
    io.close();
    CHECK_THROWS_AS(read_checkpoint(path), FormatError);
  }
  SUBCASE("truncation") {
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 5);
    CHECK_THROWS_AS(read_checkpoint(path), FormatError);
  }
  SUBCASE("trailing bytes") {
    std::ofstream(path, std::ios::binary | std::ios::app) << "x";
    CHECK_THROWS_AS(read_checkpoint(path), FormatError);
  }
  std::filesystem::remove(path);
  std::filesystem::remove(path2);
}
