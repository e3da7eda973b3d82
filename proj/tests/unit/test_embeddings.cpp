#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "m2rec/embeddings.hpp"
#include "m2rec/error.hpp"
#include "oracles.hpp"

using namespace m2rec;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("m2rec_test_" + name);
}

}  // namespace

TEST_CASE("lookup") {
  Matrix w(3, 2);
  w << 0, 0, 1, 2, 3, 4;
  const std::vector<ItemId> window{1, 2};
  Matrix expect(2, 2);
  expect << 1, 2, 3, 4;
  CHECK(embed_sequence(w, window) == expect);

  const std::vector<ItemId> pad{0, 0, 0};
  CHECK(embed_sequence(w, pad).isZero(0.0));
  const std::vector<ItemId> bad{1, 3};
  CHECK_THROWS_AS(embed_sequence(w, bad), LookupError);
  const std::vector<ItemId> negative{-1};
  CHECK_THROWS_AS(embed_sequence(w, negative), LookupError);
}

TEST_CASE("dropout") {
  const Matrix w = oracle::random_matrix(10, 6, 1);
  const std::vector<ItemId> window{0, 3, 5, 9, 1};
  CHECK(embed_sequence(w, window, 0.0, 7) == embed_sequence(w, window));
  const Matrix a = embed_sequence(w, window, 0.2, 7);
  CHECK(a == embed_sequence(w, window, 0.2, 7));
  CHECK(a != embed_sequence(w, window, 0.2, 8));

  // inverted dropout: kept entries scaled by 1/(1-p), roughly a fraction p zeroed
  Matrix mask(200, 50);
  dropout_mask(3, 0.2, mask);
  std::size_t zeros = 0;
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    const double m = mask.data()[i];
    CHECK((m == 0.0 || m == 1.0 / 0.8));
    zeros += m == 0.0;
  }
  CHECK(std::abs(static_cast<double>(zeros) / 10000.0 - 0.2) < 0.02);
  CHECK_THROWS_AS(dropout_mask(3, 1.0, mask), ParameterError);
}

TEST_CASE("lookup is linear in the table") {
  const Matrix w1 = oracle::random_matrix(8, 4, 2);
  const Matrix w2 = oracle::random_matrix(8, 4, 3);
  const std::vector<ItemId> window{0, 7, 2, 2, 5};
  const Matrix lhs = embed_sequence(1.5 * w1 - 0.25 * w2, window);
  const Matrix rhs = 1.5 * embed_sequence(w1, window) - 0.25 * embed_sequence(w2, window);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("semantic file round trip") {
  const auto path = temp_file("semantic.bin");
  Matrix rows(3, 4);
  rows << 0.5, -1.25, 3.0, 0.0, 1.0, 2.0, 4.0, 8.0, -0.125, 0.25, 16.0, 1e-3;
  write_semantic(path, rows);
  const auto table = import_semantic(path, 3);
  REQUIRE(table.raw.rows() == 4);
  REQUIRE(table.dim() == 4);
  CHECK(table.raw.row(0).isZero(0.0));
  // stored as float32, so compare against the float-rounded values
  for (Eigen::Index i = 0; i < 3; ++i)
    for (Eigen::Index j = 0; j < 4; ++j)
      CHECK(table.raw(i + 1, j) == static_cast<double>(static_cast<float>(rows(i, j))));
  CHECK(table.missing_rows == 0);

  SUBCASE("vocabulary larger than the file") {
    const auto bigger = import_semantic(path, 5);
    CHECK(bigger.missing_rows == 2);
    CHECK(bigger.raw.rows() == 6);
    CHECK(bigger.raw.bottomRows(2).isZero(0.0));
  }
  SUBCASE("file larger than the vocabulary") {
    CHECK_THROWS_AS(import_semantic(path, 2), FormatError);
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(import_semantic(path, 3, 5), FormatError);
  }
  SUBCASE("corrupted magic") {
    {
      std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
      f.seekp(0);
      f.put('X');
    }
    CHECK_THROWS_AS(import_semantic(path, 3), FormatError);
  }
  SUBCASE("truncated payload") {
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 3);
    CHECK_THROWS_AS(import_semantic(path, 3), FormatError);
  }
  std::filesystem::remove(path);
}

TEST_CASE("text fallback") {
  const auto path = temp_file("semantic.txt");
  {
    std::ofstream out(path);
    out << "1 2 3\n4.5 -6 7e-1\n";
  }
  const Matrix m = read_semantic_text(path);
  Matrix expect(2, 3);
  expect << 1, 2, 3, 4.5, -6, 0.7;
  CHECK(m == expect);
  {
    std::ofstream out(path);
    out << "1 2 3\n4 5\n";
  }
  CHECK_THROWS_AS(read_semantic_text(path), FormatError);
  std::filesystem::remove(path);
}

TEST_CASE("semantic projection") {
  const Matrix raw = oracle::random_matrix(6, 4, 5);
  const std::vector<ItemId> window{0, 2, 5, 1};
  const Matrix bias = Matrix::Zero(1, 4);
  const Matrix ident = Matrix::Identity(4, 4);
  CHECK(project_semantic(raw, ident, bias, window) == embed_sequence(raw, window));
  CHECK(project_semantic(raw, Matrix::Zero(4, 3), Matrix::Zero(1, 3), window).isZero(0.0));

  // d(sum(G .* out)) / d projection = lookup^T G, checked against central differences
  Matrix proj = oracle::random_matrix(4, 3, 6);
  Matrix b = oracle::random_matrix(1, 3, 7);
  const Matrix g = oracle::random_matrix(4, 3, 8);
  const Matrix lookup = embed_sequence(raw, window);
  const Matrix analytic = lookup.transpose() * g;
  const Matrix analytic_b = g.colwise().sum();
  const auto f = [&] { return project_semantic(raw, proj, b, window).cwiseProduct(g).sum(); };
  CHECK(oracle::check_gradient(proj, analytic, f).max_rel < 1e-4);
  CHECK(oracle::check_gradient(b, analytic_b, f).max_rel < 1e-4);
}
