#include "m2rec/embeddings.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "m2rec/error.hpp"
#include "m2rec/log.hpp"

namespace m2rec {
namespace {

void check_index(const Matrix& table, ItemId item) {
  if (item < 0 || item >= table.rows())
    throw LookupError("embedding lookup: item index " + std::to_string(item) + " out of range");
}

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw FormatError("semantic file: truncated header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

Matrix embed_sequence(const Matrix& table, std::span<const ItemId> window) {
  Matrix out(static_cast<Eigen::Index>(window.size()), table.cols());
  for (std::size_t t = 0; t < window.size(); ++t) {
    check_index(table, window[t]);
    out.row(static_cast<Eigen::Index>(t)) = table.row(window[t]);
  }
  return out;
}

void dropout_mask(std::uint64_t seed, double ratio, Eigen::Ref<Matrix> mask) {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw ParameterError("dropout ratio must lie in [0, 1)");
  if (ratio == 0.0) {
    mask.setOnes();
    return;
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double keep = 1.0 / (1.0 - ratio);
  for (Eigen::Index i = 0; i < mask.rows(); ++i)
    for (Eigen::Index j = 0; j < mask.cols(); ++j) mask(i, j) = unit(rng) < ratio ? 0.0 : keep;
}

Matrix embed_sequence(const Matrix& table, std::span<const ItemId> window, double dropout,
                      std::uint64_t seed) {
  Matrix out = embed_sequence(table, window);
  if (dropout == 0.0) return out;
  Matrix mask(out.rows(), out.cols());
  dropout_mask(seed, dropout, mask);
  return out.cwiseProduct(mask);
}

SemanticTable import_semantic(const std::filesystem::path& path, std::size_t vocab_size,
                              std::size_t expected_dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open semantic file " + path.string());
  char magic[sizeof(kSemanticMagic)];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kSemanticMagic, sizeof magic) != 0)
    throw FormatError("semantic file " + path.string() + ": bad magic");
  const std::uint32_t version = get_u32(in);
  if (version != kSemanticVersion)
    throw FormatError("semantic file: unsupported version " + std::to_string(version));
  const std::uint32_t rows = get_u32(in);
  const std::uint32_t dim = get_u32(in);
  if (dim == 0) throw FormatError("semantic file: zero dimension");
  if (expected_dim != 0 && dim != expected_dim)
    throw FormatError("semantic file: dimension " + std::to_string(dim) + " != expected " +
                      std::to_string(expected_dim));
  if (rows > vocab_size)
    throw FormatError("semantic file: " + std::to_string(rows) + " rows for a vocabulary of " +
                      std::to_string(vocab_size));

  SemanticTable table;
  table.raw = Matrix::Zero(static_cast<Eigen::Index>(vocab_size) + 1, dim);
  std::vector<unsigned char> buf(static_cast<std::size_t>(dim) * 4);
  for (std::uint32_t r = 0; r < rows; ++r) {
    if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
      throw FormatError("semantic file: truncated at row " + std::to_string(r));
    for (std::uint32_t c = 0; c < dim; ++c) {
      const unsigned char* p = buf.data() + 4 * c;
      const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) |
                                 (static_cast<std::uint32_t>(p[1]) << 8) |
                                 (static_cast<std::uint32_t>(p[2]) << 16) |
                                 (static_cast<std::uint32_t>(p[3]) << 24);
      table.raw(r + 1, c) = static_cast<double>(std::bit_cast<float>(bits));
    }
  }
  if (in.peek() != std::char_traits<char>::eof())
    throw FormatError("semantic file: trailing bytes after " + std::to_string(rows) + " rows");
  table.missing_rows = vocab_size - rows;
  if (table.missing_rows > 0)
    log::warn("semantic file covers ", rows, " of ", vocab_size, " items; ", table.missing_rows,
              " rows left at zero");
  return table;
}

void write_semantic(const std::filesystem::path& path, const Matrix& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write semantic file " + path.string());
  out.write(kSemanticMagic, sizeof kSemanticMagic);
  put_u32(out, kSemanticVersion);
  put_u32(out, static_cast<std::uint32_t>(rows.rows()));
  put_u32(out, static_cast<std::uint32_t>(rows.cols()));
  for (Eigen::Index r = 0; r < rows.rows(); ++r)
    for (Eigen::Index c = 0; c < rows.cols(); ++c) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(rows(r, c))));
  if (!out) throw FormatError("failed writing semantic file " + path.string());
}

Matrix read_semantic_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::vector<double> row;
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ParseError("not a number: '" + tok + "'", line_no);
      }
    }
    if (row.empty()) continue;
    if (!rows.empty() && row.size() != rows.front().size())
      throw FormatError("line " + std::to_string(line_no) + ": expected " +
                        std::to_string(rows.front().size()) + " values, got " +
                        std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError("no rows in " + path.string());
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return m;
}

Matrix project_semantic(const Matrix& raw, const Matrix& projection, const Matrix& bias,
                        std::span<const ItemId> window) {
  if (projection.rows() != raw.cols() || bias.cols() != projection.cols())
    throw ContractError("project_semantic: projection shape mismatch");
  Matrix out = embed_sequence(raw, window) * projection;
  out.rowwise() += bias.row(0);
  return out;
}

}  // namespace m2rec
