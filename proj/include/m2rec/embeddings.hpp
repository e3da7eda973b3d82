#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>

#include "m2rec/types.hpp"

namespace m2rec {

// Default drop ratio for the ID-embedding path.
inline constexpr double kDefaultDropout = 0.2;

// Row t = table[window[t]]. Row 0 of the table is the padding row.
Matrix embed_sequence(const Matrix& table, std::span<const ItemId> window);

// Training-mode lookup with inverted dropout (kept entries scaled by 1/(1-ratio)).
// The mask is a pure function of the seed.
Matrix embed_sequence(const Matrix& table, std::span<const ItemId> window, double dropout,
                      std::uint64_t seed);

// Fills `mask` with 0 or 1/(1-ratio) entries drawn from a generator seeded by `seed`.
void dropout_mask(std::uint64_t seed, double ratio, Eigen::Ref<Matrix> mask);

// Imported semantic item embeddings, rows aligned to vocabulary indices
// (row 0 is the zero padding row). Never updated by training.
struct SemanticTable {
  Matrix raw;                  // (|V| + 1) x d_l
  std::size_t missing_rows = 0;  // vocabulary items the file did not cover

  std::size_t dim() const { return static_cast<std::size_t>(raw.cols()); }
};

// Binary layout: magic "M2EMB\0", then little-endian u32 version (1), u32
// row_count, u32 dim, then row_count * dim little-endian float32, row-major,
// rows in vocabulary order.
inline constexpr char kSemanticMagic[6] = {'M', '2', 'E', 'M', 'B', '\0'};
inline constexpr std::uint32_t kSemanticVersion = 1;

SemanticTable import_semantic(const std::filesystem::path& path, std::size_t vocab_size,
                              std::size_t expected_dim = 0);
void write_semantic(const std::filesystem::path& path, const Matrix& rows);
// Plain-text fallback: one row per line, whitespace separated numbers.
Matrix read_semantic_text(const std::filesystem::path& path);

// Row t = raw[window[t]] * projection + bias.
Matrix project_semantic(const Matrix& raw, const Matrix& projection, const Matrix& bias,
                        std::span<const ItemId> window);

}  // namespace m2rec
