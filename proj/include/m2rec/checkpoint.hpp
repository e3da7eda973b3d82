#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "json.hpp"
#include "m2rec/types.hpp"

namespace m2rec {

// Layout: "M2CKPT", u32 version, u64 metadata length, metadata JSON, u32
// tensor count, then per tensor: u32 name length, name, u8 dtype (0 = f64,
// 1 = f32), u32 rank, rank x u64 dims, little-endian row-major data.
inline constexpr char kCheckpointMagic[6] = {'M', '2', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { kF64 = 0, kF32 = 1 };

struct StoredTensor {
  Matrix data;
  DType dtype = DType::kF64;
};

struct CheckpointFile {
  nlohmann::json meta;
  std::map<std::string, StoredTensor> tensors;

  const Matrix& tensor(const std::string& name) const;
  bool has(const std::string& name) const { return tensors.count(name) != 0; }
};

// Tensors are written in name order, so equal contents give equal bytes.
void write_checkpoint(const std::filesystem::path& path, const CheckpointFile& file);
CheckpointFile read_checkpoint(const std::filesystem::path& path);

}  // namespace m2rec
