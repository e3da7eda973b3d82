#include "m2rec/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include "m2rec/error.hpp"

namespace m2rec {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little endian");

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in, const char* what) {
  T v;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
    throw FormatError(std::string("checkpoint: truncated ") + what);
  return v;
}

}  // namespace

const Matrix& CheckpointFile::tensor(const std::string& name) const {
  const auto it = tensors.find(name);
  if (it == tensors.end()) throw FormatError("checkpoint: missing tensor " + name);
  return it->second.data;
}

void write_checkpoint(const std::filesystem::path& path, const CheckpointFile& file) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write checkpoint " + path.string());
    out.write(kCheckpointMagic, sizeof kCheckpointMagic);
    put<std::uint32_t>(out, kCheckpointVersion);
    const std::string meta = file.meta.dump();
    put<std::uint64_t>(out, meta.size());
    out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(file.tensors.size()));
    for (const auto& [name, t] : file.tensors) {
      put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      put<std::uint8_t>(out, static_cast<std::uint8_t>(t.dtype));
      put<std::uint32_t>(out, 2);
      put<std::uint64_t>(out, static_cast<std::uint64_t>(t.data.rows()));
      put<std::uint64_t>(out, static_cast<std::uint64_t>(t.data.cols()));
      if (t.dtype == DType::kF64) {
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  static_cast<std::streamsize>(t.data.size() * sizeof(double)));
      } else {
        std::vector<float> buf(static_cast<std::size_t>(t.data.size()));
        for (Eigen::Index i = 0; i < t.data.size(); ++i) buf[i] = static_cast<float>(t.data.data()[i]);
        out.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size() * sizeof(float)));
      }
    }
    if (!out) throw FormatError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

CheckpointFile read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  char magic[sizeof kCheckpointMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw FormatError(path.string() + " is not a checkpoint (bad magic)");
  const auto version = get<std::uint32_t>(in, "header");
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  const auto meta_len = get<std::uint64_t>(in, "header");
  if (meta_len > (1ull << 32)) throw FormatError("checkpoint: implausible metadata length");
  std::string meta(meta_len, '\0');
  if (!in.read(meta.data(), static_cast<std::streamsize>(meta_len)))
    throw FormatError("checkpoint: truncated metadata");
  CheckpointFile file;
  try {
    file.meta = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad metadata: ") + e.what());
  }
  const auto count = get<std::uint32_t>(in, "tensor table");
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = get<std::uint32_t>(in, "tensor name");
    if (name_len > 4096) throw FormatError("checkpoint: implausible tensor name length");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw FormatError("checkpoint: truncated tensor name");
    const auto dtype = get<std::uint8_t>(in, "dtype");
    if (dtype > 1) throw FormatError("checkpoint: unknown dtype for " + name);
    const auto rank = get<std::uint32_t>(in, "rank");
    if (rank > 2) throw FormatError("checkpoint: tensor " + name + " has rank > 2");
    std::uint64_t dims[2] = {1, 1};
    for (std::uint32_t r = 0; r < rank; ++r) dims[r + 2 - rank] = get<std::uint64_t>(in, "dims");
    if (dims[0] * dims[1] > (1ull << 34)) throw FormatError("checkpoint: tensor " + name + " too large");
    StoredTensor t;
    t.dtype = static_cast<DType>(dtype);
    t.data.resize(static_cast<Eigen::Index>(dims[0]), static_cast<Eigen::Index>(dims[1]));
    if (t.dtype == DType::kF64) {
      if (!in.read(reinterpret_cast<char*>(t.data.data()),
                   static_cast<std::streamsize>(t.data.size() * sizeof(double))))
        throw FormatError("checkpoint: truncated data for " + name);
    } else {
      std::vector<float> buf(static_cast<std::size_t>(t.data.size()));
      if (!in.read(reinterpret_cast<char*>(buf.data()),
                   static_cast<std::streamsize>(buf.size() * sizeof(float))))
        throw FormatError("checkpoint: truncated data for " + name);
      for (Eigen::Index k = 0; k < t.data.size(); ++k) t.data.data()[k] = buf[k];
    }
    file.tensors.emplace(std::move(name), std::move(t));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("checkpoint: trailing bytes");
  return file;
}

}  // namespace m2rec
