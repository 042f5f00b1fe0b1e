#include "air/volume_io.hpp"

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace air {

namespace {

constexpr std::array<char, 8> kMagic = {'A', 'I', 'R', 'V', 'O', 'L', '1', '\0'};

void write_u32(std::ostream& os, uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                              static_cast<unsigned char>((v >> 8) & 0xFF),
                              static_cast<unsigned char>((v >> 16) & 0xFF),
                              static_cast<unsigned char>((v >> 24) & 0xFF)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& is, const std::filesystem::path& path, int64_t offset) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (is.gcount() != 4) {
    throw FormatError(path.string() + ": truncated at byte offset " + std::to_string(offset));
  }
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

void save_volume(const Tensor& t, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(kMagic.data(), kMagic.size());
  write_u32(os, static_cast<uint32_t>(t.ndim()));
  for (int i = 0; i < t.ndim(); ++i) write_u32(os, static_cast<uint32_t>(t.dim(i)));
  static_assert(sizeof(float) == 4);
  os.write(reinterpret_cast<const char*>(t.data()), t.numel() * 4);
  if (!os) throw IoError("write failed for " + path.string());
}

Tensor load_volume(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (is.gcount() != static_cast<std::streamsize>(magic.size()) || magic != kMagic) {
    throw FormatError(path.string() + ": bad magic at byte offset 0");
  }
  int64_t offset = 8;
  const uint32_t ndim = read_u32(is, path, offset);
  offset += 4;
  if (ndim > 8) {
    throw FormatError(path.string() + ": implausible ndim " + std::to_string(ndim) +
                      " at byte offset 8");
  }
  std::vector<int> shape(ndim);
  for (uint32_t i = 0; i < ndim; ++i) {
    shape[i] = static_cast<int>(read_u32(is, path, offset));
    offset += 4;
  }
  const int64_t n = Tensor::numel_of(shape);
  std::vector<float> data(static_cast<size_t>(n));
  is.read(reinterpret_cast<char*>(data.data()), n * 4);
  if (is.gcount() != n * 4) {
    throw FormatError(path.string() + ": truncated data at byte offset " +
                      std::to_string(offset + is.gcount()));
  }
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace air
