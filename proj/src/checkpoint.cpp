#include "air/checkpoint.hpp"

#include <array>
#include <cstdint>
#include <fstream>

namespace air {

namespace {

constexpr std::array<char, 8> kMagic = {'A', 'I', 'R', 'C', 'K', 'P', 'T', '1'};

void write_u32(std::ostream& os, uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                              static_cast<unsigned char>((v >> 8) & 0xFF),
                              static_cast<unsigned char>((v >> 16) & 0xFF),
                              static_cast<unsigned char>((v >> 24) & 0xFF)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u16(std::ostream& os, uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v & 0xFF),
                              static_cast<unsigned char>((v >> 8) & 0xFF)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

struct Reader {
  std::ifstream is;
  std::filesystem::path path;
  int64_t offset = 0;

  void read(void* dst, int64_t n, const char* what) {
    is.read(static_cast<char*>(dst), n);
    if (is.gcount() != n) {
      throw FormatError(path.string() + ": truncated " + what + " at byte offset " +
                        std::to_string(offset + is.gcount()));
    }
    offset += n;
  }

  uint32_t u32(const char* what) {
    unsigned char b[4];
    read(b, 4, what);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
  }

  uint16_t u16(const char* what) {
    unsigned char b[2];
    read(b, 2, what);
    return static_cast<uint16_t>(b[0] | (b[1] << 8));
  }
};

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t.value;
  }
  return nullptr;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(kMagic.data(), kMagic.size());
  write_u32(os, Checkpoint::kVersion);
  write_u32(os, static_cast<uint32_t>(ck.tensors.size()));
  for (const auto& t : ck.tensors) {
    if (t.name.size() > 0xFFFF) throw IoError("tensor name too long: " + t.name);
    write_u16(os, static_cast<uint16_t>(t.name.size()));
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    write_u32(os, static_cast<uint32_t>(t.value.ndim()));
    for (int i = 0; i < t.value.ndim(); ++i) write_u32(os, static_cast<uint32_t>(t.value.dim(i)));
    os.write(reinterpret_cast<const char*>(t.value.data()), t.value.numel() * 4);
  }
  os.write(ck.meta_json.data(), static_cast<std::streamsize>(ck.meta_json.size()));
  if (!os) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Reader r;
  r.path = path;
  r.is.open(path, std::ios::binary);
  if (!r.is) throw IoError("cannot open " + path.string());

  std::array<char, 8> magic{};
  r.read(magic.data(), magic.size(), "magic");
  if (magic != kMagic) throw FormatError(path.string() + ": bad magic at byte offset 0");
  const uint32_t version = r.u32("version");
  if (version != Checkpoint::kVersion) {
    throw FormatError(path.string() + ": unsupported checkpoint version " +
                      std::to_string(version));
  }
  const uint32_t count = r.u32("tensor count");

  Checkpoint ck;
  ck.tensors.reserve(count);
  for (uint32_t k = 0; k < count; ++k) {
    const uint16_t name_len = r.u16("name length");
    std::string name(name_len, '\0');
    r.read(name.data(), name_len, "name");
    const uint32_t ndim = r.u32("ndim");
    if (ndim > 8) {
      throw FormatError(path.string() + ": implausible ndim " + std::to_string(ndim) +
                        " for tensor '" + name + "' at byte offset " + std::to_string(r.offset - 4));
    }
    std::vector<int> shape(ndim);
    for (uint32_t i = 0; i < ndim; ++i) shape[i] = static_cast<int>(r.u32("dim"));
    const int64_t n = Tensor::numel_of(shape);
    std::vector<float> data(static_cast<size_t>(n));
    r.read(data.data(), n * 4, ("data of '" + name + "'").c_str());
    ck.tensors.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
  }
  std::string meta((std::istreambuf_iterator<char>(r.is)), std::istreambuf_iterator<char>());
  ck.meta_json = meta.empty() ? "{}" : std::move(meta);
  return ck;
}

}  // namespace air
