#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "air/tensor.hpp"

namespace air {

/// Serialized named-tensor bundle. Binary layout, all integers little-endian:
///   magic "AIRCKPT1" | u32 version | u32 tensor count |
///   per tensor: u16 name length, name bytes, u32 ndim, ndim x u32 dims,
///   f32 data | trailing JSON metadata (epoch, config echo) to EOF.
struct Checkpoint {
  static constexpr uint32_t kVersion = 1;
  std::vector<NamedTensor> tensors;
  std::string meta_json = "{}";

  const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);

/// Throws FormatError on bad magic, version mismatch or truncation; never
/// returns partial state.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace air
