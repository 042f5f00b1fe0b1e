#pragma once

#include <filesystem>

#include "air/tensor.hpp"

namespace air {

/// Binary volume format, bit-exact:
///   magic "AIRVOL1\0" (8 bytes) | u32 LE ndim | ndim x u32 LE dims |
///   f32 LE data, row-major.
void save_volume(const Tensor& t, const std::filesystem::path& path);

/// Throws FormatError (with the offending byte offset) on bad magic or
/// truncation, IoError when the file cannot be opened.
Tensor load_volume(const std::filesystem::path& path);

}  // namespace air
