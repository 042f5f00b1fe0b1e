#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "air/tensor.hpp"

namespace airtest {

// Fresh scratch directory under the system temp root, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    auto base = std::filesystem::temp_directory_path();
    for (int i = 0; i < 10000; ++i) {
      auto candidate = base / (tag + "_" + std::to_string(std::rand()) + std::to_string(i));
      std::error_code ec;
      if (std::filesystem::create_directories(candidate, ec)) {
        path_ = candidate;
        return;
      }
    }
    throw std::runtime_error("TempDir: could not create scratch directory");
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Pearson correlation over flattened tensors.
inline double ncc(const air::Tensor& a, const air::Tensor& b) {
  const int64_t n = a.numel();
  double ma = 0.0, mb = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  if (va <= 0.0 || vb <= 0.0) return 0.0;
  return cov / std::sqrt(va * vb);
}

// Central-difference gradient magnitude per channel of a [C,H,W] image.
inline air::Tensor gradient_magnitude(const air::Tensor& img) {
  const int C = img.dim(0), H = img.dim(1), W = img.dim(2);
  air::Tensor out({C, H, W});
  const int64_t plane = static_cast<int64_t>(H) * W;
  for (int c = 0; c < C; ++c) {
    const float* p = img.data() + c * plane;
    float* o = out.data() + c * plane;
    for (int i = 0; i < H; ++i) {
      for (int j = 0; j < W; ++j) {
        const float gx = (j + 1 < W ? p[i * W + j + 1] : p[i * W + j]) -
                         (j > 0 ? p[i * W + j - 1] : p[i * W + j]);
        const float gy = (i + 1 < H ? p[(i + 1) * W + j] : p[i * W + j]) -
                         (i > 0 ? p[(i - 1) * W + j] : p[i * W + j]);
        o[i * W + j] = std::sqrt(gx * gx + gy * gy);
      }
    }
  }
  return out;
}

// Pearson correlation over an interior crop (fraction of extent per side).
inline double ncc_interior(const air::Tensor& a, const air::Tensor& b, double keep_fraction) {
  const int C = a.dim(0), H = a.dim(1), W = a.dim(2);
  const int mh = static_cast<int>(H * (1.0 - keep_fraction) / 2.0);
  const int mw = static_cast<int>(W * (1.0 - keep_fraction) / 2.0);
  std::vector<float> va, vb;
  const int64_t plane = static_cast<int64_t>(H) * W;
  for (int c = 0; c < C; ++c) {
    for (int i = mh; i < H - mh; ++i) {
      for (int j = mw; j < W - mw; ++j) {
        va.push_back(a[c * plane + static_cast<int64_t>(i) * W + j]);
        vb.push_back(b[c * plane + static_cast<int64_t>(i) * W + j]);
      }
    }
  }
  const int n = static_cast<int>(va.size());
  air::Tensor ta({n}, std::move(va));
  air::Tensor tb({n}, std::move(vb));
  return ncc(ta, tb);
}

}  // namespace airtest
