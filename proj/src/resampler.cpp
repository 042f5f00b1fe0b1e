#include "air/resampler.hpp"

#include <cmath>

namespace air {

Tensor affine_grid(const AffineMatrix2D& m, int H, int W) {
  if (H < 2 || W < 2) {
    throw ShapeError("affine_grid: H and W must be >= 2, got " + std::to_string(H) + "x" +
                     std::to_string(W));
  }
  Tensor grid({H, W, 2});
  float* gp = grid.data();
  const float sx = 2.0f / static_cast<float>(W - 1);
  const float sy = 2.0f / static_cast<float>(H - 1);
  for (int i = 0; i < H; ++i) {
    const float y = -1.0f + sy * static_cast<float>(i);
    float* row = gp + static_cast<int64_t>(i) * W * 2;
    for (int j = 0; j < W; ++j) {
      const float x = -1.0f + sx * static_cast<float>(j);
      row[2 * j + 0] = m.m[0] * x + m.m[1] * y + m.m[2];
      row[2 * j + 1] = m.m[3] * x + m.m[4] * y + m.m[5];
    }
  }
  return grid;
}

void affine_grid_backward(const Tensor& ggrid, int H, int W, float gm[6]) {
  const float* gp = ggrid.data();
  const float sx = 2.0f / static_cast<float>(W - 1);
  const float sy = 2.0f / static_cast<float>(H - 1);
  double acc[6] = {0, 0, 0, 0, 0, 0};
  for (int i = 0; i < H; ++i) {
    const float y = -1.0f + sy * static_cast<float>(i);
    const float* row = gp + static_cast<int64_t>(i) * W * 2;
    for (int j = 0; j < W; ++j) {
      const float x = -1.0f + sx * static_cast<float>(j);
      const float gx = row[2 * j + 0];
      const float gy = row[2 * j + 1];
      acc[0] += static_cast<double>(gx) * x;
      acc[1] += static_cast<double>(gx) * y;
      acc[2] += gx;
      acc[3] += static_cast<double>(gy) * x;
      acc[4] += static_cast<double>(gy) * y;
      acc[5] += gy;
    }
  }
  for (int k = 0; k < 6; ++k) gm[k] += static_cast<float>(acc[k]);
}

namespace {

struct GridDims {
  int C, H, W;
};

GridDims check_sample_args(const Tensor& image, const Tensor& grid) {
  if (image.ndim() != 3) {
    throw ShapeError("bilinear_sample: image must be [C,H,W], got " +
                     Tensor::shape_str(image.shape()));
  }
  if (grid.ndim() != 3 || grid.dim(2) != 2) {
    throw ShapeError("bilinear_sample: grid must be [H,W,2], got " +
                     Tensor::shape_str(grid.shape()));
  }
  if (grid.dim(0) != image.dim(1) || grid.dim(1) != image.dim(2)) {
    throw ShapeError("bilinear_sample: grid " + Tensor::shape_str(grid.shape()) +
                     " does not match image " + Tensor::shape_str(image.shape()));
  }
  return {image.dim(0), image.dim(1), image.dim(2)};
}

}  // namespace

Tensor bilinear_sample(const Tensor& image, const Tensor& grid) {
  GridDims d = check_sample_args(image, grid);
  Tensor out({d.C, d.H, d.W});
  const float* ip = image.data();
  const float* gp = grid.data();
  float* op = out.data();
  const int64_t plane = static_cast<int64_t>(d.H) * d.W;
  for (int i = 0; i < d.H; ++i) {
    const float* grow = gp + static_cast<int64_t>(i) * d.W * 2;
    for (int j = 0; j < d.W; ++j) {
      // normalized -> continuous pixel index
      const float u = (grow[2 * j + 0] + 1.0f) * 0.5f * static_cast<float>(d.W - 1);
      const float v = (grow[2 * j + 1] + 1.0f) * 0.5f * static_cast<float>(d.H - 1);
      const int x0 = static_cast<int>(std::floor(u));
      const int y0 = static_cast<int>(std::floor(v));
      const float fx = u - static_cast<float>(x0);
      const float fy = v - static_cast<float>(y0);
      const bool x0ok = x0 >= 0 && x0 < d.W;
      const bool x1ok = x0 + 1 >= 0 && x0 + 1 < d.W;
      const bool y0ok = y0 >= 0 && y0 < d.H;
      const bool y1ok = y0 + 1 >= 0 && y0 + 1 < d.H;
      const float w00 = (1.0f - fx) * (1.0f - fy);
      const float w01 = fx * (1.0f - fy);
      const float w10 = (1.0f - fx) * fy;
      const float w11 = fx * fy;
      for (int c = 0; c < d.C; ++c) {
        const float* pc = ip + c * plane;
        float acc = 0.0f;
        if (y0ok && x0ok) acc += w00 * pc[static_cast<int64_t>(y0) * d.W + x0];
        if (y0ok && x1ok) acc += w01 * pc[static_cast<int64_t>(y0) * d.W + x0 + 1];
        if (y1ok && x0ok) acc += w10 * pc[static_cast<int64_t>(y0 + 1) * d.W + x0];
        if (y1ok && x1ok) acc += w11 * pc[static_cast<int64_t>(y0 + 1) * d.W + x0 + 1];
        op[c * plane + static_cast<int64_t>(i) * d.W + j] = acc;
      }
    }
  }
  return out;
}

void bilinear_sample_backward(const Tensor& image, const Tensor& grid, const Tensor& gout,
                              Tensor* gimage, Tensor* ggrid) {
  GridDims d = check_sample_args(image, grid);
  const float* ip = image.data();
  const float* gp = grid.data();
  const float* op = gout.data();
  float* gip = gimage ? gimage->data() : nullptr;
  float* ggp = ggrid ? ggrid->data() : nullptr;
  const int64_t plane = static_cast<int64_t>(d.H) * d.W;
  const float du_dx = 0.5f * static_cast<float>(d.W - 1);
  const float dv_dy = 0.5f * static_cast<float>(d.H - 1);
  for (int i = 0; i < d.H; ++i) {
    const float* grow = gp + static_cast<int64_t>(i) * d.W * 2;
    for (int j = 0; j < d.W; ++j) {
      const float u = (grow[2 * j + 0] + 1.0f) * 0.5f * static_cast<float>(d.W - 1);
      const float v = (grow[2 * j + 1] + 1.0f) * 0.5f * static_cast<float>(d.H - 1);
      const int x0 = static_cast<int>(std::floor(u));
      const int y0 = static_cast<int>(std::floor(v));
      const float fx = u - static_cast<float>(x0);
      const float fy = v - static_cast<float>(y0);
      const bool x0ok = x0 >= 0 && x0 < d.W;
      const bool x1ok = x0 + 1 >= 0 && x0 + 1 < d.W;
      const bool y0ok = y0 >= 0 && y0 < d.H;
      const bool y1ok = y0 + 1 >= 0 && y0 + 1 < d.H;
      float acc_u = 0.0f;
      float acc_v = 0.0f;
      for (int c = 0; c < d.C; ++c) {
        const float g = op[c * plane + static_cast<int64_t>(i) * d.W + j];
        if (g == 0.0f) continue;
        const float* pc = ip + c * plane;
        const float v00 = (y0ok && x0ok) ? pc[static_cast<int64_t>(y0) * d.W + x0] : 0.0f;
        const float v01 = (y0ok && x1ok) ? pc[static_cast<int64_t>(y0) * d.W + x0 + 1] : 0.0f;
        const float v10 = (y1ok && x0ok) ? pc[static_cast<int64_t>(y0 + 1) * d.W + x0] : 0.0f;
        const float v11 = (y1ok && x1ok) ? pc[static_cast<int64_t>(y0 + 1) * d.W + x0 + 1] : 0.0f;
        if (gip) {
          float* gc = gip + c * plane;
          if (y0ok && x0ok) gc[static_cast<int64_t>(y0) * d.W + x0] += g * (1.0f - fx) * (1.0f - fy);
          if (y0ok && x1ok) gc[static_cast<int64_t>(y0) * d.W + x0 + 1] += g * fx * (1.0f - fy);
          if (y1ok && x0ok) gc[static_cast<int64_t>(y0 + 1) * d.W + x0] += g * (1.0f - fx) * fy;
          if (y1ok && x1ok) gc[static_cast<int64_t>(y0 + 1) * d.W + x0 + 1] += g * fx * fy;
        }
        acc_u += g * ((v01 - v00) * (1.0f - fy) + (v11 - v10) * fy);
        acc_v += g * ((v10 - v00) * (1.0f - fx) + (v11 - v01) * fx);
      }
      if (ggp) {
        ggp[static_cast<int64_t>(i) * d.W * 2 + 2 * j + 0] += acc_u * du_dx;
        ggp[static_cast<int64_t>(i) * d.W * 2 + 2 * j + 1] += acc_v * dv_dy;
      }
    }
  }
}

Tensor warp(const Tensor& image, const RigidParams2D& p) {
  if (image.ndim() != 3) {
    throw ShapeError("warp: image must be [C,H,W], got " + Tensor::shape_str(image.shape()));
  }
  return bilinear_sample(image, affine_grid(to_matrix(p), image.dim(1), image.dim(2)));
}

}  // namespace air
