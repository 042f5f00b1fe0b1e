#pragma once

#include "air/geometry.hpp"
#include "air/tensor.hpp"

namespace air {

/// Target-space sample grid [H,W,2], (x,y) pairs in normalized coordinates.
/// (-1,-1) is the top-left pixel center, (1,1) the bottom-right
/// (align-corners convention: pixel centers sit at the +-1 extremes).
/// grid[i,j] = m * (x_j, y_i, 1)^T with x_j = -1 + 2j/(W-1).
Tensor affine_grid(const AffineMatrix2D& m, int H, int W);

/// Accumulates the grid's gradient w.r.t. the six matrix entries into gm[6].
void affine_grid_backward(const Tensor& ggrid, int H, int W, float gm[6]);

/// Pull-style bilinear resampling of image [C,H,W] at grid [H,W,2].
/// Coordinates outside [-1,1] read as zero (zero-padding border).
Tensor bilinear_sample(const Tensor& image, const Tensor& grid);

/// Gradients of bilinear_sample. Non-null buffers must be preallocated with
/// the shapes of image and grid; contributions are accumulated.
void bilinear_sample_backward(const Tensor& image, const Tensor& grid, const Tensor& gout,
                              Tensor* gimage, Tensor* ggrid);

/// Resamples image [C,H,W] through the rigid transform p ("pull" semantics:
/// output(x) = image(M_p * x)).
Tensor warp(const Tensor& image, const RigidParams2D& p);

}  // namespace air
