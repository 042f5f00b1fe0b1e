#pragma once

#include "air/tensor.hpp"

namespace air::ops {

struct ConvDims {
  int N, Cin, H, W;
  int Cout, K;
  int stride, padding, dilation;
  int Hout, Wout;
};

/// Validates conv2d argument shapes and returns the derived dimensions.
/// Output extent: floor((H + 2*padding - dilation*(K-1) - 1) / stride) + 1.
ConvDims conv2d_dims(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding,
                     int dilation);

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding,
              int dilation);

/// Accumulates gradients into the non-null buffers, which must be
/// preallocated with the matching shapes.
void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& gout, int stride, int padding,
                     int dilation, Tensor* gx, Tensor* gw, Tensor* gb);

/// out[n,g] = sum_f x[n,f] * w[g,f] + b[g]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

void linear_backward(const Tensor& x, const Tensor& w, const Tensor& gout, Tensor* gx, Tensor* gw,
                     Tensor* gb);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

}  // namespace air::ops
