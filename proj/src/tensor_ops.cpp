#include "air/tensor_ops.hpp"

#include <cmath>
#include <string>

namespace air::ops {

namespace {

// First output index whose input coordinate q0 + o*stride is >= 0.
inline int lo_bound(int q0, int stride) {
  if (q0 >= 0) return 0;
  return (-q0 + stride - 1) / stride;
}

// Last output index (inclusive) whose input coordinate stays < limit.
inline int hi_bound(int q0, int stride, int limit, int out_extent) {
  int r = limit - 1 - q0;
  if (r < 0) return -1;
  int hi = r / stride;
  return hi < out_extent - 1 ? hi : out_extent - 1;
}

}  // namespace

ConvDims conv2d_dims(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding,
                     int dilation) {
  if (x.ndim() != 4) {
    throw ShapeError("conv2d: input must be [N,Cin,H,W], got " + Tensor::shape_str(x.shape()));
  }
  if (w.ndim() != 4 || w.dim(2) != w.dim(3)) {
    throw ShapeError("conv2d: weight must be [Cout,Cin,k,k], got " + Tensor::shape_str(w.shape()));
  }
  if (stride < 1 || dilation < 1 || padding < 0) {
    throw ShapeError("conv2d: invalid stride/padding/dilation (" + std::to_string(stride) + "," +
                     std::to_string(padding) + "," + std::to_string(dilation) + ")");
  }
  ConvDims d;
  d.N = x.dim(0);
  d.Cin = x.dim(1);
  d.H = x.dim(2);
  d.W = x.dim(3);
  d.Cout = w.dim(0);
  d.K = w.dim(2);
  d.stride = stride;
  d.padding = padding;
  d.dilation = dilation;
  if (w.dim(1) != d.Cin) {
    throw ShapeError("conv2d: weight expects Cin=" + std::to_string(w.dim(1)) + ", input has " +
                     std::to_string(d.Cin));
  }
  if (b.ndim() != 1 || b.dim(0) != d.Cout) {
    throw ShapeError("conv2d: bias must be [Cout]=" + std::to_string(d.Cout) + ", got " +
                     Tensor::shape_str(b.shape()));
  }
  int span = dilation * (d.K - 1) + 1;
  d.Hout = (d.H + 2 * padding - span) / stride + 1;
  d.Wout = (d.W + 2 * padding - span) / stride + 1;
  if (d.Hout < 1 || d.Wout < 1) {
    throw ShapeError("conv2d: kernel extent " + std::to_string(span) + " exceeds padded input " +
                     Tensor::shape_str(x.shape()));
  }
  return d;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding,
              int dilation) {
  ConvDims d = conv2d_dims(x, w, b, stride, padding, dilation);
  Tensor out({d.N, d.Cout, d.Hout, d.Wout});
  const float* xp = x.data();
  const float* wp = w.data();
  const float* bp = b.data();
  float* op = out.data();
  const int64_t in_img = static_cast<int64_t>(d.Cin) * d.H * d.W;
  const int64_t out_img = static_cast<int64_t>(d.Cout) * d.Hout * d.Wout;

#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < d.N; ++n) {
    for (int co = 0; co < d.Cout; ++co) {
      const float* xn = xp + n * in_img;
      float* oc = op + n * out_img + static_cast<int64_t>(co) * d.Hout * d.Wout;
      for (int64_t i = 0; i < static_cast<int64_t>(d.Hout) * d.Wout; ++i) oc[i] = bp[co];
      for (int ci = 0; ci < d.Cin; ++ci) {
        const float* xc = xn + static_cast<int64_t>(ci) * d.H * d.W;
        const float* wk = wp + (static_cast<int64_t>(co) * d.Cin + ci) * d.K * d.K;
        for (int kh = 0; kh < d.K; ++kh) {
          const int qh = kh * d.dilation - d.padding;
          const int oh_lo = lo_bound(qh, d.stride);
          const int oh_hi = hi_bound(qh, d.stride, d.H, d.Hout);
          for (int kw = 0; kw < d.K; ++kw) {
            const float wv = wk[kh * d.K + kw];
            const int qw = kw * d.dilation - d.padding;
            const int ow_lo = lo_bound(qw, d.stride);
            const int ow_hi = hi_bound(qw, d.stride, d.W, d.Wout);
            if (oh_hi < oh_lo || ow_hi < ow_lo) continue;
            for (int oh = oh_lo; oh <= oh_hi; ++oh) {
              const int ih = qh + oh * d.stride;
              const float* xrow = xc + static_cast<int64_t>(ih) * d.W + qw + ow_lo * d.stride;
              float* orow = oc + static_cast<int64_t>(oh) * d.Wout;
              if (d.stride == 1) {
                for (int ow = ow_lo; ow <= ow_hi; ++ow) orow[ow] += wv * xrow[ow - ow_lo];
              } else {
                for (int ow = ow_lo; ow <= ow_hi; ++ow) {
                  orow[ow] += wv * xrow[static_cast<int64_t>(ow - ow_lo) * d.stride];
                }
              }
            }
          }
        }
      }
    }
  }
  return out;
}

void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& gout, int stride, int padding,
                     int dilation, Tensor* gx, Tensor* gw, Tensor* gb) {
  ConvDims d = conv2d_dims(x, w, Tensor({w.dim(0)}), stride, padding, dilation);
  const float* xp = x.data();
  const float* wp = w.data();
  const float* gp = gout.data();
  const int64_t in_img = static_cast<int64_t>(d.Cin) * d.H * d.W;
  const int64_t out_img = static_cast<int64_t>(d.Cout) * d.Hout * d.Wout;

  if (gx) {
    float* gxp = gx->data();
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < d.N; ++n) {
      for (int ci = 0; ci < d.Cin; ++ci) {
        float* gxc = gxp + n * in_img + static_cast<int64_t>(ci) * d.H * d.W;
        for (int co = 0; co < d.Cout; ++co) {
          const float* gc = gp + n * out_img + static_cast<int64_t>(co) * d.Hout * d.Wout;
          const float* wk = wp + (static_cast<int64_t>(co) * d.Cin + ci) * d.K * d.K;
          for (int kh = 0; kh < d.K; ++kh) {
            const int qh = kh * d.dilation - d.padding;
            const int oh_lo = lo_bound(qh, d.stride);
            const int oh_hi = hi_bound(qh, d.stride, d.H, d.Hout);
            for (int kw = 0; kw < d.K; ++kw) {
              const float wv = wk[kh * d.K + kw];
              const int qw = kw * d.dilation - d.padding;
              const int ow_lo = lo_bound(qw, d.stride);
              const int ow_hi = hi_bound(qw, d.stride, d.W, d.Wout);
              if (oh_hi < oh_lo || ow_hi < ow_lo) continue;
              for (int oh = oh_lo; oh <= oh_hi; ++oh) {
                const int ih = qh + oh * d.stride;
                float* gxrow = gxc + static_cast<int64_t>(ih) * d.W + qw + ow_lo * d.stride;
                const float* grow = gc + static_cast<int64_t>(oh) * d.Wout;
                if (d.stride == 1) {
                  for (int ow = ow_lo; ow <= ow_hi; ++ow) gxrow[ow - ow_lo] += wv * grow[ow];
                } else {
                  for (int ow = ow_lo; ow <= ow_hi; ++ow) {
                    gxrow[static_cast<int64_t>(ow - ow_lo) * d.stride] += wv * grow[ow];
                  }
                }
              }
            }
          }
        }
      }
    }
  }

  if (gw) {
    float* gwp = gw->data();
#pragma omp parallel for collapse(2) schedule(static)
    for (int co = 0; co < d.Cout; ++co) {
      for (int ci = 0; ci < d.Cin; ++ci) {
        float* wk = gwp + (static_cast<int64_t>(co) * d.Cin + ci) * d.K * d.K;
        for (int kh = 0; kh < d.K; ++kh) {
          const int qh = kh * d.dilation - d.padding;
          const int oh_lo = lo_bound(qh, d.stride);
          const int oh_hi = hi_bound(qh, d.stride, d.H, d.Hout);
          for (int kw = 0; kw < d.K; ++kw) {
            const int qw = kw * d.dilation - d.padding;
            const int ow_lo = lo_bound(qw, d.stride);
            const int ow_hi = hi_bound(qw, d.stride, d.W, d.Wout);
            if (oh_hi < oh_lo || ow_hi < ow_lo) continue;
            float acc = 0.0f;
            for (int n = 0; n < d.N; ++n) {
              const float* xc = xp + n * in_img + static_cast<int64_t>(ci) * d.H * d.W;
              const float* gc = gp + n * out_img + static_cast<int64_t>(co) * d.Hout * d.Wout;
              for (int oh = oh_lo; oh <= oh_hi; ++oh) {
                const int ih = qh + oh * d.stride;
                const float* xrow = xc + static_cast<int64_t>(ih) * d.W + qw + ow_lo * d.stride;
                const float* grow = gc + static_cast<int64_t>(oh) * d.Wout;
                if (d.stride == 1) {
                  for (int ow = ow_lo; ow <= ow_hi; ++ow) acc += xrow[ow - ow_lo] * grow[ow];
                } else {
                  for (int ow = ow_lo; ow <= ow_hi; ++ow) {
                    acc += xrow[static_cast<int64_t>(ow - ow_lo) * d.stride] * grow[ow];
                  }
                }
              }
            }
            wk[kh * d.K + kw] += acc;
          }
        }
      }
    }
  }

  if (gb) {
    float* gbp = gb->data();
    for (int n = 0; n < d.N; ++n) {
      for (int co = 0; co < d.Cout; ++co) {
        const float* gc = gp + n * out_img + static_cast<int64_t>(co) * d.Hout * d.Wout;
        float acc = 0.0f;
        for (int64_t i = 0; i < static_cast<int64_t>(d.Hout) * d.Wout; ++i) acc += gc[i];
        gbp[co] += acc;
      }
    }
  }
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.ndim() != 2 || w.ndim() != 2 || b.ndim() != 1) {
    throw ShapeError("linear: expected x[N,F], w[G,F], b[G], got " +
                     Tensor::shape_str(x.shape()) + ", " + Tensor::shape_str(w.shape()) + ", " +
                     Tensor::shape_str(b.shape()));
  }
  const int N = x.dim(0), F = x.dim(1), G = w.dim(0);
  if (w.dim(1) != F || b.dim(0) != G) {
    throw ShapeError("linear: weight " + Tensor::shape_str(w.shape()) + " does not match input " +
                     Tensor::shape_str(x.shape()));
  }
  Tensor out({N, G});
  const float* xp = x.data();
  const float* wp = w.data();
  float* op = out.data();
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < N; ++n) {
    for (int g = 0; g < G; ++g) {
      const float* xr = xp + static_cast<int64_t>(n) * F;
      const float* wr = wp + static_cast<int64_t>(g) * F;
      float acc = b[g];
      for (int f = 0; f < F; ++f) acc += xr[f] * wr[f];
      op[static_cast<int64_t>(n) * G + g] = acc;
    }
  }
  return out;
}

void linear_backward(const Tensor& x, const Tensor& w, const Tensor& gout, Tensor* gx, Tensor* gw,
                     Tensor* gb) {
  const int N = x.dim(0), F = x.dim(1), G = w.dim(0);
  const float* xp = x.data();
  const float* wp = w.data();
  const float* gp = gout.data();
  if (gx) {
    float* gxp = gx->data();
    for (int n = 0; n < N; ++n) {
      float* gxr = gxp + static_cast<int64_t>(n) * F;
      for (int g = 0; g < G; ++g) {
        const float gv = gp[static_cast<int64_t>(n) * G + g];
        const float* wr = wp + static_cast<int64_t>(g) * F;
        for (int f = 0; f < F; ++f) gxr[f] += gv * wr[f];
      }
    }
  }
  if (gw) {
    float* gwp = gw->data();
#pragma omp parallel for schedule(static)
    for (int g = 0; g < G; ++g) {
      float* gwr = gwp + static_cast<int64_t>(g) * F;
      for (int n = 0; n < N; ++n) {
        const float gv = gp[static_cast<int64_t>(n) * G + g];
        const float* xr = xp + static_cast<int64_t>(n) * F;
        for (int f = 0; f < F; ++f) gwr[f] += gv * xr[f];
      }
    }
  }
  if (gb) {
    float* gbp = gb->data();
    for (int n = 0; n < N; ++n) {
      for (int g = 0; g < G; ++g) gbp[g] += gp[static_cast<int64_t>(n) * G + g];
    }
  }
}

Tensor relu(const Tensor& x) {
  Tensor out = Tensor::zeros_like(x);
  const float* xp = x.data();
  float* op = out.data();
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) op[i] = xp[i] > 0.0f ? xp[i] : 0.0f;
  return out;
}

Tensor sigmoid(const Tensor& x) {
  Tensor out = Tensor::zeros_like(x);
  const float* xp = x.data();
  float* op = out.data();
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) {
    const float v = xp[i];
    if (v >= 0.0f) {
      op[i] = 1.0f / (1.0f + std::exp(-v));
    } else {
      const float e = std::exp(v);
      op[i] = e / (1.0f + e);
    }
  }
  return out;
}

}  // namespace air::ops
