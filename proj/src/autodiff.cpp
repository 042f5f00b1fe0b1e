#include "air/autodiff.hpp"

#include <cmath>
#include <cstdlib>
#include <utility>

#include "air/error.hpp"
#include "air/resampler.hpp"
#include "air/tensor_ops.hpp"

namespace air {

namespace {
bool g_nan_checks = []() {
  const char* env = std::getenv("AIR_CHECK_NAN");
  if (env != nullptr) return env[0] == '1';
#ifdef NDEBUG
  return false;
#else
  return true;
#endif
}();
}  // namespace

bool nan_checks_enabled() { return g_nan_checks; }
void set_nan_checks(bool enabled) { g_nan_checks = enabled; }

using Backprop = std::function<void(Graph&, const Tensor&)>;

struct Graph::Node {
  Tensor value;
  Tensor grad;
  bool wants_grad = false;
  bool leaf_requires_grad = false;
  std::function<void(Graph&, const Tensor&)> backprop;
};

Graph::Graph() : nodes_(new std::vector<Node>()) {}
Graph::~Graph() { delete nodes_; }

const Tensor& Var::value() const { return g_->value(*this); }

const Graph::Node& Graph::node(int id) const { return (*nodes_)[static_cast<size_t>(id)]; }
Graph::Node& Graph::node(int id) { return (*nodes_)[static_cast<size_t>(id)]; }

size_t Graph::size() const { return nodes_->size(); }

bool Graph::wants_grad(int id) const { return node(id).wants_grad; }

const Tensor& Graph::value(Var v) const {
  if (v.graph() != this || v.id() < 0 || v.id() >= static_cast<int>(nodes_->size())) {
    throw ShapeError("Var does not belong to this graph");
  }
  return node(v.id()).value;
}

const Tensor& Graph::grad(Var v) const {
  const Node& n = node(v.id());
  if (n.grad.empty()) throw ShapeError("gradient not populated; call backward() first");
  return n.grad;
}

bool Graph::has_grad(Var v) const { return !node(v.id()).grad.empty(); }

Tensor& Graph::grad_buf(int id) {
  Node& n = node(id);
  if (n.grad.empty()) n.grad = Tensor::zeros_like(n.value);
  return n.grad;
}

int Graph::push(Tensor value, bool wants, bool leaf_requires,
                std::function<void(Graph&, const Tensor&)> backprop, const char* op) {
  if (g_nan_checks && !value.all_finite()) {
    throw NumericError(std::string(op) + ": non-finite value in output");
  }
  Node n;
  n.value = std::move(value);
  n.wants_grad = wants;
  n.leaf_requires_grad = leaf_requires;
  n.backprop = std::move(backprop);
  nodes_->push_back(std::move(n));
  return static_cast<int>(nodes_->size()) - 1;
}

Var Graph::leaf(Tensor t) {
  const bool req = t.requires_grad();
  return Var(this, push(std::move(t), req, req, nullptr, "leaf"));
}

Var Graph::constant(Tensor t) {
  t.set_requires_grad(false);
  return Var(this, push(std::move(t), false, false, nullptr, "constant"));
}

Var Graph::conv2d(Var x, Var w, Var b, int stride, int padding, int dilation) {
  const Tensor& xv = value(x);
  const Tensor& wv = value(w);
  const Tensor& bv = value(b);
  Tensor out = ops::conv2d(xv, wv, bv, stride, padding, dilation);
  const bool wants = wants_grad(x.id()) || wants_grad(w.id()) || wants_grad(b.id());
  const int xi = x.id(), wi = w.id(), bi = b.id();
  auto back = [xi, wi, bi, stride, padding, dilation](Graph& g, const Tensor& gout) {
    const Tensor& xv = g.node(xi).value;
    const Tensor& wv = g.node(wi).value;
    Tensor* gx = g.wants_grad(xi) ? &g.grad_buf(xi) : nullptr;
    Tensor* gw = g.wants_grad(wi) ? &g.grad_buf(wi) : nullptr;
    Tensor* gb = g.wants_grad(bi) ? &g.grad_buf(bi) : nullptr;
    ops::conv2d_backward(xv, wv, gout, stride, padding, dilation, gx, gw, gb);
  };
  return Var(this, push(std::move(out), wants, false, wants ? Backprop(back) : Backprop(), "conv2d"));
}

Var Graph::linear(Var x, Var w, Var b) {
  Tensor out = ops::linear(value(x), value(w), value(b));
  const bool wants = wants_grad(x.id()) || wants_grad(w.id()) || wants_grad(b.id());
  const int xi = x.id(), wi = w.id(), bi = b.id();
  auto back = [xi, wi, bi](Graph& g, const Tensor& gout) {
    const Tensor& xv = g.node(xi).value;
    const Tensor& wv = g.node(wi).value;
    Tensor* gx = g.wants_grad(xi) ? &g.grad_buf(xi) : nullptr;
    Tensor* gw = g.wants_grad(wi) ? &g.grad_buf(wi) : nullptr;
    Tensor* gb = g.wants_grad(bi) ? &g.grad_buf(bi) : nullptr;
    ops::linear_backward(xv, wv, gout, gx, gw, gb);
  };
  return Var(this, push(std::move(out), wants, false, wants ? Backprop(back) : Backprop(), "linear"));
}

Var Graph::relu(Var x) {
  Tensor out = ops::relu(value(x));
  const bool wants = wants_grad(x.id());
  const int xi = x.id();
  auto back = [xi](Graph& g, const Tensor& gout) {
    const Tensor& xv = g.node(xi).value;
    Tensor& gx = g.grad_buf(xi);
    const int64_t n = xv.numel();
    for (int64_t i = 0; i < n; ++i) {
      if (xv[i] > 0.0f) gx[i] += gout[i];
    }
  };
  return Var(this, push(std::move(out), wants, false, wants ? Backprop(back) : Backprop(), "relu"));
}

Var Graph::sigmoid(Var x) {
  Tensor out = ops::sigmoid(value(x));
  const bool wants = wants_grad(x.id());
  const int xi = x.id();
  const int self = static_cast<int>(nodes_->size());
  auto back = [xi, self](Graph& g, const Tensor& gout) {
    const Tensor& y = g.node(self).value;
    Tensor& gx = g.grad_buf(xi);
    const int64_t n = y.numel();
    for (int64_t i = 0; i < n; ++i) gx[i] += gout[i] * y[i] * (1.0f - y[i]);
  };
  return Var(this, push(std::move(out), wants, false, wants ? Backprop(back) : Backprop(), "sigmoid"));
}

Var Graph::add(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  require_same_shape(av, bv, "elementwise_add");
  Tensor out = av;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += bv[i];
  const bool wants = wants_grad(a.id()) || wants_grad(b.id());
  const int ai = a.id(), bi = b.id();
  auto back = [ai, bi](Graph& g, const Tensor& gout) {
    if (g.wants_grad(ai)) {
      Tensor& ga = g.grad_buf(ai);
      for (int64_t i = 0; i < gout.numel(); ++i) ga[i] += gout[i];
    }
    if (g.wants_grad(bi)) {
      Tensor& gb = g.grad_buf(bi);
      for (int64_t i = 0; i < gout.numel(); ++i) gb[i] += gout[i];
    }
  };
  return Var(this, push(std::move(out), wants, false, wants ? Backprop(back) : Backprop(), "add"));
}

Var Graph::sub(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  require_same_shape(av, bv, "sub");
  Tensor out = av;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] -= bv[i];
  const bool wants = wants_grad(a.id()) || wants_grad(b.id());
  const int ai = a.id(), bi = b.id();
  auto back = [ai, bi](Graph& g, const Tensor& gout) {
    if (g.wants_grad(ai)) {
      Tensor& ga = g.grad_buf(ai);
      for (int64_t i = 0; i < gout.numel(); ++i) ga[i] += gout[i];
    }
    if (g.wants_grad(bi)) {
      Tensor& gb = g.grad_buf(bi);
      for (int64_t i = 0; i < gout.numel(); ++i) gb[i] -= gout[i];
    }
  };
  return Var(this, push(std::move(out), wants, false, wants ? Backprop(back) : Backprop(), "sub"));
}

Var Graph::scale(Var a, float s) {
  Tensor out = value(a);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= s;
  const bool wants = wants_grad(a.id());
  const int ai = a.id();
  auto back = [ai, s](Graph& g, const Tensor& gout) {
    Tensor& ga = g.grad_buf(ai);
    for (int64_t i = 0; i < gout.numel(); ++i) ga[i] += s * gout[i];
  };
  return Var(this, push(std::move(out), wants, false, wants ? Backprop(back) : Backprop(), "scale"));
}

Var Graph::add_scalar(Var a, float c) {
  Tensor out = value(a);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += c;
  const bool wants = wants_grad(a.id());
  const int ai = a.id();
  auto back = [ai](Graph& g, const Tensor& gout) {
    Tensor& ga = g.grad_buf(ai);
    for (int64_t i = 0; i < gout.numel(); ++i) ga[i] += gout[i];
  };
  return Var(this, push(std::move(out), wants, false, wants ? Backprop(back) : Backprop(), "add_scalar"));
}

Var Graph::reduce_mean(Var x) {
  const Tensor& xv = value(x);
  if (xv.numel() == 0) throw ShapeError("reduce_mean: empty tensor");
  double acc = 0.0;
  for (int64_t i = 0; i < xv.numel(); ++i) acc += xv[i];
  const float inv_n = 1.0f / static_cast<float>(xv.numel());
  Tensor out = Tensor::scalar(static_cast<float>(acc) * inv_n);
  const bool wants = wants_grad(x.id());
  const int xi = x.id();
  auto back = [xi, inv_n](Graph& g, const Tensor& gout) {
    Tensor& gx = g.grad_buf(xi);
    const float gv = gout[0] * inv_n;
    for (int64_t i = 0; i < gx.numel(); ++i) gx[i] += gv;
  };
  return Var(this, push(std::move(out), wants, false, wants ? Backprop(back) : Backprop(), "reduce_mean"));
}

Var Graph::squared_l2(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  require_same_shape(av, bv, "squared_l2");
  if (av.numel() == 0) throw ShapeError("squared_l2: empty tensor");
  double acc = 0.0;
  for (int64_t i = 0; i < av.numel(); ++i) {
    const double d = static_cast<double>(av[i]) - static_cast<double>(bv[i]);
    acc += d * d;
  }
  Tensor out = Tensor::scalar(static_cast<float>(acc));
  const bool wants = wants_grad(a.id()) || wants_grad(b.id());
  const int ai = a.id(), bi = b.id();
  auto back = [ai, bi](Graph& g, const Tensor& gout) {
    const Tensor& av = g.node(ai).value;
    const Tensor& bv = g.node(bi).value;
    const float gv = gout[0];
    if (g.wants_grad(ai)) {
      Tensor& ga = g.grad_buf(ai);
      for (int64_t i = 0; i < av.numel(); ++i) ga[i] += 2.0f * (av[i] - bv[i]) * gv;
    }
    if (g.wants_grad(bi)) {
      Tensor& gb = g.grad_buf(bi);
      for (int64_t i = 0; i < av.numel(); ++i) gb[i] -= 2.0f * (av[i] - bv[i]) * gv;
    }
  };
  return Var(this, push(std::move(out), wants, false, wants ? Backprop(back) : Backprop(), "squared_l2"));
}

Var Graph::reshape(Var x, std::vector<int> shape) {
  Tensor out = value(x).reshaped(std::move(shape));
  const bool wants = wants_grad(x.id());
  const int xi = x.id();
  auto back = [xi](Graph& g, const Tensor& gout) {
    Tensor& gx = g.grad_buf(xi);
    for (int64_t i = 0; i < gout.numel(); ++i) gx[i] += gout[i];
  };
  return Var(this, push(std::move(out), wants, false, wants ? Backprop(back) : Backprop(), "reshape"));
}

namespace {

struct ConcatDims {
  int outer;       // product of axes before the channel axis
  int64_t a_inner; // channel-and-beyond extent of a, per outer slice
  int64_t b_inner;
};

ConcatDims concat_dims(const Tensor& a, const Tensor& b) {
  if (a.ndim() != b.ndim() || (a.ndim() != 3 && a.ndim() != 4)) {
    throw ShapeError("concat_channels: expected two [C,H,W] or [N,C,H,W] tensors, got " +
                     Tensor::shape_str(a.shape()) + " and " + Tensor::shape_str(b.shape()));
  }
  const int axis = a.ndim() == 3 ? 0 : 1;
  for (int i = 0; i < a.ndim(); ++i) {
    if (i != axis && a.dim(i) != b.dim(i)) {
      throw ShapeError("concat_channels: shape mismatch " + Tensor::shape_str(a.shape()) +
                       " vs " + Tensor::shape_str(b.shape()));
    }
  }
  ConcatDims d;
  d.outer = axis == 0 ? 1 : a.dim(0);
  const int64_t plane = static_cast<int64_t>(a.dim(axis + 1)) * a.dim(axis + 2);
  d.a_inner = a.dim(axis) * plane;
  d.b_inner = b.dim(axis) * plane;
  return d;
}

}  // namespace

Var Graph::concat_channels(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  ConcatDims d = concat_dims(av, bv);
  std::vector<int> shape = av.shape();
  const int axis = av.ndim() == 3 ? 0 : 1;
  shape[static_cast<size_t>(axis)] += bv.dim(axis);
  Tensor out(shape);
  for (int o = 0; o < d.outer; ++o) {
    float* dst = out.data() + o * (d.a_inner + d.b_inner);
    const float* pa = av.data() + o * d.a_inner;
    const float* pb = bv.data() + o * d.b_inner;
    std::copy(pa, pa + d.a_inner, dst);
    std::copy(pb, pb + d.b_inner, dst + d.a_inner);
  }
  const bool wants = wants_grad(a.id()) || wants_grad(b.id());
  const int ai = a.id(), bi = b.id();
  auto back = [ai, bi, d](Graph& g, const Tensor& gout) {
    for (int o = 0; o < d.outer; ++o) {
      const float* src = gout.data() + o * (d.a_inner + d.b_inner);
      if (g.wants_grad(ai)) {
        Tensor& ga = g.grad_buf(ai);
        float* pa = ga.data() + o * d.a_inner;
        for (int64_t i = 0; i < d.a_inner; ++i) pa[i] += src[i];
      }
      if (g.wants_grad(bi)) {
        Tensor& gb = g.grad_buf(bi);
        float* pb = gb.data() + o * d.b_inner;
        for (int64_t i = 0; i < d.b_inner; ++i) pb[i] += src[d.a_inner + i];
      }
    }
  };
  return Var(this, push(std::move(out), wants, false, wants ? Backprop(back) : Backprop(), "concat_channels"));
}

Var Graph::stack(const std::vector<Var>& items) {
  if (items.empty()) throw ShapeError("stack: no items");
  const Tensor& first = value(items[0]);
  std::vector<int> shape;
  shape.push_back(static_cast<int>(items.size()));
  shape.insert(shape.end(), first.shape().begin(), first.shape().end());
  Tensor out(shape);
  const int64_t inner = first.numel();
  bool wants = false;
  std::vector<int> ids;
  ids.reserve(items.size());
  for (size_t k = 0; k < items.size(); ++k) {
    const Tensor& v = value(items[k]);
    require_same_shape(first, v, "stack");
    std::copy(v.data(), v.data() + inner, out.data() + static_cast<int64_t>(k) * inner);
    wants = wants || wants_grad(items[k].id());
    ids.push_back(items[k].id());
  }
  auto back = [ids, inner](Graph& g, const Tensor& gout) {
    for (size_t k = 0; k < ids.size(); ++k) {
      if (!g.wants_grad(ids[k])) continue;
      Tensor& gi = g.grad_buf(ids[k]);
      const float* src = gout.data() + static_cast<int64_t>(k) * inner;
      for (int64_t i = 0; i < inner; ++i) gi[i] += src[i];
    }
  };
  return Var(this, push(std::move(out), wants, false, wants ? Backprop(back) : Backprop(), "stack"));
}

Var Graph::row(Var x, int i) {
  const Tensor& xv = value(x);
  if (xv.ndim() != 2 || i < 0 || i >= xv.dim(0)) {
    throw ShapeError("row: index " + std::to_string(i) + " out of range for " +
                     Tensor::shape_str(xv.shape()));
  }
  const int F = xv.dim(1);
  Tensor out({F});
  std::copy(xv.data() + static_cast<int64_t>(i) * F, xv.data() + static_cast<int64_t>(i + 1) * F,
            out.data());
  const bool wants = wants_grad(x.id());
  const int xi = x.id();
  auto back = [xi, i, F](Graph& g, const Tensor& gout) {
    Tensor& gx = g.grad_buf(xi);
    float* dst = gx.data() + static_cast<int64_t>(i) * F;
    for (int f = 0; f < F; ++f) dst[f] += gout[f];
  };
  return Var(this, push(std::move(out), wants, false, wants ? Backprop(back) : Backprop(), "row"));
}

Var Graph::rows(Var x, int begin, int end) {
  const Tensor& xv = value(x);
  if (xv.ndim() != 2 || begin < 0 || end > xv.dim(0) || begin >= end) {
    throw ShapeError("rows: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") invalid for " + Tensor::shape_str(xv.shape()));
  }
  const int F = xv.dim(1);
  Tensor out({end - begin, F});
  std::copy(xv.data() + static_cast<int64_t>(begin) * F, xv.data() + static_cast<int64_t>(end) * F,
            out.data());
  const bool wants = wants_grad(x.id());
  const int xi = x.id();
  auto back = [xi, begin, F](Graph& g, const Tensor& gout) {
    Tensor& gx = g.grad_buf(xi);
    float* dst = gx.data() + static_cast<int64_t>(begin) * F;
    for (int64_t i = 0; i < gout.numel(); ++i) dst[i] += gout[i];
  };
  return Var(this, push(std::move(out), wants, false, wants ? Backprop(back) : Backprop(), "rows"));
}

Var Graph::rigid_matrix(Var p) {
  const Tensor& pv = value(p);
  if (pv.numel() != 3) {
    throw ShapeError("rigid_matrix: expected 3 parameters, got " + Tensor::shape_str(pv.shape()));
  }
  const float c = std::cos(pv[0]);
  const float s = std::sin(pv[0]);
  Tensor out({6}, std::vector<float>{c, -s, pv[1], s, c, pv[2]});
  const bool wants = wants_grad(p.id());
  const int pi = p.id();
  auto back = [pi, c, s](Graph& g, const Tensor& gout) {
    Tensor& gp = g.grad_buf(pi);
    gp[0] += -s * gout[0] - c * gout[1] + c * gout[3] - s * gout[4];
    gp[1] += gout[2];
    gp[2] += gout[5];
  };
  return Var(this, push(std::move(out), wants, false, wants ? Backprop(back) : Backprop(), "rigid_matrix"));
}

Var Graph::affine_grid(Var m6, int H, int W) {
  const Tensor& mv = value(m6);
  if (mv.numel() != 6) {
    throw ShapeError("affine_grid: expected 6 matrix entries, got " +
                     Tensor::shape_str(mv.shape()));
  }
  AffineMatrix2D m;
  for (int k = 0; k < 6; ++k) m.m[static_cast<size_t>(k)] = mv[k];
  Tensor out = air::affine_grid(m, H, W);
  const bool wants = wants_grad(m6.id());
  const int mi = m6.id();
  auto back = [mi, H, W](Graph& g, const Tensor& gout) {
    Tensor& gm = g.grad_buf(mi);
    affine_grid_backward(gout, H, W, gm.data());
  };
  return Var(this, push(std::move(out), wants, false, wants ? Backprop(back) : Backprop(), "affine_grid"));
}

Var Graph::bilinear_sample(Var image, Var grid) {
  const Tensor& iv = value(image);
  const Tensor& gv = value(grid);
  Tensor out = air::bilinear_sample(iv, gv);
  const bool wants = wants_grad(image.id()) || wants_grad(grid.id());
  const int ii = image.id(), gi = grid.id();
  auto back = [ii, gi](Graph& g, const Tensor& gout) {
    const Tensor& iv = g.node(ii).value;
    const Tensor& gv = g.node(gi).value;
    Tensor* gimage = g.wants_grad(ii) ? &g.grad_buf(ii) : nullptr;
    Tensor* ggrid = g.wants_grad(gi) ? &g.grad_buf(gi) : nullptr;
    bilinear_sample_backward(iv, gv, gout, gimage, ggrid);
  };
  return Var(this, push(std::move(out), wants, false, wants ? Backprop(back) : Backprop(), "bilinear_sample"));
}

Var Graph::warp(Var image, Var p3) {
  // copy the dims out: pushing nodes may reallocate and invalidate references
  const std::vector<int> shape = value(image).shape();
  if (shape.size() != 3) {
    throw ShapeError("warp: image must be [C,H,W], got " + Tensor::shape_str(shape));
  }
  Var m = rigid_matrix(p3);
  Var grid = affine_grid(m, shape[1], shape[2]);
  return bilinear_sample(image, grid);
}

void Graph::backward(Var root) {
  if (root.graph() != this) throw ShapeError("backward: root from another graph");
  Node& r = node(root.id());
  if (r.value.numel() != 1) {
    throw ShapeError("backward: root must be scalar, got shape " +
                     Tensor::shape_str(r.value.shape()));
  }
  if (r.grad.empty()) r.grad = Tensor::ones_like(r.value);
  for (int id = root.id(); id >= 0; --id) {
    Node& n = node(id);
    if (n.grad.empty() || !n.backprop) continue;
    n.backprop(*this, n.grad);
  }
  // Leaves untouched by the sweep still get a (zero) gradient.
  for (auto& n : *nodes_) {
    if (n.leaf_requires_grad && n.grad.empty()) n.grad = Tensor::zeros_like(n.value);
  }
}

}  // namespace air
