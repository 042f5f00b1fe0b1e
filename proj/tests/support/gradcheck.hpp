#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "air/autodiff.hpp"
#include "air/rng.hpp"
#include "air/tensor.hpp"

namespace airtest {

// Scalar functional applied to the checked op's output. The finite-difference
// side recomputes the reduction in double from the f32 forward tensor, so the
// comparison is not polluted by rounding the scalar root itself to f32.
enum class Reduction { kSumSquares, kMean };

struct GradCheckReport {
  bool pass = true;
  double max_ratio = 0.0;  // error / allowance, > 1 fails
  double max_rel = 0.0;    // plain relative error where the denominator is significant
  int checked = 0;
};

// Central finite differences with fixed epsilon (plus an absolute-noise
// allowance atol for elements whose gradient is near zero, where f32 forward
// rounding dominates). Elementwise pass criterion:
//   |analytic - fd| <= rtol * max(|analytic|, |fd|) + atol
inline GradCheckReport grad_check(
    std::vector<air::Tensor> inputs,
    const std::function<air::Var(air::Graph&, const std::vector<air::Var>&)>& build,
    Reduction reduction, double rtol, double atol = 5e-4, float eps = 1e-2f,
    const std::vector<size_t>* fd_inputs = nullptr) {
  auto reduce_double = [&](const air::Tensor& t) {
    double acc = 0.0;
    for (int64_t i = 0; i < t.numel(); ++i) {
      const double v = t[i];
      acc += reduction == Reduction::kSumSquares ? v * v : v;
    }
    if (reduction == Reduction::kMean) acc /= static_cast<double>(t.numel());
    return acc;
  };

  // Analytic gradients.
  std::vector<air::Tensor> analytic;
  {
    air::Graph g;
    std::vector<air::Var> vars;
    for (auto t : inputs) {
      t.set_requires_grad(true);
      vars.push_back(g.leaf(std::move(t)));
    }
    air::Var out = build(g, vars);
    air::Var root = reduction == Reduction::kSumSquares
                        ? g.squared_l2(out, g.constant(air::Tensor::zeros_like(out.value())))
                        : g.reduce_mean(out);
    g.backward(root);
    for (const auto& v : vars) analytic.push_back(g.grad(v));
  }

  auto forward_value = [&](const std::vector<air::Tensor>& xs) {
    air::Graph g;
    std::vector<air::Var> vars;
    for (const auto& t : xs) vars.push_back(g.constant(t));
    return reduce_double(build(g, vars).value());
  };

  GradCheckReport rep;
  for (size_t k = 0; k < inputs.size(); ++k) {
    if (fd_inputs) {
      bool selected = false;
      for (size_t s : *fd_inputs) selected = selected || s == k;
      if (!selected) continue;
    }
    for (int64_t j = 0; j < inputs[k].numel(); ++j) {
      const float saved = inputs[k][j];
      inputs[k][j] = saved + eps;
      const double f1 = forward_value(inputs);
      inputs[k][j] = saved - eps;
      const double f2 = forward_value(inputs);
      inputs[k][j] = saved;
      const double fd = (f1 - f2) / (2.0 * static_cast<double>(eps));
      const double an = analytic[k][j];
      const double err = std::abs(an - fd);
      const double denom = std::max(std::abs(an), std::abs(fd));
      const double allowance = rtol * denom + atol;
      rep.max_ratio = std::max(rep.max_ratio, err / allowance);
      if (denom > 20.0 * atol) rep.max_rel = std::max(rep.max_rel, err / denom);
      rep.pass = rep.pass && err <= allowance;
      ++rep.checked;
    }
  }
  return rep;
}

inline air::Tensor random_tensor(std::vector<int> shape, uint64_t seed, float lo = -1.0f,
                                 float hi = 1.0f) {
  air::Tensor t(std::move(shape));
  air::Rng rng(seed);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

}  // namespace airtest
