#include "air/nets.hpp"

#include <algorithm>
#include <cmath>

#include "air/error.hpp"
#include "air/rng.hpp"

namespace air {

NetworkSpec NetworkSpec::generator(int in_channels, int n_outputs, int input_size) {
  NetworkSpec s;
  s.in_channels = in_channels;
  s.n_outputs = n_outputs;
  s.input_size = input_size;
  s.final_activation = FinalActivation::kNone;
  return s;
}

NetworkSpec NetworkSpec::discriminator(int in_channels, int input_size) {
  NetworkSpec s;
  s.in_channels = in_channels;
  s.n_outputs = 1;
  s.input_size = input_size;
  s.final_activation = FinalActivation::kSigmoid;
  return s;
}

int NetworkSpec::reduced_size() const {
  // two 3x3 stride-2 convs with padding 1
  int s = (input_size - 1) / 2 + 1;
  return (s - 1) / 2 + 1;
}

int NetworkSpec::flatten_size() const {
  const int r = reduced_size();
  return bottleneck_channels * r * r;
}

Network::Network(NetworkSpec spec, std::vector<NamedTensor> params)
    : spec_(spec), params_(std::move(params)) {}

Tensor& Network::param(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return p.value;
  }
  throw ShapeError("no parameter named '" + name + "'");
}

const Tensor& Network::param(const std::string& name) const {
  return const_cast<Network*>(this)->param(name);
}

namespace {

Tensor init_uniform(std::vector<int> shape, int fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const float s = std::sqrt(1.0f / static_cast<float>(fan_in));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-s, s);
  return t;
}

void add_conv(std::vector<NamedTensor>& params, const std::string& name, int cout, int cin, int k,
              Rng& rng) {
  const int fan_in = cin * k * k;
  params.push_back({name + ".w", init_uniform({cout, cin, k, k}, fan_in, rng)});
  params.push_back({name + ".b", init_uniform({cout}, fan_in, rng)});
}

}  // namespace

Network build_network(const NetworkSpec& spec, uint64_t seed) {
  if (spec.in_channels < 2) {
    throw ShapeError("NetworkSpec: in_channels must be >= 2 (concatenated pair), got " +
                     std::to_string(spec.in_channels));
  }
  if (spec.n_outputs < 1 || spec.base_filters < 1 || spec.bottleneck_channels < 1 ||
      spec.hidden_units < 1) {
    throw ShapeError("NetworkSpec: output/filter/hidden counts must be positive");
  }
  if (spec.input_size < 8) {
    throw ShapeError("NetworkSpec: input_size must be >= 8, got " +
                     std::to_string(spec.input_size));
  }
  Rng rng(derive_seed(seed, 0x6e657473ULL));
  const int B = spec.base_filters;
  std::vector<NamedTensor> params;
  add_conv(params, "conv0", B, spec.in_channels, 3, rng);
  add_conv(params, "conv1", B, B, 3, rng);
  add_conv(params, "conv2", B, B, 3, rng);
  add_conv(params, "res1", B, B, 3, rng);
  add_conv(params, "res2", B, B, 3, rng);
  add_conv(params, "res3", B, B, 3, rng);
  add_conv(params, "bottleneck", spec.bottleneck_channels, B, 1, rng);
  const int F = spec.flatten_size();
  params.push_back({"fc1.w", init_uniform({spec.hidden_units, F}, F, rng)});
  params.push_back({"fc1.b", init_uniform({spec.hidden_units}, F, rng)});
  // Zero head: the untrained network reports the identity transform / 0.5.
  params.push_back({"fc2.w", Tensor::zeros({spec.n_outputs, spec.hidden_units})});
  params.push_back({"fc2.b", Tensor::zeros({spec.n_outputs})});
  return Network(spec, std::move(params));
}

ParamBinding Network::bind(Graph& g, bool trainable) const {
  ParamBinding binding;
  binding.vars.reserve(params_.size());
  for (const auto& np : params_) {
    Tensor t = np.value;
    t.set_requires_grad(trainable);
    binding.vars.push_back(g.leaf(std::move(t)));
  }
  return binding;
}

Var Network::forward(Graph& g, Var input) const {
  ParamBinding binding = bind(g, false);
  return forward(g, input, binding);
}

Var Network::forward(Graph& g, Var input, const ParamBinding& binding) const {
  const Tensor& iv = input.value();
  if (iv.ndim() != 4 || iv.dim(1) != spec_.in_channels || iv.dim(2) != spec_.input_size ||
      iv.dim(3) != spec_.input_size) {
    throw ShapeError("Network::forward: expected [N," + std::to_string(spec_.in_channels) + "," +
                     std::to_string(spec_.input_size) + "," + std::to_string(spec_.input_size) +
                     "], got " + Tensor::shape_str(iv.shape()));
  }
  if (binding.vars.size() != params_.size()) {
    throw ShapeError("Network::forward: binding does not match parameter count");
  }
  const int N = iv.dim(0);  // copied out; node pushes may invalidate iv
  const std::vector<Var>& p = binding.vars;

  auto conv = [&](Var x, int layer, int stride, int padding, int dilation) {
    return g.conv2d(x, p[static_cast<size_t>(2 * layer)], p[static_cast<size_t>(2 * layer + 1)],
                    stride, padding, dilation);
  };
  Var x = g.relu(conv(input, 0, 1, 2, 2));
  x = g.relu(conv(x, 1, 2, 1, 1));
  x = g.relu(conv(x, 2, 2, 1, 1));
  Var y = g.relu(conv(x, 3, 1, 1, 1));
  y = g.relu(conv(y, 4, 1, 1, 1));
  y = conv(y, 5, 1, 1, 1);
  x = g.relu(g.add(y, x));
  x = g.relu(conv(x, 6, 1, 0, 1));
  x = g.reshape(x, {N, spec_.flatten_size()});
  x = g.relu(g.linear(x, p[14], p[15]));
  x = g.linear(x, p[16], p[17]);
  if (spec_.final_activation == NetworkSpec::FinalActivation::kSigmoid) x = g.sigmoid(x);
  return x;
}

Var pair_input(Graph& g, const Tensor& fixed, const Tensor& moving) {
  require_same_shape(fixed, moving, "pair_input");
  if (fixed.ndim() != 3) {
    throw ShapeError("pair_input: images must be [C,H,W], got " +
                     Tensor::shape_str(fixed.shape()));
  }
  Var f = g.constant(fixed);
  Var m = g.constant(moving);
  Var cat = g.concat_channels(f, m);
  const auto& s = cat.shape();
  return g.reshape(cat, {1, s[0], s[1], s[2]});
}

Var forward_g(const Network& net, Graph& g, const Tensor& fixed, const Tensor& moving) {
  Var out = net.forward(g, pair_input(g, fixed, moving));
  return g.row(out, 0);
}

Var forward_d(const Network& net, Graph& g, const Tensor& fixed, const Tensor& moving) {
  Var out = net.forward(g, pair_input(g, fixed, moving));
  return g.row(out, 0);
}

RigidParams2D to_rigid(const Tensor& params3) {
  if (params3.numel() != 3) {
    throw ShapeError("to_rigid: expected 3 parameters, got " +
                     Tensor::shape_str(params3.shape()));
  }
  RigidParams2D p;
  p.theta = params3[0];
  p.tx = params3[1];
  p.ty = params3[2];
  return p;
}

void clip_weights(Network& net, float c) {
  if (c <= 0.0f) throw ShapeError("clip_weights: clip bound must be positive");
  for (auto& np : net.params()) {
    for (int64_t i = 0; i < np.value.numel(); ++i) {
      np.value[i] = std::clamp(np.value[i], -c, c);
    }
  }
}

}  // namespace air
