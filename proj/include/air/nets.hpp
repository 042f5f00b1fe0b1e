#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "air/autodiff.hpp"
#include "air/geometry.hpp"
#include "air/tensor.hpp"

namespace air {

/// Architecture hyper-parameters shared by the generator and discriminator.
/// The two trunks are identical; only the head differs (output count and
/// final activation).
struct NetworkSpec {
  int in_channels = 4;  // concatenated fixed+moving channels
  int n_outputs = 3;
  int base_filters = 128;
  int bottleneck_channels = 8;
  int hidden_units = 256;
  int input_size = 64;  // square spatial extent the flatten layer is sized for
  enum class FinalActivation { kNone, kSigmoid };
  FinalActivation final_activation = FinalActivation::kNone;

  static NetworkSpec generator(int in_channels, int n_outputs, int input_size);
  static NetworkSpec discriminator(int in_channels, int input_size);

  /// Spatial extent after the two stride-2 convolutions.
  int reduced_size() const;
  /// Input extent of the first fully connected layer.
  int flatten_size() const;
};


/// Parameter leaf handles created by one forward pass, parallel to
/// Network::params(). Used to read gradients after backward().
struct ParamBinding {
  std::vector<Var> vars;
};

/// Convolutional trunk + two fully connected layers:
/// dilated 3x3 conv -> ReLU -> two stride-2 3x3 convs (ReLU) ->
/// residual block of 3 convs with skip -> 1x1 bottleneck conv (ReLU) ->
/// flatten -> FC(hidden) -> ReLU -> FC(n_outputs) [-> sigmoid].
class Network {
 public:
  Network() = default;
  Network(NetworkSpec spec, std::vector<NamedTensor> params);

  const NetworkSpec& spec() const { return spec_; }
  std::vector<NamedTensor>& params() { return params_; }
  const std::vector<NamedTensor>& params() const { return params_; }
  Tensor& param(const std::string& name);
  const Tensor& param(const std::string& name) const;

  /// Adds the parameters to a graph as leaves (requires-grad when trainable)
  /// and returns their handles in params() order.
  ParamBinding bind(Graph& g, bool trainable) const;

  /// Batched forward on input [N, in_channels, S, S] through previously
  /// bound parameters.
  Var forward(Graph& g, Var input, const ParamBinding& binding) const;

  /// Forward through a fresh non-trainable binding.
  Var forward(Graph& g, Var input) const;

 private:
  NetworkSpec spec_;
  std::vector<NamedTensor> params_;
};

/// Deterministic construction from a seed. Weights and biases are uniform in
/// [-s, s] with s = sqrt(1/fan_in); the final FC layer starts at zero so an
/// untrained generator emits the identity transform and an untrained
/// discriminator emits exactly 0.5.
Network build_network(const NetworkSpec& spec, uint64_t seed);

/// Concatenates a fixed/moving pair into a single [1, 2C, H, W] input node.
Var pair_input(Graph& g, const Tensor& fixed, const Tensor& moving);

/// Transform parameters for one pair; output Var has n_outputs elements.
Var forward_g(const Network& net, Graph& g, const Tensor& fixed, const Tensor& moving);

/// Alignment score in (0,1) for one pair.
Var forward_d(const Network& net, Graph& g, const Tensor& fixed, const Tensor& moving);

RigidParams2D to_rigid(const Tensor& params3);

/// Clamps every parameter element to [-c, c].
void clip_weights(Network& net, float c);

}  // namespace air
