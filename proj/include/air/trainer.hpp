#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "air/autodiff.hpp"
#include "air/checkpoint.hpp"
#include "air/geometry.hpp"
#include "air/nets.hpp"
#include "air/synthdata.hpp"

namespace air {

/// Adversarial training hyper-parameters. clip_c and n_critic defaults are
/// the published constants; the architecture knobs default to the full-size
/// networks and may be reduced for CPU-budget runs.
struct TrainConfig {
  float alpha = 1.0f;
  float clip_c = 0.01f;
  int n_critic = 2;
  int batch_size = 8;
  float lr = 5e-5f;
  int epochs = 10;
  PerturbationRange perturb;
  uint64_t seed = 0;

  int base_filters = 128;
  int bottleneck_channels = 8;
  int hidden_units = 256;

  int val_every = 50;        // iterations between validation metric rows
  int max_total_iters = 0;   // 0 = run all epochs
  bool deterministic = false;
};

/// One training sample: an aligned pair plus the random misalignment applied
/// to its moving image.
struct BatchItem {
  const ImagePair* pair = nullptr;
  RigidParams2D perturb;
  uint64_t perturb_seed = 0;
};

/// Discriminator loss: mean over the batch of
///   -D(fixed, moving) + D(fixed, warp(moving, perturb)).
/// Minimized when aligned pairs score high and perturbed pairs low.
Var d_loss(Graph& g, const Network& d, const ParamBinding& binding,
           std::span<const BatchItem> batch);

/// Generator loss: with t_est = G(fixed, warp(moving, perturb)), mean over
/// the batch of
///   1 - D(fixed, warp(warp(moving, perturb), t_est))
///     + alpha * || t_est - perturb^{-1} ||^2.
/// The discriminator is treated as fixed; gradients reach only G.
Var g_loss(Graph& g, const Network& gen, const ParamBinding& gen_binding, const Network& d,
           std::span<const BatchItem> batch, float alpha);

/// Singleton-batch conveniences matching the per-pair contracts.
Var d_loss(Graph& g, const Network& d, const ImagePair& pair, const RigidParams2D& perturb);
Var g_loss(Graph& g, const Network& gen, const Network& d, const ImagePair& pair,
           const RigidParams2D& perturb, float alpha);

/// Score-combination layer shared by the losses, exposed for direct
/// verification against the scalar formulas:
///   d: mean(perturbed) - mean(aligned);  g: 1 - mean(scores) + alpha * dist.
Var d_loss_from_scores(Graph& g, Var aligned_scores, Var perturbed_scores);
Var g_loss_from_scores(Graph& g, Var warped_scores, Var mean_param_dist, float alpha);

/// RMSProp-style update:
///   acc <- 0.9 acc + 0.1 grad^2;  param <- param - lr * grad / (sqrt(acc) + 1e-8).
void optimizer_step(Tensor& param, const Tensor& grad, Tensor& acc, float lr);

/// Training progress hooks; step indices are global (0-based).
class TrainObserver {
 public:
  virtual ~TrainObserver() = default;
  virtual void on_d_step(int /*iter*/, int /*critic_step*/, float /*loss*/,
                         const Network& /*d*/) {}
  virtual void on_g_step(int /*iter*/, float /*loss*/, const Network& /*gen*/) {}
};

struct TrainResult {
  Network gen;
  Network dis;
  std::filesystem::path checkpoint_path;
  std::filesystem::path metrics_path;
  int iterations = 0;
};

/// WGAN-style loop: per iteration, n_critic discriminator updates (fresh
/// batch each, weight clip after every update) followed by one generator
/// update. Writes metrics.csv and a rolling checkpoint under out_dir.
/// Aborts with NumericError (after dumping batch seeds) on a non-finite loss.
TrainResult train(const TrainConfig& cfg, const Dataset& data,
                  const std::filesystem::path& out_dir, TrainObserver* observer = nullptr);

/// Checkpoint payload helpers. Tensor names are prefixed g/, d/, opt_g/,
/// opt_d/; the JSON trailer echoes the config and epoch.
Checkpoint make_checkpoint(const Network& gen, const Network& dis,
                           const std::vector<Tensor>& opt_g, const std::vector<Tensor>& opt_d,
                           const TrainConfig& cfg, int epoch);
struct RestoredState {
  Network gen;
  Network dis;
  std::vector<Tensor> opt_g;
  std::vector<Tensor> opt_d;
  TrainConfig config;
  int epoch = 0;
};
RestoredState restore_checkpoint(const Checkpoint& ck);

std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);

}  // namespace air
