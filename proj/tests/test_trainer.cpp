#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "air/autodiff.hpp"
#include "air/resampler.hpp"
#include "air/rng.hpp"
#include "air/synthdata.hpp"
#include "air/trainer.hpp"
#include "air/volume_io.hpp"
#include "gradcheck.hpp"
#include "testutil.hpp"

using namespace air;
using airtest::TempDir;

namespace {

ImagePair small_pair(uint64_t seed) {
  ImagePair p = generate_pair(seed, 32, 1, 1.0f);
  p.id = "pair_" + std::to_string(seed);
  return p;
}

Network small_net(bool discriminator, uint64_t seed, int base = 4, int hidden = 16) {
  NetworkSpec spec = discriminator ? NetworkSpec::discriminator(2, 32)
                                   : NetworkSpec::generator(2, 3, 32);
  spec.base_filters = base;
  spec.hidden_units = hidden;
  return build_network(spec, seed);
}

// Knock the head away from its all-zero start so scores are informative.
void break_head(Network& net, float scale) {
  Tensor& w = net.param("fc2.w");
  for (int64_t i = 0; i < w.numel(); ++i) w[i] = scale * static_cast<float>(i % 7 - 3);
}

Dataset tiny_dataset(const std::filesystem::path& dir, int n = 6, int size = 32, int channels = 1) {
  return make_dataset(n, 5, size, channels, 1.0f, dir);
}

}  // namespace

TEST_CASE("score-combination extremes of the discriminator loss") {
  Graph g;
  // constant D of one half on both branches
  Var half_a = g.constant(Tensor({4, 1}, 0.5f));
  Var half_p = g.constant(Tensor({4, 1}, 0.5f));
  CHECK(d_loss_from_scores(g, half_a, half_p).value().item() == doctest::Approx(0.0f));

  // perfect separation reaches the sigmoid-bounded minimum of -1
  Var ones = g.constant(Tensor({4, 1}, 1.0f));
  Var zeros = g.constant(Tensor({4, 1}, 0.0f));
  CHECK(d_loss_from_scores(g, ones, zeros).value().item() == doctest::Approx(-1.0f));
}

TEST_CASE("score-combination extremes of the generator loss") {
  Graph g;
  // perfect estimate (zero distance) scored 1 by D
  Var ones = g.constant(Tensor({3, 1}, 1.0f));
  Var zero_dist = g.constant(Tensor::scalar(0.0f));
  CHECK(g_loss_from_scores(g, ones, zero_dist, 1.0f).value().item() == doctest::Approx(0.0f));

  // D of one half with identity perturbation and identity estimate
  Var halves = g.constant(Tensor({3, 1}, 0.5f));
  CHECK(g_loss_from_scores(g, halves, zero_dist, 1.0f).value().item() == doctest::Approx(0.5f));

  // alpha = 0 drops the supervision term entirely
  Var dist = g.constant(Tensor::scalar(9.0f));
  CHECK(g_loss_from_scores(g, halves, dist, 0.0f).value().item() == doctest::Approx(0.5f));
}

TEST_CASE("d_loss with identity perturbation vanishes for any D") {
  Network d = small_net(true, 3);
  break_head(d, 0.02f);
  const ImagePair pair = small_pair(1);
  Graph g;
  const float loss = d_loss(g, d, pair, RigidParams2D{}).value().item();
  CHECK(std::abs(loss) <= 1e-5f);
}

TEST_CASE("d_loss matches a straight-line scalar evaluation") {
  Network d = small_net(true, 7);
  break_head(d, 0.03f);
  const ImagePair pair = small_pair(2);
  PerturbationRange range;
  range.image_size_px = 32;
  const RigidParams2D t = sample_perturbation(range, 11);

  Graph g;
  const double via_graph = d_loss(g, d, pair, t).value().item();

  Graph g1, g2;
  const double aligned = forward_d(d, g1, pair.fixed, pair.moving).value().item();
  const double perturbed = forward_d(d, g2, pair.fixed, warp(pair.moving, t)).value().item();
  const double oracle = -aligned + perturbed;
  CHECK(std::abs(via_graph - oracle) <= 1e-5);
}

TEST_CASE("g_loss matches a straight-line scalar evaluation") {
  Network gen = small_net(false, 13);
  break_head(gen, 0.01f);
  Network d = small_net(true, 17);
  break_head(d, 0.03f);
  const ImagePair pair = small_pair(3);
  PerturbationRange range;
  range.image_size_px = 32;
  const RigidParams2D t = sample_perturbation(range, 21);
  const float alpha = 1.5f;

  Graph g;
  const double via_graph = g_loss(g, gen, d, pair, t, alpha).value().item();

  const Tensor moved = warp(pair.moving, t);
  Graph g1;
  const RigidParams2D t_est = to_rigid(forward_g(gen, g1, pair.fixed, moved).value());
  Graph g2;
  const double d_warped =
      forward_d(d, g2, pair.fixed, warp(moved, t_est)).value().item();
  const double oracle =
      1.0 - d_warped + static_cast<double>(alpha) * param_distance(t_est, invert(t));
  CHECK(std::abs(via_graph - oracle) <= 1e-5);
}

TEST_CASE("g_loss with a perfect estimate and a fully convinced D is zero") {
  // identity perturbation, generator still at its identity initialization,
  // so t_est == perturb^{-1} exactly; force D to emit 1 via a huge bias.
  Network gen = small_net(false, 23);
  Network d = small_net(true, 29);
  d.param("fc2.b")[0] = 1e6f;  // sigmoid saturates to 1
  const ImagePair pair = small_pair(4);
  Graph g;
  const float loss = g_loss(g, gen, d, pair, RigidParams2D{}, 1.0f).value().item();
  CHECK(loss == doctest::Approx(0.0f).epsilon(1e-6));
}

TEST_CASE("optimizer_step follows the RMSProp rule") {
  Tensor p({3}, std::vector<float>{1.0f, -2.0f, 0.5f});
  Tensor acc({3});
  const Tensor zero_grad({3});
  Tensor p0 = p;
  optimizer_step(p, zero_grad, acc, 0.01f);
  for (int64_t i = 0; i < 3; ++i) CHECK(p[i] == p0[i]);

  // constant gradient drives the step size toward lr * sign(g)
  Tensor q({1}, std::vector<float>{0.0f});
  Tensor qacc({1});
  const Tensor g({1}, std::vector<float>{0.5f});
  const float lr = 0.01f;
  float prev = q[0];
  float last_step = 0.0f;
  for (int i = 0; i < 200; ++i) {
    optimizer_step(q, g, qacc, lr);
    last_step = prev - q[0];
    prev = q[0];
  }
  CHECK(last_step == doctest::Approx(lr).epsilon(0.02));

  // deterministic given identical state
  Tensor a1({2}, std::vector<float>{0.3f, -0.4f}), acc1({2});
  Tensor a2 = a1, acc2 = acc1;
  const Tensor gg({2}, std::vector<float>{0.2f, 0.7f});
  optimizer_step(a1, gg, acc1, 0.05f);
  optimizer_step(a2, gg, acc2, 0.05f);
  CHECK(a1[0] == a2[0]);
  CHECK(a1[1] == a2[1]);
}

TEST_CASE("frozen D reduces g_loss to supervised regression that converges") {
  // D stays at its zero-head initialization, so it scores exactly 0.5 and
  // g_loss == 0.5 + alpha * mean distance; the alpha term must shrink
  // monotonically under optimization.
  Network gen = small_net(false, 31);
  Network d = small_net(true, 37);
  std::vector<ImagePair> pairs;
  std::vector<BatchItem> batch;
  PerturbationRange range;
  range.image_size_px = 32;
  for (uint64_t i = 0; i < 20; ++i) pairs.push_back(small_pair(100 + i));
  for (uint64_t i = 0; i < 20; ++i) {
    batch.push_back({&pairs[i], sample_perturbation(range, 200 + i), 0});
  }

  std::vector<Tensor> acc;
  for (const auto& p : gen.params()) acc.push_back(Tensor::zeros_like(p.value));

  std::vector<float> mean_dist;
  for (int step = 0; step < 200; ++step) {
    Graph g;
    ParamBinding gb = gen.bind(g, true);
    Var loss = g_loss(g, gen, gb, d, batch, 1.0f);
    mean_dist.push_back(loss.value().item() - 0.5f);
    g.backward(loss);
    for (size_t i = 0; i < gen.params().size(); ++i) {
      optimizer_step(gen.params()[i].value, g.grad(gb.vars[i]), acc[i], 3.5e-4f);
    }
  }
  for (size_t k = 1; k < mean_dist.size(); ++k) {
    CHECK(mean_dist[k] <= mean_dist[k - 1] + 1e-7f);
  }
  CHECK(mean_dist.back() < 0.5f * mean_dist.front());
}

namespace {

struct ScheduleObserver : TrainObserver {
  std::string order;
  float max_abs_after_d = 0.0f;
  void on_d_step(int, int, float, const Network& d) override {
    order.push_back('D');
    for (const auto& p : d.params()) {
      for (int64_t i = 0; i < p.value.numel(); ++i) {
        max_abs_after_d = std::max(max_abs_after_d, std::abs(p.value[i]));
      }
    }
  }
  void on_g_step(int, float, const Network&) override { order.push_back('G'); }
};

}  // namespace

TEST_CASE("training follows the D,D,G schedule and clips the critic") {
  TempDir tmp("airtrain");
  const Dataset data = tiny_dataset(tmp.path() / "d");
  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.epochs = 1;
  cfg.base_filters = 4;
  cfg.hidden_units = 8;
  cfg.max_total_iters = 2;
  cfg.val_every = 1;
  cfg.perturb.image_size_px = data.size;
  ScheduleObserver obs;
  const TrainResult res = train(cfg, data, tmp.path() / "out", &obs);
  CHECK(res.iterations == 2);
  CHECK(obs.order == "DDGDDG");
  CHECK(obs.max_abs_after_d <= cfg.clip_c);
  CHECK(std::filesystem::exists(res.metrics_path));
  CHECK(std::filesystem::exists(res.checkpoint_path));

  std::ifstream is(res.metrics_path);
  std::string header;
  std::getline(is, header);
  CHECK(header == "iter,d_loss,g_loss,val_tre_mm,val_dscore");
}

TEST_CASE("training is bitwise reproducible for a fixed seed") {
  TempDir tmp("airtrain_repro");
  const Dataset data = tiny_dataset(tmp.path() / "d");
  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.epochs = 1;
  cfg.base_filters = 4;
  cfg.hidden_units = 8;
  cfg.max_total_iters = 3;
  cfg.seed = 77;
  cfg.perturb.image_size_px = data.size;
  train(cfg, data, tmp.path() / "a");
  train(cfg, data, tmp.path() / "b");
  for (const char* name : {"metrics.csv", "checkpoint.airckpt"}) {
    std::ifstream fa(tmp.path() / "a" / name, std::ios::binary);
    std::ifstream fb(tmp.path() / "b" / name, std::ios::binary);
    const std::string ca((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    const std::string cb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    CHECK(ca == cb);
    CHECK(!ca.empty());
  }
}

TEST_CASE("training aborts loudly on non-finite data") {
  TempDir tmp("airtrain_nan");
  const auto dir = tmp.path() / "d";
  Dataset data = tiny_dataset(dir);
  // poison one training volume
  const auto train_ids = data.ids(Split::kTrain);
  Tensor bad({1, 32, 32}, std::numeric_limits<float>::quiet_NaN());
  save_volume(bad, dir / (train_ids[0] + "_moving.airvol"));

  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.epochs = 1;
  cfg.base_filters = 4;
  cfg.hidden_units = 8;
  cfg.max_total_iters = 2;
  cfg.perturb.image_size_px = data.size;
  const bool saved = nan_checks_enabled();
  set_nan_checks(false);
  CHECK_THROWS_AS(train(cfg, data, tmp.path() / "out"), NumericError);
  set_nan_checks(saved);
  CHECK(std::filesystem::exists(tmp.path() / "out" / "nan_diagnostics.json"));
}

TEST_CASE("checkpoints round trip bitwise and preserve forward outputs") {
  TempDir tmp("airckpt");
  Network gen = small_net(false, 41);
  Network dis = small_net(true, 43);
  break_head(gen, 0.01f);
  break_head(dis, 0.02f);
  std::vector<Tensor> og, od;
  for (const auto& p : gen.params()) og.push_back(Tensor::zeros_like(p.value));
  for (const auto& p : dis.params()) od.push_back(Tensor::zeros_like(p.value));
  TrainConfig cfg;
  cfg.epochs = 3;
  const auto path = tmp.path() / "ck.airckpt";
  save_checkpoint(make_checkpoint(gen, dis, og, od, cfg, 2), path);

  const RestoredState st = restore_checkpoint(load_checkpoint(path));
  CHECK(st.epoch == 2);
  CHECK(st.config.epochs == 3);

  const ImagePair pair = small_pair(9);
  Graph g1, g2;
  const Tensor a = forward_g(gen, g1, pair.fixed, pair.moving).value();
  const Tensor b = forward_g(st.gen, g2, pair.fixed, pair.moving).value();
  for (int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
  Graph g3, g4;
  CHECK(forward_d(dis, g3, pair.fixed, pair.moving).value().item() ==
        forward_d(st.dis, g4, pair.fixed, pair.moving).value().item());
}

TEST_CASE("checkpoint loader rejects corrupt files") {
  TempDir tmp("airckpt_bad");
  Network gen = small_net(false, 51);
  Network dis = small_net(true, 53);
  std::vector<Tensor> og, od;
  for (const auto& p : gen.params()) og.push_back(Tensor::zeros_like(p.value));
  for (const auto& p : dis.params()) od.push_back(Tensor::zeros_like(p.value));
  const auto path = tmp.path() / "ck.airckpt";
  save_checkpoint(make_checkpoint(gen, dis, og, od, TrainConfig{}, 0), path);

  // truncation inside a tensor payload
  const auto truncated = tmp.path() / "trunc.airckpt";
  std::filesystem::copy_file(path, truncated);
  std::filesystem::resize_file(truncated, std::filesystem::file_size(path) / 2);
  CHECK_THROWS_AS(load_checkpoint(truncated), FormatError);

  // version mismatch
  const auto wrong_version = tmp.path() / "ver.airckpt";
  std::filesystem::copy_file(path, wrong_version);
  {
    std::fstream f(wrong_version, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    const char v[4] = {9, 0, 0, 0};
    f.write(v, 4);
  }
  CHECK_THROWS_WITH_AS(load_checkpoint(wrong_version), doctest::Contains("version"), FormatError);

  // bad magic
  const auto bad_magic = tmp.path() / "magic.airckpt";
  std::filesystem::copy_file(path, bad_magic);
  {
    std::fstream f(bad_magic, std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXXXXXX", 8);
  }
  CHECK_THROWS_AS(load_checkpoint(bad_magic), FormatError);
}

TEST_CASE("train config JSON round trips and rejects unknown keys") {
  TrainConfig cfg;
  cfg.alpha = 2.5f;
  cfg.n_critic = 3;
  cfg.perturb.max_rotation_deg = 10.0f;
  const TrainConfig back = train_config_from_json(train_config_to_json(cfg));
  CHECK(back.alpha == cfg.alpha);
  CHECK(back.n_critic == 3);
  CHECK(back.perturb.max_rotation_deg == 10.0f);
  CHECK(back.clip_c == 0.01f);

  CHECK_THROWS_AS(train_config_from_json("{\"learning_rate\": 1}"), FormatError);
  CHECK_THROWS_AS(train_config_from_json("not json"), FormatError);
}

TEST_CASE("defaults carry the published training constants") {
  const TrainConfig cfg;
  CHECK(cfg.clip_c == 0.01f);
  CHECK(cfg.n_critic == 2);
  CHECK(cfg.alpha == 1.0f);
  const PerturbationRange r;
  CHECK(r.max_rotation_deg == 25.0f);
  CHECK(r.max_translation_mm == 5.0f);
}
