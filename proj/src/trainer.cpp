#include "air/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "air/error.hpp"
#include "air/evaluator.hpp"
#include "air/resampler.hpp"
#include "air/rng.hpp"

namespace air {

namespace {

constexpr uint64_t kTagGenInit = 0x67656eULL;    // network init streams
constexpr uint64_t kTagDisInit = 0x646973ULL;
constexpr uint64_t kTagPick = 0x7069636bULL;     // batch pair selection
constexpr uint64_t kTagPerturb = 0x70657274ULL;  // per-item misalignments
constexpr uint64_t kTagVal = 0x76616cULL;        // validation perturbations

std::string fmt_float(float v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
  return buf;
}

}  // namespace

Var d_loss_from_scores(Graph& g, Var aligned_scores, Var perturbed_scores) {
  return g.sub(g.reduce_mean(perturbed_scores), g.reduce_mean(aligned_scores));
}

Var g_loss_from_scores(Graph& g, Var warped_scores, Var mean_param_dist, float alpha) {
  Var one_minus = g.add_scalar(g.scale(g.reduce_mean(warped_scores), -1.0f), 1.0f);
  return g.add(one_minus, g.scale(mean_param_dist, alpha));
}

Var d_loss(Graph& g, const Network& d, const ParamBinding& binding,
           std::span<const BatchItem> batch) {
  if (batch.empty()) throw ShapeError("d_loss: empty batch");
  const int B = static_cast<int>(batch.size());
  std::vector<Var> items;
  items.reserve(2 * static_cast<size_t>(B));
  for (const auto& it : batch) {
    items.push_back(g.concat_channels(g.constant(it.pair->fixed), g.constant(it.pair->moving)));
  }
  for (const auto& it : batch) {
    Tensor perturbed = warp(it.pair->moving, it.perturb);
    items.push_back(g.concat_channels(g.constant(it.pair->fixed), g.constant(std::move(perturbed))));
  }
  Var scores = d.forward(g, g.stack(items), binding);  // [2B, 1]
  return d_loss_from_scores(g, g.rows(scores, 0, B), g.rows(scores, B, 2 * B));
}

Var g_loss(Graph& g, const Network& gen, const ParamBinding& gen_binding, const Network& d,
           std::span<const BatchItem> batch, float alpha) {
  if (batch.empty()) throw ShapeError("g_loss: empty batch");
  const int B = static_cast<int>(batch.size());
  std::vector<Tensor> perturbed(static_cast<size_t>(B));
  std::vector<Var> g_items;
  g_items.reserve(static_cast<size_t>(B));
  for (int i = 0; i < B; ++i) {
    perturbed[static_cast<size_t>(i)] = warp(batch[i].pair->moving, batch[i].perturb);
    g_items.push_back(g.concat_channels(g.constant(batch[i].pair->fixed),
                                        g.constant(perturbed[static_cast<size_t>(i)])));
  }
  Var t_est = gen.forward(g, g.stack(g_items), gen_binding);  // [B, 3]

  std::vector<Var> d_items;
  d_items.reserve(static_cast<size_t>(B));
  Var dist_sum;
  for (int i = 0; i < B; ++i) {
    Var ti = g.row(t_est, i);
    Var rewarped = g.warp(g.constant(perturbed[static_cast<size_t>(i)]), ti);
    d_items.push_back(g.concat_channels(g.constant(batch[i].pair->fixed), rewarped));
    const RigidParams2D target = invert(batch[i].perturb);
    Var di = g.squared_l2(ti, g.constant(Tensor({3}, {target.theta, target.tx, target.ty})));
    dist_sum = (i == 0) ? di : g.add(dist_sum, di);
  }
  Var scores = d.forward(g, g.stack(d_items));  // D fixed: non-trainable binding
  Var mean_dist = g.scale(dist_sum, 1.0f / static_cast<float>(B));
  return g_loss_from_scores(g, scores, mean_dist, alpha);
}

Var d_loss(Graph& g, const Network& d, const ImagePair& pair, const RigidParams2D& perturb) {
  const BatchItem item{&pair, perturb, 0};
  ParamBinding binding = d.bind(g, false);
  return d_loss(g, d, binding, std::span<const BatchItem>(&item, 1));
}

Var g_loss(Graph& g, const Network& gen, const Network& d, const ImagePair& pair,
           const RigidParams2D& perturb, float alpha) {
  const BatchItem item{&pair, perturb, 0};
  ParamBinding binding = gen.bind(g, false);
  return g_loss(g, gen, binding, d, std::span<const BatchItem>(&item, 1), alpha);
}

void optimizer_step(Tensor& param, const Tensor& grad, Tensor& acc, float lr) {
  require_same_shape(param, grad, "optimizer_step");
  require_same_shape(param, acc, "optimizer_step");
  const int64_t n = param.numel();
  for (int64_t i = 0; i < n; ++i) {
    const float gv = grad[i];
    acc[i] = 0.9f * acc[i] + 0.1f * gv * gv;
    param[i] -= lr * gv / (std::sqrt(acc[i]) + 1e-8f);
  }
}

namespace {

nlohmann::json spec_to_json(const NetworkSpec& s) {
  return {{"in_channels", s.in_channels},
          {"n_outputs", s.n_outputs},
          {"base_filters", s.base_filters},
          {"bottleneck_channels", s.bottleneck_channels},
          {"hidden_units", s.hidden_units},
          {"input_size", s.input_size},
          {"final_activation",
           s.final_activation == NetworkSpec::FinalActivation::kSigmoid ? "sigmoid" : "none"}};
}

NetworkSpec spec_from_json(const nlohmann::json& j) {
  NetworkSpec s;
  s.in_channels = j.at("in_channels").get<int>();
  s.n_outputs = j.at("n_outputs").get<int>();
  s.base_filters = j.at("base_filters").get<int>();
  s.bottleneck_channels = j.at("bottleneck_channels").get<int>();
  s.hidden_units = j.at("hidden_units").get<int>();
  s.input_size = j.at("input_size").get<int>();
  s.final_activation = j.at("final_activation").get<std::string>() == "sigmoid"
                           ? NetworkSpec::FinalActivation::kSigmoid
                           : NetworkSpec::FinalActivation::kNone;
  return s;
}

nlohmann::json config_to_json_obj(const TrainConfig& cfg) {
  return {{"alpha", cfg.alpha},
          {"clip_c", cfg.clip_c},
          {"n_critic", cfg.n_critic},
          {"batch_size", cfg.batch_size},
          {"lr", cfg.lr},
          {"epochs", cfg.epochs},
          {"seed", cfg.seed},
          {"base_filters", cfg.base_filters},
          {"bottleneck_channels", cfg.bottleneck_channels},
          {"hidden_units", cfg.hidden_units},
          {"val_every", cfg.val_every},
          {"max_total_iters", cfg.max_total_iters},
          {"deterministic", cfg.deterministic},
          {"perturb",
           {{"max_rotation_deg", cfg.perturb.max_rotation_deg},
            {"max_translation_mm", cfg.perturb.max_translation_mm},
            {"pixel_spacing_mm", cfg.perturb.pixel_spacing_mm},
            {"image_size_px", cfg.perturb.image_size_px}}}};
}

void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> known,
                         const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw FormatError("unknown key '" + key + "' in " + where);
  }
}

TrainConfig config_from_json_obj(const nlohmann::json& j) {
  reject_unknown_keys(j,
                      {"alpha", "clip_c", "n_critic", "batch_size", "lr", "epochs", "seed",
                       "base_filters", "bottleneck_channels", "hidden_units", "val_every",
                       "max_total_iters", "deterministic", "perturb"},
                      "train config");
  TrainConfig cfg;
  cfg.alpha = j.value("alpha", cfg.alpha);
  cfg.clip_c = j.value("clip_c", cfg.clip_c);
  cfg.n_critic = j.value("n_critic", cfg.n_critic);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.lr = j.value("lr", cfg.lr);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.base_filters = j.value("base_filters", cfg.base_filters);
  cfg.bottleneck_channels = j.value("bottleneck_channels", cfg.bottleneck_channels);
  cfg.hidden_units = j.value("hidden_units", cfg.hidden_units);
  cfg.val_every = j.value("val_every", cfg.val_every);
  cfg.max_total_iters = j.value("max_total_iters", cfg.max_total_iters);
  cfg.deterministic = j.value("deterministic", cfg.deterministic);
  if (j.contains("perturb")) {
    const auto& p = j.at("perturb");
    reject_unknown_keys(
        p, {"max_rotation_deg", "max_translation_mm", "pixel_spacing_mm", "image_size_px"},
        "perturb config");
    cfg.perturb.max_rotation_deg = p.value("max_rotation_deg", cfg.perturb.max_rotation_deg);
    cfg.perturb.max_translation_mm = p.value("max_translation_mm", cfg.perturb.max_translation_mm);
    cfg.perturb.pixel_spacing_mm = p.value("pixel_spacing_mm", cfg.perturb.pixel_spacing_mm);
    cfg.perturb.image_size_px = p.value("image_size_px", cfg.perturb.image_size_px);
  }
  return cfg;
}

}  // namespace

std::string train_config_to_json(const TrainConfig& cfg) { return config_to_json_obj(cfg).dump(2); }

TrainConfig train_config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("train config is not valid JSON: ") + e.what());
  }
  return config_from_json_obj(j);
}

Checkpoint make_checkpoint(const Network& gen, const Network& dis,
                           const std::vector<Tensor>& opt_g, const std::vector<Tensor>& opt_d,
                           const TrainConfig& cfg, int epoch) {
  Checkpoint ck;
  for (const auto& p : gen.params()) ck.tensors.push_back({"g/" + p.name, p.value});
  for (const auto& p : dis.params()) ck.tensors.push_back({"d/" + p.name, p.value});
  for (size_t i = 0; i < opt_g.size(); ++i) {
    ck.tensors.push_back({"opt_g/" + gen.params()[i].name, opt_g[i]});
  }
  for (size_t i = 0; i < opt_d.size(); ++i) {
    ck.tensors.push_back({"opt_d/" + dis.params()[i].name, opt_d[i]});
  }
  nlohmann::json meta;
  meta["epoch"] = epoch;
  meta["config"] = config_to_json_obj(cfg);
  meta["gen_spec"] = spec_to_json(gen.spec());
  meta["dis_spec"] = spec_to_json(dis.spec());
  ck.meta_json = meta.dump(2);
  return ck;
}

namespace {

Network network_from_tensors(const Checkpoint& ck, const NetworkSpec& spec,
                             const std::string& prefix) {
  // Build for the parameter list, then overwrite values from the bundle.
  Network net = build_network(spec, 0);
  for (auto& p : net.params()) {
    const Tensor* t = ck.find(prefix + p.name);
    if (!t) throw FormatError("checkpoint is missing tensor '" + prefix + p.name + "'");
    if (!t->same_shape(p.value)) {
      throw FormatError("checkpoint tensor '" + prefix + p.name + "' has shape " +
                        Tensor::shape_str(t->shape()) + ", expected " +
                        Tensor::shape_str(p.value.shape()));
    }
    p.value = *t;
  }
  return net;
}

std::vector<Tensor> opt_from_tensors(const Checkpoint& ck, const Network& net,
                                     const std::string& prefix) {
  std::vector<Tensor> acc;
  acc.reserve(net.params().size());
  for (const auto& p : net.params()) {
    const Tensor* t = ck.find(prefix + p.name);
    acc.push_back(t ? *t : Tensor::zeros_like(p.value));
  }
  return acc;
}

}  // namespace

RestoredState restore_checkpoint(const Checkpoint& ck) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(ck.meta_json);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }
  RestoredState st;
  try {
    st.epoch = meta.at("epoch").get<int>();
    st.config = config_from_json_obj(meta.at("config"));
    st.gen = network_from_tensors(ck, spec_from_json(meta.at("gen_spec")), "g/");
    st.dis = network_from_tensors(ck, spec_from_json(meta.at("dis_spec")), "d/");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata is missing fields: ") + e.what());
  }
  st.opt_g = opt_from_tensors(ck, st.gen, "opt_g/");
  st.opt_d = opt_from_tensors(ck, st.dis, "opt_d/");
  return st;
}

namespace {

struct BatchMaker {
  const std::vector<ImagePair>* pairs;
  PerturbationRange range;
  uint64_t seed;
  Rng pick;

  BatchMaker(const std::vector<ImagePair>* p, const PerturbationRange& r, uint64_t s)
      : pairs(p), range(r), seed(s), pick(derive_seed(s, kTagPick)) {}

  std::vector<BatchItem> make(int batch_size, uint64_t step) {
    std::vector<BatchItem> batch(static_cast<size_t>(batch_size));
    for (int i = 0; i < batch_size; ++i) {
      BatchItem& it = batch[static_cast<size_t>(i)];
      it.pair = &(*pairs)[static_cast<size_t>(pick.below(static_cast<int>(pairs->size())))];
      it.perturb_seed = derive_seed(derive_seed(seed, kTagPerturb),
                                    step * 1024 + static_cast<uint64_t>(i));
      it.perturb = sample_perturbation(range, it.perturb_seed);
    }
    return batch;
  }
};

void dump_nan_diagnostics(const std::filesystem::path& path, const char* stage, int iter,
                          std::span<const BatchItem> batch) {
  nlohmann::json j;
  j["stage"] = stage;
  j["iter"] = iter;
  nlohmann::json items = nlohmann::json::array();
  for (const auto& it : batch) {
    items.push_back({{"pair_id", it.pair->id},
                     {"perturb_seed", it.perturb_seed},
                     {"theta", it.perturb.theta},
                     {"tx", it.perturb.tx},
                     {"ty", it.perturb.ty}});
  }
  j["batch"] = std::move(items);
  std::ofstream os(path);
  os << j.dump(2) << "\n";
}

struct ValCase {
  ImagePair pair;
  RigidParams2D init_t;
};

}  // namespace

TrainResult train(const TrainConfig& cfg, const Dataset& data,
                  const std::filesystem::path& out_dir, TrainObserver* observer) {
  if (cfg.batch_size < 1 || cfg.epochs < 1 || cfg.n_critic < 1) {
    throw ShapeError("TrainConfig: batch_size, epochs and n_critic must be positive");
  }
  const auto train_ids = data.ids(Split::kTrain);
  if (train_ids.empty()) throw ShapeError("train: empty training split");

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  std::vector<ImagePair> train_pairs;
  train_pairs.reserve(train_ids.size());
  for (const auto& id : train_ids) train_pairs.push_back(load_pair(data, id));

  std::vector<ValCase> val_cases;
  {
    const auto val_ids = data.ids(Split::kValidation);
    for (size_t j = 0; j < val_ids.size(); ++j) {
      ValCase vc;
      vc.pair = load_pair(data, val_ids[j]);
      vc.init_t = sample_perturbation(cfg.perturb, derive_seed(derive_seed(cfg.seed, kTagVal), j));
      val_cases.push_back(std::move(vc));
    }
  }

  const int channels = data.channels;
  NetworkSpec gspec = NetworkSpec::generator(2 * channels, 3, data.size);
  NetworkSpec dspec = NetworkSpec::discriminator(2 * channels, data.size);
  for (NetworkSpec* s : {&gspec, &dspec}) {
    s->base_filters = cfg.base_filters;
    s->bottleneck_channels = cfg.bottleneck_channels;
    s->hidden_units = cfg.hidden_units;
  }
  Network gen = build_network(gspec, derive_seed(cfg.seed, kTagGenInit));
  Network dis = build_network(dspec, derive_seed(cfg.seed, kTagDisInit));
  std::vector<Tensor> opt_g, opt_d;
  for (const auto& p : gen.params()) opt_g.push_back(Tensor::zeros_like(p.value));
  for (const auto& p : dis.params()) opt_d.push_back(Tensor::zeros_like(p.value));

  const std::filesystem::path metrics_path = out_dir / "metrics.csv";
  std::ofstream metrics(metrics_path);
  if (!metrics) throw IoError("cannot write " + metrics_path.string());
  metrics << "iter,d_loss,g_loss,val_tre_mm,val_dscore\n";

  BatchMaker batches(&train_pairs, cfg.perturb, cfg.seed);
  const int iters_per_epoch =
      static_cast<int>((train_pairs.size() + cfg.batch_size - 1) / cfg.batch_size);
  const std::filesystem::path ck_path = out_dir / "checkpoint.airckpt";

  int iter = 0;
  uint64_t step_counter = 0;
  bool stop = false;
  for (int epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
    for (int e_it = 0; e_it < iters_per_epoch && !stop; ++e_it) {
      double d_loss_sum = 0.0;
      for (int k = 0; k < cfg.n_critic; ++k) {
        const auto batch = batches.make(cfg.batch_size, step_counter++);
        Graph graph;
        ParamBinding db = dis.bind(graph, true);
        Var loss = d_loss(graph, dis, db, batch);
        const float lv = loss.value().item();
        if (!std::isfinite(lv)) {
          const auto diag = out_dir / "nan_diagnostics.json";
          dump_nan_diagnostics(diag, "d_step", iter, batch);
          throw NumericError("non-finite discriminator loss at iter " + std::to_string(iter) +
                             "; batch seeds dumped to " + diag.string());
        }
        graph.backward(loss);
        for (size_t i = 0; i < dis.params().size(); ++i) {
          optimizer_step(dis.params()[i].value, graph.grad(db.vars[i]), opt_d[i], cfg.lr);
        }
        clip_weights(dis, cfg.clip_c);
        d_loss_sum += lv;
        if (observer) observer->on_d_step(iter, k, lv, dis);
      }

      const auto batch = batches.make(cfg.batch_size, step_counter++);
      Graph graph;
      ParamBinding gb = gen.bind(graph, true);
      Var loss = g_loss(graph, gen, gb, dis, batch, cfg.alpha);
      const float gv = loss.value().item();
      if (!std::isfinite(gv)) {
        const auto diag = out_dir / "nan_diagnostics.json";
        dump_nan_diagnostics(diag, "g_step", iter, batch);
        throw NumericError("non-finite generator loss at iter " + std::to_string(iter) +
                           "; batch seeds dumped to " + diag.string());
      }
      graph.backward(loss);
      for (size_t i = 0; i < gen.params().size(); ++i) {
        optimizer_step(gen.params()[i].value, graph.grad(gb.vars[i]), opt_g[i], cfg.lr);
      }
      if (observer) observer->on_g_step(iter, gv, gen);

      std::string val_tre_s, val_dscore_s;
      if (!val_cases.empty() && cfg.val_every > 0 &&
          (iter % cfg.val_every == cfg.val_every - 1 || iter == 0)) {
        double tre_sum = 0.0, ds_sum = 0.0;
        for (const auto& vc : val_cases) {
          const RigidParams2D corr = register_once(gen, vc.pair, vc.init_t);
          const RigidParams2D composite = compose(vc.init_t, corr);
          tre_sum += tre(composite, vc.pair.gt_transform, vc.pair.pixel_spacing_mm, data.size);
          Graph vg;
          Var score = forward_d(dis, vg, vc.pair.fixed, warp(vc.pair.moving, composite));
          ds_sum += score.value().item();
        }
        val_tre_s = fmt_float(static_cast<float>(tre_sum / val_cases.size()));
        val_dscore_s = fmt_float(static_cast<float>(ds_sum / val_cases.size()));
      }
      metrics << iter << "," << fmt_float(static_cast<float>(d_loss_sum / cfg.n_critic)) << ","
              << fmt_float(gv) << "," << val_tre_s << "," << val_dscore_s << "\n";
      metrics.flush();

      ++iter;
      if (cfg.max_total_iters > 0 && iter >= cfg.max_total_iters) stop = true;
    }
    save_checkpoint(make_checkpoint(gen, dis, opt_g, opt_d, cfg, epoch), ck_path);
  }

  TrainResult result;
  result.gen = std::move(gen);
  result.dis = std::move(dis);
  result.checkpoint_path = ck_path;
  result.metrics_path = metrics_path;
  result.iterations = iter;
  return result;
}

}  // namespace air
