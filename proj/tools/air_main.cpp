// air: synthetic-data generation, adversarial registration training,
// single-pair registration and validation-set evaluation.
//
// Exit codes: 0 success, 1 I/O failure, 2 usage/validation error,
// 3 numerical failure (non-finite loss).

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "air/autodiff.hpp"
#include "air/error.hpp"
#include "air/evaluator.hpp"
#include "air/geometry.hpp"
#include "air/nets.hpp"
#include "air/resampler.hpp"
#include "air/synthdata.hpp"
#include "air/trainer.hpp"
#include "air/volume_io.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitIo = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

int run_synth(int n, uint64_t seed, int size, int channels, float spacing_mm,
              const std::string& out) {
  const air::Dataset d = air::make_dataset(n, seed, size, channels, spacing_mm, out);
  std::cout << "wrote " << d.entries.size() << " pairs to " << out << " (train "
            << d.count(air::Split::kTrain) << " / validation "
            << d.count(air::Split::kValidation) << ")\n";
  return kExitOk;
}

air::TrainConfig load_run_config(const std::string& config_path, std::string& data_dir,
                                 std::string& out_dir) {
  air::TrainConfig cfg;
  if (config_path.empty()) return cfg;
  std::ifstream is(config_path);
  if (!is) throw air::IoError("cannot open config " + config_path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw air::FormatError("config " + config_path + " is not valid JSON: " + e.what());
  }
  for (const auto& [key, _] : j.items()) {
    if (key != "train" && key != "data" && key != "out") {
      throw air::FormatError("unknown key '" + key + "' in config " + config_path);
    }
  }
  if (j.contains("train")) cfg = air::train_config_from_json(j.at("train").dump());
  // Paths resolve relative to the config file.
  const auto base = std::filesystem::path(config_path).parent_path();
  if (j.contains("data") && data_dir.empty()) {
    data_dir = (base / j.at("data").get<std::string>()).string();
  }
  if (j.contains("out") && out_dir.empty()) {
    out_dir = (base / j.at("out").get<std::string>()).string();
  }
  return cfg;
}

int run_train(const std::string& config_path, std::string data_dir, std::string out_dir,
              bool deterministic, std::optional<uint64_t> seed_flag) {
  air::TrainConfig cfg = load_run_config(config_path, data_dir, out_dir);
  if (deterministic) cfg.deterministic = true;
  if (seed_flag) cfg.seed = *seed_flag;
  if (data_dir.empty() || out_dir.empty()) {
    std::cerr << "train: --data and --out are required (flags or config keys)\n";
    return kExitUsage;
  }
  if (!std::filesystem::exists(std::filesystem::path(data_dir) / "manifest.json")) {
    std::cerr << "train: no dataset manifest under " << data_dir << "\n";
    return kExitUsage;
  }
  const air::Dataset data = air::load_dataset(data_dir);
  cfg.perturb.pixel_spacing_mm = data.pixel_spacing_mm;
  cfg.perturb.image_size_px = data.size;

  std::filesystem::create_directories(out_dir);
  {
    std::ofstream log(std::filesystem::path(out_dir) / "run_config.json");
    log << "{\n  \"train\": " << air::train_config_to_json(cfg) << ",\n  \"data\": \"" << data_dir
        << "\",\n  \"out\": \"" << out_dir << "\"\n}\n";
  }
  std::cout << "training: clip_c=" << cfg.clip_c << " n_critic=" << cfg.n_critic
            << " alpha=" << cfg.alpha << " lr=" << cfg.lr << " batch=" << cfg.batch_size
            << " epochs=" << cfg.epochs << " seed=" << cfg.seed
            << (cfg.deterministic ? " deterministic" : "") << "\n";
  const air::TrainResult res = air::train(cfg, data, out_dir);
  std::cout << "finished " << res.iterations << " iterations; checkpoint at "
            << res.checkpoint_path.string() << "\n";
  return kExitOk;
}

air::Tensor load_normalized_volume(const std::string& path) {
  air::Tensor t = air::load_volume(path);
  if (t.ndim() != 3) {
    throw air::FormatError(path + ": expected a [C,H,W] volume, got shape " +
                           air::Tensor::shape_str(t.shape()));
  }
  // Per-channel [0,1] normalization, a no-op for volumes stored normalized.
  const int64_t plane = static_cast<int64_t>(t.dim(1)) * t.dim(2);
  for (int c = 0; c < t.dim(0); ++c) {
    float* p = t.data() + c * plane;
    float lo = p[0], hi = p[0];
    for (int64_t i = 1; i < plane; ++i) {
      lo = std::min(lo, p[i]);
      hi = std::max(hi, p[i]);
    }
    if (hi > lo) {
      for (int64_t i = 0; i < plane; ++i) p[i] = (p[i] - lo) / (hi - lo);
    }
  }
  return t;
}

int require_inputs(std::initializer_list<const char*> labels,
                   std::initializer_list<const std::string*> paths) {
  auto label = labels.begin();
  for (const std::string* p : paths) {
    if (!std::filesystem::exists(*p)) {
      std::cerr << *label << " not found: " << *p << "\n";
      return kExitUsage;
    }
    ++label;
  }
  return kExitOk;
}

int run_register(const std::string& checkpoint, const std::string& fixed_path,
                 const std::string& moving_path, const std::string& init, int iters,
                 const std::string& overlay_out) {
  if (int rc = require_inputs({"checkpoint", "fixed volume", "moving volume"},
                              {&checkpoint, &fixed_path, &moving_path})) {
    return rc;
  }
  air::RestoredState st = air::restore_checkpoint(air::load_checkpoint(checkpoint));
  air::ImagePair pair;
  pair.id = "cli";
  pair.fixed = load_normalized_volume(fixed_path);
  pair.moving = load_normalized_volume(moving_path);
  pair.pixel_spacing_mm = st.config.perturb.pixel_spacing_mm;

  air::RigidParams2D init_t;
  if (std::sscanf(init.c_str(), "%f,%f,%f", &init_t.theta, &init_t.tx, &init_t.ty) != 3) {
    std::cerr << "register: --init must be \"theta,tx,ty\"\n";
    return kExitUsage;
  }

  air::RefineOptions opt;
  opt.max_iters = iters;
  const auto t0 = std::chrono::steady_clock::now();
  const air::RegistrationResult res =
      air::iterative_register(st.gen, st.dis, pair, init_t, opt);
  const auto t1 = std::chrono::steady_clock::now();
  const double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();

  nlohmann::json j;
  j["theta_rad"] = res.estimated_t.theta;
  j["tx"] = res.estimated_t.tx;
  j["ty"] = res.estimated_t.ty;
  j["dscore"] = res.dscore_after;
  j["iterations"] = res.iterations;
  j["ms"] = ms;
  std::cout << j.dump() << "\n";

  if (!overlay_out.empty()) {
    std::filesystem::create_directories(overlay_out);
    const std::filesystem::path dir(overlay_out);
    air::emit_overlay(pair, init_t, res.dscore_before, dir / "before.ppm");
    air::emit_overlay(pair, res.estimated_t, res.dscore_after, dir / "after.ppm");
  }
  return kExitOk;
}

int run_eval(const std::string& checkpoint, const std::string& data_dir, uint64_t seed,
             const std::string& out_dir, int iters) {
  if (int rc = require_inputs({"checkpoint", "dataset"}, {&checkpoint, &data_dir})) return rc;
  air::RestoredState st = air::restore_checkpoint(air::load_checkpoint(checkpoint));
  const air::Dataset data = air::load_dataset(data_dir);
  if (data.count(air::Split::kValidation) == 0) {
    std::cerr << "eval: dataset has an empty validation split\n";
    return kExitUsage;
  }
  air::PerturbationRange perturb = st.config.perturb;
  perturb.pixel_spacing_mm = data.pixel_spacing_mm;
  perturb.image_size_px = data.size;

  air::RefineOptions opt;
  opt.max_iters = iters;
  const air::EvalReport report = air::evaluate(st.gen, st.dis, data, perturb, seed, opt);

  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);
  air::write_report_csv(report, dir / "report.csv");
  air::write_summary_json(report, dir / "summary.json");

  // Before/after/ground-truth overlay triptychs for the first three cases.
  const size_t n_cases = std::min<size_t>(3, report.rows.size());
  for (size_t i = 0; i < n_cases; ++i) {
    const auto& row = report.rows[i];
    const air::ImagePair pair = air::load_pair(data, row.pair_id);
    air::emit_overlay(pair, row.initial_t, row.dscore_before,
                      dir / (row.pair_id + "_before.ppm"));
    air::emit_overlay(pair, row.estimated_t, row.dscore_after,
                      dir / (row.pair_id + "_after.ppm"));
    air::Graph g;
    const float gt_score =
        air::forward_d(st.dis, g, pair.fixed, air::warp(pair.moving, pair.gt_transform))
            .value()
            .item();
    air::emit_overlay(pair, pair.gt_transform, gt_score, dir / (row.pair_id + "_gt.ppm"));
  }

  std::cout << "evaluated " << report.summary.n
            << " pairs: mean TRE " << report.summary.mean_tre_before_mm << " -> "
            << report.summary.mean_tre_after_mm << " mm; mean D-score "
            << report.summary.mean_dscore_before << " -> " << report.summary.mean_dscore_after
            << "; spearman(D, -TRE) = " << report.summary.spearman_dscore_vs_neg_tre << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial image registration engine"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic paired dataset");
  int n = 120;
  uint64_t synth_seed = 1;
  int size = 64;
  int channels = 2;
  float spacing = 1.0f;
  std::string synth_out;
  synth->add_option("--n", n, "Number of pairs (>= 6)")->capture_default_str();
  synth->add_option("--seed", synth_seed, "Generation seed")->capture_default_str();
  synth->add_option("--size", size, "Image extent in pixels")->capture_default_str();
  synth->add_option("--channels", channels, "Channels per image")->capture_default_str();
  synth->add_option("--spacing-mm", spacing, "Pixel spacing in mm")->capture_default_str();
  synth->add_option("--out", synth_out, "Output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "Train the adversarial registration networks");
  std::string config_path, train_data, train_out;
  bool deterministic = false;
  std::optional<uint64_t> train_seed;
  train->add_option("--config", config_path, "Run-config JSON file");
  train->add_option("--data", train_data, "Dataset directory (overrides config)");
  train->add_option("--out", train_out, "Output directory (overrides config)");
  train->add_option("--seed", train_seed, "Seed override");
  train->add_flag("--deterministic", deterministic,
                  "Single-threaded, bitwise-reproducible batch assembly");

  // register
  auto* reg = app.add_subcommand("register", "Register one moving volume to a fixed volume");
  std::string ck_path, fixed_path, moving_path, overlay_out;
  std::string init = "0,0,0";
  int reg_iters = 10;
  reg->add_option("--checkpoint", ck_path, "Trained checkpoint")->required();
  reg->add_option("--fixed", fixed_path, "Fixed volume (.airvol)")->required();
  reg->add_option("--moving", moving_path, "Moving volume (.airvol)")->required();
  reg->add_option("--init", init, "Initial transform \"theta,tx,ty\"")->capture_default_str();
  reg->add_option("--iters", reg_iters, "Max refinement iterations")->capture_default_str();
  reg->add_option("--overlay-out", overlay_out, "Directory for before/after overlays");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate registration on the validation split");
  std::string eval_ck, eval_data, eval_out;
  uint64_t eval_seed = 1;
  int eval_iters = 10;
  ev->add_option("--checkpoint", eval_ck, "Trained checkpoint")->required();
  ev->add_option("--data", eval_data, "Dataset directory")->required();
  ev->add_option("--seed", eval_seed, "Perturbation seed")->capture_default_str();
  ev->add_option("--out", eval_out, "Report directory")->required();
  ev->add_option("--iters", eval_iters, "Max refinement iterations")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (synth->parsed()) return run_synth(n, synth_seed, size, channels, spacing, synth_out);
    if (train->parsed()) {
      return run_train(config_path, train_data, train_out, deterministic, train_seed);
    }
    if (reg->parsed()) {
      return run_register(ck_path, fixed_path, moving_path, init, reg_iters, overlay_out);
    }
    if (ev->parsed()) return run_eval(eval_ck, eval_data, eval_seed, eval_out, eval_iters);
  } catch (const air::NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const air::ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const air::FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const air::IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitUsage;
}
