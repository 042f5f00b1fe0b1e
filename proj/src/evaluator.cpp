#include "air/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "air/autodiff.hpp"
#include "air/error.hpp"
#include "air/resampler.hpp"
#include "air/rng.hpp"

namespace air {

float tre(const RigidParams2D& est, const RigidParams2D& gt, float spacing_mm, int size_px) {
  if (spacing_mm <= 0.0f || size_px <= 0) {
    throw ShapeError("tre: spacing and size must be positive");
  }
  const AffineMatrix2D me = to_matrix(est);
  const AffineMatrix2D mg = to_matrix(gt);
  // 4x4 target points spanning the central 50% of the image.
  double sum_sq = 0.0;
  for (int a = 0; a < 4; ++a) {
    const float y = -0.5f + static_cast<float>(a) / 3.0f;
    for (int b = 0; b < 4; ++b) {
      const float x = -0.5f + static_cast<float>(b) / 3.0f;
      const auto pe = me.apply(x, y);
      const auto pg = mg.apply(x, y);
      const double dx = static_cast<double>(pe[0]) - pg[0];
      const double dy = static_cast<double>(pe[1]) - pg[1];
      sum_sq += dx * dx + dy * dy;
    }
  }
  const double rms_norm = std::sqrt(sum_sq / 16.0);
  return static_cast<float>(rms_norm * (static_cast<double>(size_px) / 2.0) * spacing_mm);
}

RigidParams2D register_once(const Network& gen, const ImagePair& pair,
                            const RigidParams2D& init_t) {
  const Tensor moved = warp(pair.moving, init_t);
  Graph g;
  Var out = forward_g(gen, g, pair.fixed, moved);
  return to_rigid(out.value());
}

namespace {

float score_pair(const Network& dis, const ImagePair& pair, const RigidParams2D& t) {
  Graph g;
  Var s = forward_d(dis, g, pair.fixed, warp(pair.moving, t));
  return s.value().item();
}

}  // namespace

RegistrationResult iterative_register(const Registrar& registrar, const Scorer& scorer,
                                      const ImagePair& pair, const RigidParams2D& init_t,
                                      const RefineOptions& opt) {
  if (opt.max_iters < 1) throw ShapeError("iterative_register: max_iters must be >= 1");
  RegistrationResult res;
  res.pair_id = pair.id;
  res.initial_t = init_t;
  res.tre_before_mm = tre(init_t, pair.gt_transform, pair.pixel_spacing_mm, pair.fixed.dim(2));
  res.dscore_before = scorer(pair, init_t);

  RigidParams2D t_total = init_t;
  float prev_score = res.dscore_before;
  int best = -1;
  for (int it = 0; it < opt.max_iters; ++it) {
    const RigidParams2D corr = registrar(pair, t_total);
    // warp(warp(I, a), b) resamples through the matrix product M_a * M_b, so
    // the correction composes on the right of the running transform.
    t_total = compose(t_total, corr);
    RegistrationResult::TraceStep step;
    step.t = t_total;
    step.dscore = scorer(pair, t_total);
    step.tre_mm = tre(t_total, pair.gt_transform, pair.pixel_spacing_mm, pair.fixed.dim(2));
    res.trace.push_back(step);
    if (best < 0 || step.dscore > res.trace[static_cast<size_t>(best)].dscore) {
      best = static_cast<int>(res.trace.size()) - 1;
    }
    if (step.dscore - prev_score < opt.eps) break;
    prev_score = step.dscore;
  }
  res.iterations = static_cast<int>(res.trace.size());
  const auto& chosen = res.trace[static_cast<size_t>(best)];
  res.estimated_t = chosen.t;
  res.tre_after_mm = chosen.tre_mm;
  res.dscore_after = chosen.dscore;
  return res;
}

RegistrationResult iterative_register(const Network& gen, const Network& dis,
                                      const ImagePair& pair, const RigidParams2D& init_t,
                                      const RefineOptions& opt) {
  return iterative_register(
      [&gen](const ImagePair& p, const RigidParams2D& t) { return register_once(gen, p, t); },
      [&dis](const ImagePair& p, const RigidParams2D& t) { return score_pair(dis, p, t); },
      pair, init_t, opt);
}

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw ShapeError("spearman: need two equal-length samples of size >= 2");
  }
  auto ranks = [](std::span<const double> v) {
    const size_t n = v.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t i, size_t j) { return v[i] < v[j]; });
    std::vector<double> r(n);
    size_t i = 0;
    while (i < n) {
      size_t j = i;
      while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
      for (size_t k = i; k <= j; ++k) r[order[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const std::vector<double> ra = ranks(a);
  const std::vector<double> rb = ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double da = ra[i] - ma;
    const double db = rb[i] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  if (va <= 0.0 || vb <= 0.0) return 0.0;
  return cov / std::sqrt(va * vb);
}

namespace {

float median_of(std::vector<float> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5f * (v[n / 2 - 1] + v[n / 2]);
}

float stddev_of(const std::vector<float>& v, float mean) {
  if (v.size() < 2) return 0.0f;
  double acc = 0.0;
  for (float x : v) acc += (static_cast<double>(x) - mean) * (static_cast<double>(x) - mean);
  return static_cast<float>(std::sqrt(acc / (static_cast<double>(v.size()) - 1.0)));
}

}  // namespace

EvalReport evaluate(const Network& gen, const Network& dis, const Dataset& data,
                    const PerturbationRange& perturb, uint64_t seed, const RefineOptions& opt) {
  const auto val_ids = data.ids(Split::kValidation);
  if (val_ids.empty()) throw ShapeError("evaluate: empty validation split");

  EvalReport report;
  for (size_t j = 0; j < val_ids.size(); ++j) {
    const ImagePair pair = load_pair(data, val_ids[j]);
    const RigidParams2D init_t = sample_perturbation(perturb, derive_seed(seed, j));
    report.rows.push_back(iterative_register(gen, dis, pair, init_t, opt));
  }

  EvalSummary& s = report.summary;
  s.n = static_cast<int>(report.rows.size());
  std::vector<float> tre_before, tre_after;
  std::vector<double> scores, neg_tre;
  double mtb = 0.0, mta = 0.0, mdb = 0.0, mda = 0.0;
  for (const auto& r : report.rows) {
    tre_before.push_back(r.tre_before_mm);
    tre_after.push_back(r.tre_after_mm);
    mtb += r.tre_before_mm;
    mta += r.tre_after_mm;
    mdb += r.dscore_before;
    mda += r.dscore_after;
    scores.push_back(r.dscore_before);
    neg_tre.push_back(-static_cast<double>(r.tre_before_mm));
    scores.push_back(r.dscore_after);
    neg_tre.push_back(-static_cast<double>(r.tre_after_mm));
  }
  const double n = static_cast<double>(s.n);
  s.mean_tre_before_mm = static_cast<float>(mtb / n);
  s.mean_tre_after_mm = static_cast<float>(mta / n);
  s.mean_dscore_before = static_cast<float>(mdb / n);
  s.mean_dscore_after = static_cast<float>(mda / n);
  s.median_tre_before_mm = median_of(tre_before);
  s.median_tre_after_mm = median_of(tre_after);
  s.std_tre_before_mm = stddev_of(tre_before, s.mean_tre_before_mm);
  s.std_tre_after_mm = stddev_of(tre_after, s.mean_tre_after_mm);
  s.spearman_dscore_vs_neg_tre = static_cast<float>(spearman(scores, neg_tre));
  return report;
}

namespace {

std::string fmt(float v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
  return buf;
}

}  // namespace

void write_report_csv(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << "id,tre_before_mm,tre_after_mm,dscore_before,dscore_after,iterations\n";
  for (const auto& r : report.rows) {
    os << r.pair_id << "," << fmt(r.tre_before_mm) << "," << fmt(r.tre_after_mm) << ","
       << fmt(r.dscore_before) << "," << fmt(r.dscore_after) << "," << r.iterations << "\n";
  }
}

void write_summary_json(const EvalReport& report, const std::filesystem::path& path) {
  const EvalSummary& s = report.summary;
  nlohmann::json j;
  j["n"] = s.n;
  j["mean_tre_before_mm"] = s.mean_tre_before_mm;
  j["mean_tre_after_mm"] = s.mean_tre_after_mm;
  j["median_tre_before_mm"] = s.median_tre_before_mm;
  j["median_tre_after_mm"] = s.median_tre_after_mm;
  j["std_tre_before_mm"] = s.std_tre_before_mm;
  j["std_tre_after_mm"] = s.std_tre_after_mm;
  j["mean_dscore_before"] = s.mean_dscore_before;
  j["mean_dscore_after"] = s.mean_dscore_after;
  j["spearman_dscore_vs_neg_tre"] = s.spearman_dscore_vs_neg_tre;
  nlohmann::json cases = nlohmann::json::array();
  for (const auto& r : report.rows) {
    cases.push_back({{"id", r.pair_id},
                     {"initial_t", {r.initial_t.theta, r.initial_t.tx, r.initial_t.ty}},
                     {"estimated_t",
                      {r.estimated_t.theta, r.estimated_t.tx, r.estimated_t.ty}}});
  }
  j["cases"] = std::move(cases);
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << j.dump(2) << "\n";
}

namespace {

// 3x5 digit glyphs, row-major bits, for the score strip.
constexpr uint16_t kGlyphs[11] = {
    0b111101101101111,  // 0
    0b010110010010111,  // 1
    0b111001111100111,  // 2
    0b111001111001111,  // 3
    0b101101111001001,  // 4
    0b111100111001111,  // 5
    0b111100111101111,  // 6
    0b111001001001001,  // 7
    0b111101111101111,  // 8
    0b111101111001111,  // 9
    0b000000000000010,  // '.'
};

void draw_glyph(std::vector<unsigned char>& rgb, int W, int H, int x0, int y0, int scale,
                int glyph) {
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < 3; ++c) {
      const int bit = 14 - (r * 3 + c);
      if (((kGlyphs[glyph] >> bit) & 1u) == 0) continue;
      for (int dy = 0; dy < scale; ++dy) {
        for (int dx = 0; dx < scale; ++dx) {
          const int x = x0 + c * scale + dx;
          const int y = y0 + r * scale + dy;
          if (x < 0 || x >= W || y < 0 || y >= H) continue;
          const size_t base = (static_cast<size_t>(y) * W + x) * 3;
          rgb[base + 0] = 255;
          rgb[base + 1] = 255;
          rgb[base + 2] = 0;
        }
      }
    }
  }
}

}  // namespace

void emit_overlay(const ImagePair& pair, const RigidParams2D& t, float dscore,
                  const std::filesystem::path& path) {
  const Tensor warped = warp(pair.moving, t);
  const int H = pair.fixed.dim(1);
  const int W = pair.fixed.dim(2);
  const int64_t plane = static_cast<int64_t>(H) * W;
  const float* fp = pair.fixed.data();   // channel 0
  const float* mp = warped.data();       // channel 0

  std::vector<unsigned char> rgb(static_cast<size_t>(plane) * 3);
  for (int64_t i = 0; i < plane; ++i) {
    const float gray = std::clamp(fp[i], 0.0f, 1.0f);
    const float v = std::clamp(mp[i], 0.0f, 1.0f);
    // hot ramp for the moving image
    const float cr = std::clamp(3.0f * v, 0.0f, 1.0f);
    const float cg = std::clamp(3.0f * v - 1.0f, 0.0f, 1.0f);
    const float cb = std::clamp(3.0f * v - 2.0f, 0.0f, 1.0f);
    const float a = 0.5f;
    rgb[static_cast<size_t>(i) * 3 + 0] =
        static_cast<unsigned char>(255.0f * std::clamp((1 - a) * gray + a * cr, 0.0f, 1.0f));
    rgb[static_cast<size_t>(i) * 3 + 1] =
        static_cast<unsigned char>(255.0f * std::clamp((1 - a) * gray + a * cg, 0.0f, 1.0f));
    rgb[static_cast<size_t>(i) * 3 + 2] =
        static_cast<unsigned char>(255.0f * std::clamp((1 - a) * gray + a * cb, 0.0f, 1.0f));
  }

  char text[16];
  std::snprintf(text, sizeof(text), "%.3f", static_cast<double>(dscore));
  const int scale = std::max(1, W / 64);
  const int glyph_w = 4 * scale;
  const int len = static_cast<int>(std::strlen(text));
  int x = W - len * glyph_w - 2 * scale;
  const int y = H - 6 * scale;
  for (int i = 0; i < len; ++i) {
    const char ch = text[i];
    const int glyph = ch == '.' ? 10 : ch - '0';
    if (glyph >= 0 && glyph <= 10) draw_glyph(rgb, W, H, x, y, scale, glyph);
    x += glyph_w;
  }

  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << "P6\n" << W << " " << H << "\n255\n";
  os.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
  if (!os) throw IoError("write failed for " + path.string());
}

}  // namespace air
