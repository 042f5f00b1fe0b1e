#include "air/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "air/error.hpp"
#include "air/volume_io.hpp"

namespace air {

std::vector<std::string> Dataset::ids(Split s) const {
  std::vector<std::string> out;
  for (const auto& e : entries) {
    if (e.split == s) out.push_back(e.id);
  }
  return out;
}

size_t Dataset::count(Split s) const {
  size_t n = 0;
  for (const auto& e : entries) n += (e.split == s) ? 1 : 0;
  return n;
}

namespace {

struct Blob {
  float cx, cy, cz;    // center; cz is the through-plane depth in [0,1]
  float sx, sy, sz;    // axis sigmas
  float phi;           // in-plane orientation
  float amp;
};

void normalize_unit(float* p, int64_t n) {
  float lo = p[0], hi = p[0];
  for (int64_t i = 1; i < n; ++i) {
    lo = std::min(lo, p[i]);
    hi = std::max(hi, p[i]);
  }
  const float range = hi - lo;
  if (range < 1e-12f) {
    for (int64_t i = 0; i < n; ++i) p[i] = 0.0f;
    return;
  }
  const float inv = 1.0f / range;
  for (int64_t i = 0; i < n; ++i) p[i] = (p[i] - lo) * inv;
}

// Count-normalized 3x3 box filter (border pixels average their valid
// neighborhood).
void box3(const std::vector<float>& src, std::vector<float>& dst, int H, int W) {
  for (int i = 0; i < H; ++i) {
    for (int j = 0; j < W; ++j) {
      float acc = 0.0f;
      int cnt = 0;
      for (int di = -1; di <= 1; ++di) {
        const int y = i + di;
        if (y < 0 || y >= H) continue;
        for (int dj = -1; dj <= 1; ++dj) {
          const int x = j + dj;
          if (x < 0 || x >= W) continue;
          acc += src[static_cast<size_t>(y) * W + x];
          ++cnt;
        }
      }
      dst[static_cast<size_t>(i) * W + j] = acc / static_cast<float>(cnt);
    }
  }
}

}  // namespace

ImagePair generate_pair(uint64_t seed, int size, int channels, float spacing_mm) {
  if (size < 32) throw ShapeError("generate_pair: size must be >= 32, got " + std::to_string(size));
  if (channels < 1) {
    throw ShapeError("generate_pair: channels must be >= 1, got " + std::to_string(channels));
  }
  if (spacing_mm <= 0.0f) throw ShapeError("generate_pair: spacing must be positive");
  Rng rng(derive_seed(seed, 0x70616972ULL));
  const int H = size, W = size;
  const int64_t plane = static_cast<int64_t>(H) * W;

  const int n_blobs = 10 + rng.below(6);
  std::vector<Blob> blobs(static_cast<size_t>(n_blobs));
  for (auto& b : blobs) {
    b.cx = rng.uniform(-0.75f, 0.75f);
    b.cy = rng.uniform(-0.75f, 0.75f);
    b.cz = rng.uniform(0.0f, 1.0f);
    b.sx = rng.uniform(0.08f, 0.35f);
    b.sy = rng.uniform(0.08f, 0.35f);
    b.sz = rng.uniform(0.25f, 0.6f);
    b.phi = rng.uniform(0.0f, std::numbers::pi_v<float>);
    b.amp = rng.uniform(0.4f, 1.0f);
  }
  float bias[4];
  for (float& v : bias) v = rng.uniform(-0.3f, 0.3f);

  ImagePair pair;
  pair.pixel_spacing_mm = spacing_mm;
  pair.fixed = Tensor({channels, H, W});
  pair.moving = Tensor({channels, H, W});

  for (int c = 0; c < channels; ++c) {
    const float z = channels == 1 ? 0.5f
                                  : static_cast<float>(c) / static_cast<float>(channels - 1);
    float* fp = pair.fixed.data() + c * plane;
    for (int i = 0; i < H; ++i) {
      const float y = -1.0f + 2.0f * static_cast<float>(i) / static_cast<float>(H - 1);
      for (int j = 0; j < W; ++j) {
        const float x = -1.0f + 2.0f * static_cast<float>(j) / static_cast<float>(W - 1);
        float v = bias[0] + bias[1] * x + bias[2] * y + bias[3] * x * y;
        for (const auto& b : blobs) {
          const float dx = x - b.cx;
          const float dy = y - b.cy;
          const float cp = std::cos(b.phi);
          const float sp = std::sin(b.phi);
          const float u = cp * dx + sp * dy;
          const float w = -sp * dx + cp * dy;
          const float dz = z - b.cz;
          const float q = (u * u) / (b.sx * b.sx) + (w * w) / (b.sy * b.sy) +
                          (dz * dz) / (b.sz * b.sz);
          v += b.amp * std::exp(-0.5f * q);
        }
        fp[static_cast<int64_t>(i) * W + j] = v;
      }
    }
    normalize_unit(fp, plane);

    // Moving modality: contrast inversion, multiplicative speckle, box blur.
    std::vector<float> raw(static_cast<size_t>(plane));
    for (int64_t k = 0; k < plane; ++k) {
      const float inv = 1.0f - std::pow(fp[k], 0.7f);
      raw[static_cast<size_t>(k)] = inv * rng.uniform(0.7f, 1.3f);
    }
    std::vector<float> smooth(static_cast<size_t>(plane));
    box3(raw, smooth, H, W);
    float* mp = pair.moving.data() + c * plane;
    std::copy(smooth.begin(), smooth.end(), mp);
    normalize_unit(mp, plane);
  }
  return pair;
}

std::pair<size_t, size_t> split_counts(size_t n) {
  const size_t train = (n * 5 + 3) / 6;
  return {train, n - train};
}

void assign_split(Dataset& d, uint64_t seed) {
  const size_t n = d.entries.size();
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(seed, 0x73706c6974ULL));
  for (size_t i = n; i > 1; --i) {
    const size_t j = static_cast<size_t>(rng.below(static_cast<int>(i)));
    std::swap(order[i - 1], order[j]);
  }
  const auto [n_train, n_val] = split_counts(n);
  (void)n_val;
  for (size_t k = 0; k < n; ++k) {
    d.entries[order[k]].split = k < n_train ? Split::kTrain : Split::kValidation;
  }
}

namespace {

std::string pair_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "pair_%04d", index);
  return buf;
}

}  // namespace

Dataset make_dataset(int n, uint64_t seed, int size, int channels, float spacing_mm,
                     const std::filesystem::path& out_dir) {
  if (n < 6) {
    throw ShapeError("make_dataset: need at least 6 pairs for a 5:1 split, got " +
                     std::to_string(n));
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  Dataset d;
  d.root = out_dir;
  d.pixel_spacing_mm = spacing_mm;
  d.size = size;
  d.channels = channels;
  d.seed = seed;
  for (int i = 0; i < n; ++i) {
    const std::string id = pair_id(i);
    ImagePair pair = generate_pair(derive_seed(seed, static_cast<uint64_t>(i)), size, channels,
                                   spacing_mm);
    pair.id = id;
    save_volume(pair.fixed, out_dir / (id + "_fixed.airvol"));
    save_volume(pair.moving, out_dir / (id + "_moving.airvol"));
    d.entries.push_back({id, Split::kTrain});
  }
  assign_split(d, seed);
  save_manifest(d);
  return d;
}

void save_manifest(const Dataset& d) {
  nlohmann::json j;
  j["seed"] = d.seed;
  j["size"] = d.size;
  j["channels"] = d.channels;
  j["spacing_mm"] = d.pixel_spacing_mm;
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& e : d.entries) {
    pairs.push_back({{"id", e.id}, {"split", e.split == Split::kTrain ? "train" : "validation"}});
  }
  j["pairs"] = std::move(pairs);
  std::ofstream os(d.root / "manifest.json");
  if (!os) throw IoError("cannot write manifest under " + d.root.string());
  os << j.dump(2) << "\n";
}

Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw IoError("cannot open manifest in " + dir.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest in " + dir.string() + " is not valid JSON: " + e.what());
  }
  Dataset d;
  d.root = dir;
  try {
    d.seed = j.at("seed").get<uint64_t>();
    d.size = j.at("size").get<int>();
    d.channels = j.at("channels").get<int>();
    d.pixel_spacing_mm = j.at("spacing_mm").get<float>();
    for (const auto& p : j.at("pairs")) {
      DatasetEntry e;
      e.id = p.at("id").get<std::string>();
      e.split = p.at("split").get<std::string>() == "train" ? Split::kTrain : Split::kValidation;
      d.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest in " + dir.string() + " is missing fields: " + e.what());
  }
  return d;
}

ImagePair load_pair(const Dataset& d, const std::string& id) {
  ImagePair pair;
  pair.id = id;
  pair.fixed = load_volume(d.root / (id + "_fixed.airvol"));
  pair.moving = load_volume(d.root / (id + "_moving.airvol"));
  pair.pixel_spacing_mm = d.pixel_spacing_mm;
  return pair;
}

}  // namespace air
