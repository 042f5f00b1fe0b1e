#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <set>

#include "air/synthdata.hpp"
#include "air/volume_io.hpp"
#include "gradcheck.hpp"
#include "testutil.hpp"

using namespace air;
using airtest::gradient_magnitude;
using airtest::ncc;
using airtest::TempDir;

TEST_CASE("pair generation is deterministic and aligned") {
  const ImagePair a = generate_pair(12345, 64, 2, 1.0f);
  const ImagePair b = generate_pair(12345, 64, 2, 1.0f);
  REQUIRE(a.fixed.numel() == b.fixed.numel());
  for (int64_t i = 0; i < a.fixed.numel(); ++i) CHECK(a.fixed[i] == b.fixed[i]);
  for (int64_t i = 0; i < a.moving.numel(); ++i) CHECK(a.moving[i] == b.moving[i]);

  CHECK(a.gt_transform.theta == 0.0f);
  CHECK(a.gt_transform.tx == 0.0f);
  CHECK(a.gt_transform.ty == 0.0f);

  const ImagePair c = generate_pair(12346, 64, 2, 1.0f);
  bool differs = false;
  for (int64_t i = 0; i < a.fixed.numel(); ++i) differs = differs || a.fixed[i] != c.fixed[i];
  CHECK(differs);
}

TEST_CASE("intensities live in the unit interval with the right shape") {
  const ImagePair p = generate_pair(7, 48, 3, 0.5f);
  CHECK(p.fixed.shape() == std::vector<int>{3, 48, 48});
  CHECK(p.moving.shape() == std::vector<int>{3, 48, 48});
  for (int64_t i = 0; i < p.fixed.numel(); ++i) {
    CHECK(p.fixed[i] >= 0.0f);
    CHECK(p.fixed[i] <= 1.0f);
    CHECK(p.moving[i] >= 0.0f);
    CHECK(p.moving[i] <= 1.0f);
  }
  CHECK_THROWS_AS(generate_pair(1, 16, 2, 1.0f), ShapeError);
  CHECK_THROWS_AS(generate_pair(1, 64, 0, 1.0f), ShapeError);
}

TEST_CASE("modalities share structure but not intensity mapping") {
  // Thresholds fixed from a 100-seed pilot of this generator: shared edges
  // keep gradient-magnitude correlation high while contrast inversion makes
  // the plain intensity correlation strongly negative.
  double grad_ncc_sum = 0.0;
  double plain_ncc_sum = 0.0;
  const int n = 100;
  for (int s = 0; s < n; ++s) {
    const ImagePair p = generate_pair(static_cast<uint64_t>(s), 64, 1, 1.0f);
    grad_ncc_sum += ncc(gradient_magnitude(p.fixed), gradient_magnitude(p.moving));
    plain_ncc_sum += ncc(p.fixed, p.moving);
  }
  CHECK(grad_ncc_sum / n > 0.2);
  CHECK(plain_ncc_sum / n < 0.0);
}

TEST_CASE("split counts follow the 5:1 rule") {
  CHECK(split_counts(763) == std::pair<size_t, size_t>{636, 127});
  CHECK(split_counts(6) == std::pair<size_t, size_t>{5, 1});
  CHECK(split_counts(120) == std::pair<size_t, size_t>{100, 20});
  CHECK(split_counts(7) == std::pair<size_t, size_t>{6, 1});
}

TEST_CASE("split assignment is a deterministic partition") {
  Dataset d;
  for (int i = 0; i < 23; ++i) d.entries.push_back({"p" + std::to_string(i), Split::kTrain});
  assign_split(d, 99);
  const auto train = d.ids(Split::kTrain);
  const auto val = d.ids(Split::kValidation);
  CHECK(train.size() == split_counts(23).first);
  CHECK(val.size() == split_counts(23).second);
  std::set<std::string> all(train.begin(), train.end());
  all.insert(val.begin(), val.end());
  CHECK(all.size() == 23);

  Dataset d2 = d;
  assign_split(d2, 99);
  for (size_t i = 0; i < d.entries.size(); ++i) CHECK(d.entries[i].split == d2.entries[i].split);
}

TEST_CASE("volume files round trip bitwise") {
  TempDir tmp("airvol");
  const Tensor t = airtest::random_tensor({3, 5, 7}, 1234);
  const auto path = tmp.path() / "t.airvol";
  save_volume(t, path);
  const Tensor r = load_volume(path);
  REQUIRE(r.shape() == t.shape());
  for (int64_t i = 0; i < t.numel(); ++i) CHECK(r[i] == t[i]);

  std::ifstream is(path, std::ios::binary);
  char magic[8];
  is.read(magic, 8);
  CHECK(std::string(magic, 8) == std::string("AIRVOL1\0", 8));
}

TEST_CASE("volume loader reports malformed files") {
  TempDir tmp("airvol_bad");
  const auto bad_magic = tmp.path() / "bad.airvol";
  {
    std::ofstream os(bad_magic, std::ios::binary);
    os << "NOTAVOL0" << std::string(64, 'x');
  }
  CHECK_THROWS_AS(load_volume(bad_magic), FormatError);
  CHECK_THROWS_WITH_AS(load_volume(bad_magic), doctest::Contains("byte offset 0"), FormatError);

  const auto truncated = tmp.path() / "trunc.airvol";
  save_volume(airtest::random_tensor({4, 4}, 5), truncated);
  std::filesystem::resize_file(truncated, 24);  // cut into the data section
  try {
    load_volume(truncated);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
  }

  CHECK_THROWS_AS(load_volume(tmp.path() / "missing.airvol"), IoError);
}

TEST_CASE("make_dataset writes volumes, manifest, and a 5:1 split") {
  TempDir tmp("airdata");
  const Dataset d = make_dataset(6, 7, 32, 1, 1.0f, tmp.path() / "d");
  CHECK(d.entries.size() == 6);
  CHECK(d.count(Split::kTrain) == 5);
  CHECK(d.count(Split::kValidation) == 1);
  for (const auto& e : d.entries) {
    CHECK(std::filesystem::exists(d.root / (e.id + "_fixed.airvol")));
    CHECK(std::filesystem::exists(d.root / (e.id + "_moving.airvol")));
  }
  CHECK(std::filesystem::exists(d.root / "manifest.json"));

  const Dataset reloaded = load_dataset(d.root);
  CHECK(reloaded.entries.size() == 6);
  CHECK(reloaded.size == 32);
  CHECK(reloaded.channels == 1);
  for (size_t i = 0; i < d.entries.size(); ++i) {
    CHECK(reloaded.entries[i].id == d.entries[i].id);
    CHECK(reloaded.entries[i].split == d.entries[i].split);
  }

  const ImagePair p = load_pair(reloaded, d.entries[0].id);
  CHECK(p.fixed.shape() == std::vector<int>{1, 32, 32});
  CHECK(p.pixel_spacing_mm == 1.0f);

  CHECK_THROWS_AS(make_dataset(5, 7, 32, 1, 1.0f, tmp.path() / "too_small"), ShapeError);
}

TEST_CASE("dataset generation is byte-for-byte reproducible") {
  TempDir tmp("airdata_repro");
  make_dataset(6, 11, 32, 2, 1.0f, tmp.path() / "a");
  make_dataset(6, 11, 32, 2, 1.0f, tmp.path() / "b");
  for (const auto& entry : std::filesystem::directory_iterator(tmp.path() / "a")) {
    const auto name = entry.path().filename();
    std::ifstream fa(entry.path(), std::ios::binary);
    std::ifstream fb(tmp.path() / "b" / name, std::ios::binary);
    REQUIRE(fb.good());
    const std::string ca((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    const std::string cb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    CHECK(ca == cb);
  }
}
