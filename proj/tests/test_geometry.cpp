#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "air/geometry.hpp"
#include "air/rng.hpp"

using namespace air;

namespace {
constexpr float kPi = std::numbers::pi_v<float>;

RigidParams2D random_params(Rng& rng) {
  RigidParams2D p;
  p.theta = rng.uniform(-kPi * 0.95f, kPi * 0.95f);
  p.tx = rng.uniform(-0.5f, 0.5f);
  p.ty = rng.uniform(-0.5f, 0.5f);
  return p;
}
}  // namespace

TEST_CASE("to_matrix identity and basic actions") {
  const AffineMatrix2D id = to_matrix(RigidParams2D{});
  CHECK(id.m[0] == doctest::Approx(1.0f));
  CHECK(id.m[1] == doctest::Approx(0.0f));
  CHECK(id.m[2] == doctest::Approx(0.0f));
  CHECK(id.m[4] == doctest::Approx(1.0f));

  // quarter turn maps (1, 0) -> (0, 1)
  const AffineMatrix2D q = to_matrix({kPi / 2.0f, 0.0f, 0.0f});
  const auto p = q.apply(1.0f, 0.0f);
  CHECK(p[0] == doctest::Approx(0.0f).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(1.0f));

  // pure translation moves the origin
  const AffineMatrix2D t = to_matrix({0.0f, 0.5f, 0.0f});
  const auto o = t.apply(0.0f, 0.0f);
  CHECK(o[0] == doctest::Approx(0.5f));
  CHECK(o[1] == doctest::Approx(0.0f));
}

TEST_CASE("matrix round trip recovers parameters") {
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    const RigidParams2D p = random_params(rng);
    const RigidParams2D q = from_matrix(to_matrix(p));
    CHECK(std::abs(q.theta - p.theta) < 1e-6f);
    CHECK(std::abs(q.tx - p.tx) < 1e-6f);
    CHECK(std::abs(q.ty - p.ty) < 1e-6f);
  }
}

TEST_CASE("compose matches matrix product and neutral element") {
  Rng rng(13);
  for (int i = 0; i < 200; ++i) {
    const RigidParams2D a = random_params(rng);
    const RigidParams2D b = random_params(rng);
    const AffineMatrix2D direct = to_matrix(a).mul(to_matrix(b));
    const AffineMatrix2D via = to_matrix(compose(a, b));
    for (int k = 0; k < 6; ++k) CHECK(std::abs(direct.m[k] - via.m[k]) < 1e-5f);
  }
  const RigidParams2D t{0.3f, 0.1f, -0.2f};
  const RigidParams2D same = compose(t, RigidParams2D{});
  CHECK(same.theta == doctest::Approx(t.theta));
  CHECK(same.tx == doctest::Approx(t.tx));
  CHECK(same.ty == doctest::Approx(t.ty));
}

TEST_CASE("compose of quarter turns") {
  const RigidParams2D q{kPi / 4.0f, 0.0f, 0.0f};
  const RigidParams2D h = compose(q, q);
  CHECK(h.theta == doctest::Approx(kPi / 2.0f));
  CHECK(h.tx == doctest::Approx(0.0f));
}

TEST_CASE("compose associativity") {
  Rng rng(17);
  for (int i = 0; i < 200; ++i) {
    const RigidParams2D a = random_params(rng);
    const RigidParams2D b = random_params(rng);
    const RigidParams2D c = random_params(rng);
    const RigidParams2D left = compose(compose(a, b), c);
    const RigidParams2D right = compose(a, compose(b, c));
    const AffineMatrix2D ml = to_matrix(left);
    const AffineMatrix2D mr = to_matrix(right);
    for (int k = 0; k < 6; ++k) CHECK(std::abs(ml.m[k] - mr.m[k]) < 1e-5f);
  }
}

TEST_CASE("invert") {
  CHECK(invert(RigidParams2D{}).theta == doctest::Approx(0.0f));

  const RigidParams2D t = invert({0.0f, 0.3f, -0.2f});
  CHECK(t.tx == doctest::Approx(-0.3f));
  CHECK(t.ty == doctest::Approx(0.2f));

  Rng rng(19);
  for (int i = 0; i < 200; ++i) {
    const RigidParams2D p = random_params(rng);
    const RigidParams2D inv2 = invert(invert(p));
    CHECK(std::abs(inv2.theta - p.theta) < 1e-6f);
    CHECK(std::abs(inv2.tx - p.tx) < 1e-6f);
    CHECK(std::abs(inv2.ty - p.ty) < 1e-6f);

    const RigidParams2D e = compose(p, invert(p));
    CHECK(std::abs(e.theta) < 1e-5f);
    CHECK(std::abs(e.tx) < 1e-5f);
    CHECK(std::abs(e.ty) < 1e-5f);
  }
}

TEST_CASE("rigid matrices keep an orthonormal rotation block") {
  Rng rng(23);
  for (int i = 0; i < 100; ++i) {
    const AffineMatrix2D m = to_matrix(random_params(rng));
    const float det = m.m[0] * m.m[4] - m.m[1] * m.m[3];
    CHECK(det == doctest::Approx(1.0f).epsilon(1e-5));
    const float dot = m.m[0] * m.m[1] + m.m[3] * m.m[4];
    CHECK(std::abs(dot) < 1e-5f);
  }
}

TEST_CASE("param_distance") {
  const RigidParams2D t{0.4f, -0.1f, 0.25f};
  CHECK(param_distance(t, t) == doctest::Approx(0.0f));
  CHECK(param_distance({0, 1, 0}, {0, 0, 0}) == doctest::Approx(1.0f));
  Rng rng(29);
  for (int i = 0; i < 100; ++i) {
    const RigidParams2D a = random_params(rng);
    const RigidParams2D b = random_params(rng);
    CHECK(param_distance(a, b) == doctest::Approx(param_distance(b, a)));
    CHECK(param_distance(a, b) >= 0.0f);
  }
}

TEST_CASE("perturbation sampling respects bounds and seeds") {
  PerturbationRange range;
  range.max_rotation_deg = 25.0f;
  range.max_translation_mm = 5.0f;
  range.pixel_spacing_mm = 1.0f;
  range.image_size_px = 64;
  const float rot_bound = 25.0f * kPi / 180.0f;
  const float tr_bound = range.max_translation_norm();
  CHECK(tr_bound == doctest::Approx(5.0f / 32.0f));

  for (uint64_t s = 0; s < 500; ++s) {
    const RigidParams2D p = sample_perturbation(range, s);
    CHECK(std::abs(p.theta) <= rot_bound);
    CHECK(std::abs(p.tx) <= tr_bound);
    CHECK(std::abs(p.ty) <= tr_bound);
  }

  const RigidParams2D a = sample_perturbation(range, 42);
  const RigidParams2D b = sample_perturbation(range, 42);
  CHECK(a.theta == b.theta);
  CHECK(a.tx == b.tx);
  CHECK(a.ty == b.ty);

  PerturbationRange zero = range;
  zero.max_rotation_deg = 0.0f;
  zero.max_translation_mm = 0.0f;
  for (uint64_t s = 0; s < 10; ++s) {
    const RigidParams2D p = sample_perturbation(zero, s);
    CHECK(p.theta == 0.0f);
    CHECK(p.tx == 0.0f);
    CHECK(p.ty == 0.0f);
  }
}

TEST_CASE("angle wrapping stays in (-pi, pi]") {
  CHECK(wrap_angle(kPi) == doctest::Approx(kPi));
  CHECK(wrap_angle(-kPi) == doctest::Approx(kPi));
  CHECK(wrap_angle(3.0f * kPi) == doctest::Approx(kPi).epsilon(1e-4));
  CHECK(wrap_angle(0.1f) == doctest::Approx(0.1f));
  Rng rng(31);
  for (int i = 0; i < 200; ++i) {
    const float w = wrap_angle(rng.uniform(-20.0f, 20.0f));
    CHECK(w > -kPi - 1e-6f);
    CHECK(w <= kPi + 1e-6f);
  }
}
