#include "air/geometry.hpp"

#include <cmath>
#include <numbers>

#include "air/error.hpp"

namespace air {

namespace {
constexpr float kPi = std::numbers::pi_v<float>;
constexpr float kDegToRad = std::numbers::pi_v<float> / 180.0f;
}  // namespace

AffineMatrix2D AffineMatrix2D::mul(const AffineMatrix2D& o) const {
  AffineMatrix2D r;
  r.m[0] = m[0] * o.m[0] + m[1] * o.m[3];
  r.m[1] = m[0] * o.m[1] + m[1] * o.m[4];
  r.m[2] = m[0] * o.m[2] + m[1] * o.m[5] + m[2];
  r.m[3] = m[3] * o.m[0] + m[4] * o.m[3];
  r.m[4] = m[3] * o.m[1] + m[4] * o.m[4];
  r.m[5] = m[3] * o.m[2] + m[4] * o.m[5] + m[5];
  return r;
}

float wrap_angle(float theta) {
  float y = std::fmod(theta + kPi, 2.0f * kPi);
  if (y <= 0.0f) y += 2.0f * kPi;
  return y - kPi;
}

AffineMatrix2D to_matrix(const RigidParams2D& p) {
  const float c = std::cos(p.theta);
  const float s = std::sin(p.theta);
  AffineMatrix2D r;
  r.m = {c, -s, p.tx, s, c, p.ty};
  return r;
}

RigidParams2D from_matrix(const AffineMatrix2D& m) {
  RigidParams2D p;
  p.theta = std::atan2(m.m[3], m.m[0]);
  p.tx = m.m[2];
  p.ty = m.m[5];
  return p;
}

RigidParams2D compose(const RigidParams2D& a, const RigidParams2D& b) {
  const float ca = std::cos(a.theta);
  const float sa = std::sin(a.theta);
  RigidParams2D r;
  r.theta = wrap_angle(a.theta + b.theta);
  r.tx = ca * b.tx - sa * b.ty + a.tx;
  r.ty = sa * b.tx + ca * b.ty + a.ty;
  return r;
}

RigidParams2D invert(const RigidParams2D& p) {
  const float c = std::cos(p.theta);
  const float s = std::sin(p.theta);
  RigidParams2D r;
  r.theta = wrap_angle(-p.theta);
  // -R(-theta) * t
  r.tx = -(c * p.tx + s * p.ty);
  r.ty = -(-s * p.tx + c * p.ty);
  return r;
}

float param_distance(const RigidParams2D& a, const RigidParams2D& b) {
  const float dt = a.theta - b.theta;
  const float dx = a.tx - b.tx;
  const float dy = a.ty - b.ty;
  return dt * dt + dx * dx + dy * dy;
}

float PerturbationRange::max_rotation_rad() const { return max_rotation_deg * kDegToRad; }

float PerturbationRange::max_translation_norm() const {
  if (pixel_spacing_mm <= 0.0f || image_size_px <= 0) {
    throw ShapeError("PerturbationRange: spacing and image size must be positive");
  }
  return max_translation_mm / (pixel_spacing_mm * static_cast<float>(image_size_px) / 2.0f);
}

RigidParams2D sample_perturbation(const PerturbationRange& range, Rng& rng) {
  if (range.max_rotation_deg < 0.0f || range.max_translation_mm < 0.0f) {
    throw ShapeError("PerturbationRange: bounds must be non-negative");
  }
  const float rot = range.max_rotation_rad();
  const float tr = range.max_translation_norm();
  RigidParams2D p;
  p.theta = rng.uniform(-rot, rot);
  p.tx = rng.uniform(-tr, tr);
  p.ty = rng.uniform(-tr, tr);
  return p;
}

RigidParams2D sample_perturbation(const PerturbationRange& range, uint64_t seed) {
  Rng rng(seed);
  return sample_perturbation(range, rng);
}

}  // namespace air
