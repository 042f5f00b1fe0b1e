#pragma once

#include <array>
#include <cstdint>

#include "air/rng.hpp"

namespace air {

/// 2x3 row-major matrix [a b tx; c d ty] acting on homogeneous normalized
/// coordinates, where each image axis spans [-1, 1].
struct AffineMatrix2D {
  std::array<float, 6> m{1.0f, 0.0f, 0.0f, 0.0f, 1.0f, 0.0f};

  static AffineMatrix2D identity() { return {}; }

  /// Applies the matrix to a point (x, y).
  std::array<float, 2> apply(float x, float y) const {
    return {m[0] * x + m[1] * y + m[2], m[3] * x + m[4] * y + m[5]};
  }

  /// this * other as homogeneous 2D transforms.
  AffineMatrix2D mul(const AffineMatrix2D& o) const;
};

/// Rigid 2D transform: rotation (radians) about the image center plus a
/// translation in normalized image coordinates. theta is kept in (-pi, pi].
struct RigidParams2D {
  float theta = 0.0f;
  float tx = 0.0f;
  float ty = 0.0f;

  static RigidParams2D identity() { return {}; }
};

/// Wraps an angle into (-pi, pi].
float wrap_angle(float theta);

/// [cos -sin tx; sin cos ty]
AffineMatrix2D to_matrix(const RigidParams2D& p);

/// Recovers rigid parameters from a rigid-derived matrix.
RigidParams2D from_matrix(const AffineMatrix2D& m);

/// to_matrix(compose(a,b)) == to_matrix(a) * to_matrix(b)
RigidParams2D compose(const RigidParams2D& a, const RigidParams2D& b);

RigidParams2D invert(const RigidParams2D& p);

/// Squared Euclidean distance on the (theta, tx, ty) vector.
float param_distance(const RigidParams2D& a, const RigidParams2D& b);

/// Bounds for random misalignments. Rotation in degrees, translation in
/// millimetres; the normalized translation bound follows from the pixel
/// spacing and image size (half-extent of the image is 1.0 in normalized
/// coordinates).
struct PerturbationRange {
  float max_rotation_deg = 25.0f;
  float max_translation_mm = 5.0f;
  float pixel_spacing_mm = 1.0f;
  int image_size_px = 64;

  float max_rotation_rad() const;
  float max_translation_norm() const;
};

/// Uniform independent draws of (theta, tx, ty) within the range bounds.
RigidParams2D sample_perturbation(const PerturbationRange& range, Rng& rng);
RigidParams2D sample_perturbation(const PerturbationRange& range, uint64_t seed);

}  // namespace air
