#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "air/geometry.hpp"
#include "air/nets.hpp"
#include "air/synthdata.hpp"

namespace air {

/// Target registration error in millimetres: RMS displacement between the
/// two transforms over a fixed 4x4 grid of target points spanning the
/// central 50% of the image, converted via (size_px/2) * spacing_mm.
float tre(const RigidParams2D& est, const RigidParams2D& gt, float spacing_mm, int size_px);

/// Single-shot correction: G applied to (fixed, warp(moving, init_t)).
RigidParams2D register_once(const Network& gen, const ImagePair& pair,
                            const RigidParams2D& init_t);

struct RefineOptions {
  int max_iters = 10;
  float eps = 1e-3f;  // stop once the D-score improves by less than this
};

struct RegistrationResult {
  std::string pair_id;
  RigidParams2D initial_t;
  RigidParams2D estimated_t;  // best-scoring composite transform
  float tre_before_mm = 0.0f;
  float tre_after_mm = 0.0f;
  float dscore_before = 0.0f;
  float dscore_after = 0.0f;
  int iterations = 0;
  struct TraceStep {
    RigidParams2D t;
    float dscore;
    float tre_mm;
  };
  std::vector<TraceStep> trace;  // one entry per iteration, as produced
};

/// Correction estimator: maps (pair, current transform) to a correction.
using Registrar = std::function<RigidParams2D(const ImagePair&, const RigidParams2D&)>;
/// Alignment scorer: higher means better aligned.
using Scorer = std::function<float(const ImagePair&, const RigidParams2D&)>;

/// Refinement loop: repeatedly estimate a correction on the current
/// resample, accumulate it into the composite transform, and score with D;
/// stops when the D-score stops improving by eps or max_iters is reached.
/// The reported result is the best-scoring composite encountered.
RegistrationResult iterative_register(const Network& gen, const Network& dis,
                                      const ImagePair& pair, const RigidParams2D& init_t,
                                      const RefineOptions& opt = {});

/// Same loop with injectable estimator and scorer.
RegistrationResult iterative_register(const Registrar& registrar, const Scorer& scorer,
                                      const ImagePair& pair, const RigidParams2D& init_t,
                                      const RefineOptions& opt = {});

struct EvalSummary {
  int n = 0;
  float mean_tre_before_mm = 0.0f;
  float mean_tre_after_mm = 0.0f;
  float median_tre_before_mm = 0.0f;
  float median_tre_after_mm = 0.0f;
  float std_tre_before_mm = 0.0f;
  float std_tre_after_mm = 0.0f;
  float mean_dscore_before = 0.0f;
  float mean_dscore_after = 0.0f;
  /// Rank correlation of D-score against negated TRE, pooled over the
  /// before- and after-registration states.
  float spearman_dscore_vs_neg_tre = 0.0f;
};

struct EvalReport {
  std::vector<RegistrationResult> rows;
  EvalSummary summary;
};

/// Runs iterative registration over the validation split with one seeded
/// initial perturbation per pair. Deterministic in (weights, dataset, seed).
EvalReport evaluate(const Network& gen, const Network& dis, const Dataset& data,
                    const PerturbationRange& perturb, uint64_t seed,
                    const RefineOptions& opt = {});

void write_report_csv(const EvalReport& report, const std::filesystem::path& path);
void write_summary_json(const EvalReport& report, const std::filesystem::path& path);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> a, std::span<const double> b);

/// Writes a binary portable pixmap: fixed image as gray, the moving image
/// warped by t blended in pseudo color, and the D-score printed as a digit
/// strip in the lower-right corner.
void emit_overlay(const ImagePair& pair, const RigidParams2D& t, float dscore,
                  const std::filesystem::path& path);

}  // namespace air
