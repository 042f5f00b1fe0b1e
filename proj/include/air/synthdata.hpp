#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "air/geometry.hpp"
#include "air/tensor.hpp"

namespace air {

/// Co-registered multimodal image pair. `fixed` plays the MR-like role,
/// `moving` the ultrasound-like one; both are [C,H,W] in [0,1]. The ground
/// truth aligning transform is the identity at generation time;
/// misalignments are applied online.
struct ImagePair {
  std::string id;
  Tensor fixed;
  Tensor moving;
  float pixel_spacing_mm = 1.0f;
  RigidParams2D gt_transform;
};

enum class Split { kTrain, kValidation };

struct DatasetEntry {
  std::string id;
  Split split = Split::kTrain;
};

/// Ordered pair ids with their split assignment and on-disk root.
struct Dataset {
  std::filesystem::path root;
  std::vector<DatasetEntry> entries;
  float pixel_spacing_mm = 1.0f;
  int size = 64;
  int channels = 2;
  uint64_t seed = 0;

  std::vector<std::string> ids(Split s) const;
  size_t count(Split s) const;
};

/// Deterministic synthetic pair: the shared anatomy is a sum of random
/// anisotropic Gaussian blobs over a smooth low-frequency bias; channels
/// sample the blobs at different depths. The moving modality applies the
/// contrast inversion m(v) = 1 - v^0.7, multiplies by speckle
/// (per-pixel uniform in [0.7, 1.3], 3x3 box smoothed) and renormalizes.
ImagePair generate_pair(uint64_t seed, int size, int channels, float spacing_mm);

/// Train/validation counts under the 5:1 rule: (round(n*5/6), remainder).
std::pair<size_t, size_t> split_counts(size_t n);

/// Deterministically shuffles ids and assigns splits with the 5:1 rule.
void assign_split(Dataset& d, uint64_t seed);

/// Generates n pairs under out_dir, writes volumes plus manifest.json, and
/// returns the split-assigned dataset. Requires n >= 6.
Dataset make_dataset(int n, uint64_t seed, int size, int channels, float spacing_mm,
                     const std::filesystem::path& out_dir);

Dataset load_dataset(const std::filesystem::path& dir);
ImagePair load_pair(const Dataset& d, const std::string& id);

void save_manifest(const Dataset& d);

}  // namespace air
