#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "relseg/mask.hpp"
#include "relseg/rng.hpp"
#include "relseg/tensor.hpp"

namespace relseg {

struct Difficulty {
  double target_radius = 0.0;  // px
  double contrast = 0.0;       // foreground intensity above the 0.3 background
  double blur_sigma = 0.0;     // px, image only
  double noise_std = 0.0;
};

struct Range {
  double min = 0.0;
  double max = 0.0;
};

struct DifficultyRanges {
  Range target_radius{4.0, 10.0};
  Range contrast{0.2, 1.0};
  Range blur_sigma{0.0, 2.0};
  Range noise_std{0.0, 0.15};
};

struct SampleRecord {
  std::int64_t id = 0;
  int height = 0;
  int width = 0;
  std::vector<double> image;  // row-major, values in [0,1]
  BinaryMask mask;            // crisp ellipse, never blurred
  Difficulty difficulty;
};

struct FoldSplit {
  int fold_count = 0;
  std::map<std::int64_t, int> assignments;

  std::vector<std::int64_t> ids_in_fold(int fold) const;
  std::vector<std::int64_t> ids_outside_fold(int fold) const;
};

struct Dataset {
  std::vector<SampleRecord> samples;
  FoldSplit folds;
  int height = 0;
  int width = 0;

  const SampleRecord& by_id(std::int64_t id) const;
};

struct PairBatch {
  std::vector<std::int64_t> x1_ids, x2_ids;
  Tensor x1, x2;              // [B, 1, H, W]
  Tensor s1, s2, rp, rc;      // [B, 1, H, W], values in {0,1}
};

// One random ellipse per sample: foreground 0.3+contrast over a 0.3
// background, Gaussian blur on the image only, additive Gaussian noise,
// final clip to [0,1]. Per-sample streams derive from (seed, id).
std::vector<SampleRecord> generate_dataset(int count, int height, int width,
                                           const DifficultyRanges& ranges,
                                           std::uint64_t seed);

// seeded shuffle + round-robin; folds partition the ids with sizes
// differing by at most one
FoldSplit split_folds(std::span<const std::int64_t> ids, int fold_count,
                      std::uint64_t seed);

// x1 and x2 drawn independently, uniformly, with replacement; relation
// ground truth is recomputed from the drawn masks
PairBatch sample_pairs(const Dataset& data,
                       std::span<const std::int64_t> train_ids, int batch_size,
                       Rng& rng);

// layout: {id}.pgm + {id}.pbm + manifest.csv
void save_dataset(const std::filesystem::path& dir,
                  const std::vector<SampleRecord>& samples,
                  const FoldSplit& folds);
Dataset load_dataset(const std::filesystem::path& dir);

// [1,1,H,W] views used by inference and training
Tensor image_tensor(const SampleRecord& sample);
Tensor mask_tensor(const BinaryMask& mask);

}  // namespace relseg
