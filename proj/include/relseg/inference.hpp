#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "relseg/mask.hpp"
#include "relseg/synth.hpp"
#include "relseg/unet.hpp"

namespace relseg {

enum class InferenceModeKind {
  kRepeat,       // x1 = x2, four heads + averaged segmentation
  kAnchorTrain,  // s1 averaged over anchors drawn from the training fold
  kAnchorTest,   // s1 averaged over anchors drawn from the test fold
  kMcDropout,    // union/intersection over n sampled dropout passes
  kVanilla,      // plain single-head baseline, no confidence
};

std::string mode_name(InferenceModeKind kind);
InferenceModeKind mode_from_name(const std::string& name);

struct InferenceMode {
  InferenceModeKind kind = InferenceModeKind::kRepeat;
  int anchor_count = 20;
  int mc_passes = 20;
};

struct PredictionRecord {
  std::int64_t image_id = 0;
  BinaryMask s1_hat, s2_hat, rp_hat, rc_hat;
  BinaryMask s_avg;  // averaged-probability mask (the only mask for vanilla)
  bool has_confidence = false;
  double confidence = 0.0;
  double dice = 0.0;  // headline accuracy of the mode vs ground truth
  // per-head accuracies, populated by the relation modes
  double dice_s1 = 0.0, dice_s2 = 0.0, dice_savg = 0.0, dice_rp = 0.0,
         dice_rc = 0.0;
};

PredictionRecord infer_repeat(const UNet& net, const SampleRecord& sample);

// anchors vary only the reported s1; relations and confidence come from the
// repeat pass of the same image
PredictionRecord infer_anchored(const UNet& net, const SampleRecord& sample,
                                std::span<const std::int64_t> anchor_ids,
                                const Dataset& data);

PredictionRecord infer_mc_dropout(const UNet& net, const SampleRecord& sample,
                                  int passes, std::uint64_t seed);

PredictionRecord infer_vanilla(const UNet& net, const SampleRecord& sample);

// seeded distinct anchor ids, stream derived from (seed, image_id)
std::vector<std::int64_t> select_anchors(std::span<const std::int64_t> pool,
                                         int count, std::uint64_t seed,
                                         std::int64_t image_id);

struct PredictionSet {
  std::string mode;
  int fold = 0;
  std::vector<PredictionRecord> records;
};

// masks ({id}_s1/_rp/_rc/_savg.pbm where defined), predictions.csv
// (id,mode,dice,confidence; repeat additionally emits per-head rows) and a
// meta.txt carrying the fold id
void write_predictions(const std::filesystem::path& dir,
                       const PredictionSet& set);

struct PredRow {
  std::int64_t id = 0;
  std::string mode;
  double dice = 0.0;
  bool has_confidence = false;
  double confidence = 0.0;
  int fold = 0;
};

std::vector<PredRow> read_predictions(const std::filesystem::path& dir);

}  // namespace relseg
