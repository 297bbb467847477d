#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "relseg/inference.hpp"
#include "relseg/synth.hpp"
#include "relseg/trainer.hpp"
#include "relseg/unet.hpp"

namespace relseg {

struct ConfidenceRow {
  std::int64_t image_id = 0;
  double dice = 0.0;
  double confidence = 0.0;
  int fold = 0;
};

// sample Pearson correlation; throws for constant series (undefined) rather
// than returning 0
double pearson(std::span<const double> xs, std::span<const double> ys);

struct CoveragePoint {
  int d = 0;  // percent of most-confident samples kept
  double mean_dice = 0.0;
  int count = 0;
};
using CoverageCurve = std::vector<CoveragePoint>;

// deciles d in {10,...,100}; rows sorted by confidence descending with ties
// broken by ascending image id; each point covers the top ceil(d/100 * N)
CoverageCurve coverage_curve(std::span<const ConfidenceRow> rows);

// ascending confidence: hardest first; ties broken by ascending id
std::vector<ConfidenceRow> rank_by_difficulty(std::span<const ConfidenceRow> rows);

struct ModeFoldStat {
  std::string mode;
  int fold = 0;
  int count = 0;
  double mean_dice = 0.0;
  double std_dice = 0.0;  // sample standard deviation
  std::optional<double> pearson;
};

struct ModeSummary {
  std::string mode;
  int fold_count = 0;
  double mean_dice = 0.0;   // mean of fold means
  double std_dice = 0.0;    // sample std of fold means
  std::optional<double> mean_pearson;    // primary: mean of per-fold values
  double pooled_mean_dice = 0.0;
  double pooled_std_dice = 0.0;
  std::optional<double> pooled_pearson;  // secondary, emitted for reference
};

struct EvaluationReport {
  std::vector<ModeFoldStat> per_fold;  // Table-1 mode order, folds ascending
  std::vector<ModeSummary> summaries;
  std::map<std::string, CoverageCurve> coverage;  // pooled, confidence modes
  std::vector<ConfidenceRow> ranking;             // pooled ranking
  std::string ranking_mode;
};

EvaluationReport evaluate_rows(std::span<const PredRow> rows);

void write_report_csv(const std::filesystem::path& path,
                      const EvaluationReport& report);
void write_coverage_csv(const std::filesystem::path& path,
                        const EvaluationReport& report);
void write_ranking_csv(const std::filesystem::path& path,
                       const EvaluationReport& report);

// contour overlays for the k hardest and k easiest ranked images; the
// predicted mask for each id is looked up as {id}_savg.pbm under one of the
// prediction directories
void write_ranking_overlays(const std::filesystem::path& out_dir,
                            const EvaluationReport& report, const Dataset& data,
                            std::span<const std::filesystem::path> pred_dirs,
                            int k);

struct CrossValConfig {
  ModelConfig model;  // variant field is overridden per trained network
  TrainConfig train;
  std::vector<InferenceModeKind> modes = {
      InferenceModeKind::kVanilla,   InferenceModeKind::kRepeat,
      InferenceModeKind::kAnchorTrain, InferenceModeKind::kAnchorTest,
      InferenceModeKind::kMcDropout,
  };
  int anchor_count = 20;
  int mc_passes = 20;
  std::uint64_t seed = 7;
  bool parallel_folds = false;
  int overlay_k = 5;
};

// trains per fold (relation and, when requested by the mode list, the
// vanilla / dropout baselines), runs every mode on the held-out fold, and
// aggregates report/coverage/ranking files under out_dir
EvaluationReport cross_validate(const Dataset& data, const CrossValConfig& config,
                                const std::filesystem::path& out_dir);

}  // namespace relseg
