#include "relseg/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <future>
#include <semaphore>
#include <set>
#include <thread>

#include "relseg/checkpoint.hpp"
#include "relseg/csv.hpp"
#include "relseg/error.hpp"
#include "relseg/netpbm.hpp"

namespace relseg {

double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) {
    throw DimensionError("pearson: series lengths differ");
  }
  if (xs.size() < 2) {
    throw UsageError("pearson: need at least two points");
  }
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw UsageError("pearson: correlation undefined for a constant series");
  }
  return sxy / std::sqrt(sxx * syy);
}

namespace {

std::vector<ConfidenceRow> sort_by_confidence_desc(
    std::span<const ConfidenceRow> rows) {
  std::vector<ConfidenceRow> sorted(rows.begin(), rows.end());
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    return a.image_id < b.image_id;
  });
  return sorted;
}

}  // namespace

CoverageCurve coverage_curve(std::span<const ConfidenceRow> rows) {
  if (rows.empty()) throw UsageError("coverage_curve: empty input");
  const auto sorted = sort_by_confidence_desc(rows);
  const std::int64_t n = static_cast<std::int64_t>(sorted.size());
  CoverageCurve curve;
  std::int64_t taken = 0;
  double dice_acc = 0.0;
  for (int d = 10; d <= 100; d += 10) {
    const std::int64_t k = (static_cast<std::int64_t>(d) * n + 99) / 100;  // ceil
    while (taken < k) {
      dice_acc += sorted[static_cast<std::size_t>(taken)].dice;
      ++taken;
    }
    curve.push_back({d, dice_acc / static_cast<double>(k), static_cast<int>(k)});
  }
  return curve;
}

std::vector<ConfidenceRow> rank_by_difficulty(
    std::span<const ConfidenceRow> rows) {
  if (rows.empty()) throw UsageError("rank_by_difficulty: empty input");
  std::vector<ConfidenceRow> ranked(rows.begin(), rows.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.confidence != b.confidence) return a.confidence < b.confidence;
    return a.image_id < b.image_id;
  });
  return ranked;
}

namespace {

const std::vector<std::string>& canonical_mode_order() {
  static const std::vector<std::string> order = {
      "vanilla",   "repeat_s1", "repeat_s2",    "repeat",      "repeat_rp",
      "repeat_rc", "anchor_train", "anchor_test", "mc_dropout",
  };
  return order;
}

double mean_of(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

double sample_std(std::span<const double> v, double mean) {
  if (v.size() < 2) return 0.0;
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

std::optional<double> try_pearson(std::span<const double> xs,
                                  std::span<const double> ys) {
  try {
    return pearson(xs, ys);
  } catch (const UsageError&) {
    return std::nullopt;  // constant series: leave the cell empty
  }
}

}  // namespace

EvaluationReport evaluate_rows(std::span<const PredRow> rows) {
  if (rows.empty()) throw UsageError("evaluate_rows: no prediction rows");

  std::map<std::string, std::vector<PredRow>> by_mode;
  std::set<std::pair<std::string, std::int64_t>> seen;
  for (const PredRow& row : rows) {
    if (!seen.insert({row.mode, row.id}).second) {
      throw ConfigError("inconsistent fold metadata: image " +
                        std::to_string(row.id) +
                        " appears in multiple prediction sets for mode '" +
                        row.mode + "'");
    }
    by_mode[row.mode].push_back(row);
  }

  // canonical Table-1 ordering first, anything else alphabetically after
  std::vector<std::string> modes;
  for (const std::string& m : canonical_mode_order()) {
    if (by_mode.contains(m)) modes.push_back(m);
  }
  for (const auto& [m, _] : by_mode) {
    if (std::find(modes.begin(), modes.end(), m) == modes.end()) {
      modes.push_back(m);
    }
  }

  EvaluationReport report;
  for (const std::string& mode : modes) {
    const auto& mode_rows = by_mode[mode];
    std::set<int> folds;
    for (const PredRow& r : mode_rows) folds.insert(r.fold);

    ModeSummary summary;
    summary.mode = mode;
    summary.fold_count = static_cast<int>(folds.size());
    std::vector<double> fold_means, fold_pearsons;
    std::vector<double> pooled_dice, pooled_conf;
    bool pooled_all_conf = true;

    for (int fold : folds) {
      std::vector<double> dices, confs;
      bool all_conf = true;
      for (const PredRow& r : mode_rows) {
        if (r.fold != fold) continue;
        dices.push_back(r.dice);
        pooled_dice.push_back(r.dice);
        if (r.has_confidence) {
          confs.push_back(r.confidence);
          pooled_conf.push_back(r.confidence);
        } else {
          all_conf = false;
          pooled_all_conf = false;
        }
      }
      ModeFoldStat stat;
      stat.mode = mode;
      stat.fold = fold;
      stat.count = static_cast<int>(dices.size());
      stat.mean_dice = mean_of(dices);
      stat.std_dice = sample_std(dices, stat.mean_dice);
      if (all_conf && confs.size() == dices.size() && confs.size() >= 2) {
        stat.pearson = try_pearson(confs, dices);
      }
      fold_means.push_back(stat.mean_dice);
      if (stat.pearson) fold_pearsons.push_back(*stat.pearson);
      report.per_fold.push_back(std::move(stat));
    }

    summary.mean_dice = mean_of(fold_means);
    summary.std_dice = sample_std(fold_means, summary.mean_dice);
    if (!fold_pearsons.empty()) {
      summary.mean_pearson = mean_of(fold_pearsons);
    }
    summary.pooled_mean_dice = mean_of(pooled_dice);
    summary.pooled_std_dice = sample_std(pooled_dice, summary.pooled_mean_dice);
    if (pooled_all_conf && pooled_conf.size() == pooled_dice.size() &&
        pooled_conf.size() >= 2) {
      summary.pooled_pearson = try_pearson(pooled_conf, pooled_dice);
    }
    report.summaries.push_back(std::move(summary));

    // pooled coverage for every mode that carries a confidence per row
    bool has_conf = !mode_rows.empty();
    for (const PredRow& r : mode_rows) has_conf = has_conf && r.has_confidence;
    if (has_conf) {
      std::vector<ConfidenceRow> conf_rows;
      for (const PredRow& r : mode_rows) {
        conf_rows.push_back({r.id, r.dice, r.confidence, r.fold});
      }
      report.coverage[mode] = coverage_curve(conf_rows);
      if (report.ranking_mode.empty() || mode == "repeat") {
        report.ranking_mode = mode;
        report.ranking = rank_by_difficulty(conf_rows);
      }
    }
  }
  return report;
}

void write_report_csv(const std::filesystem::path& path,
                      const EvaluationReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string() + ": cannot open");
  csv::write_row(out, {"mode", "fold", "mean_dice", "std_dice", "pearson"});
  for (const ModeSummary& summary : report.summaries) {
    for (const ModeFoldStat& stat : report.per_fold) {
      if (stat.mode != summary.mode) continue;
      csv::write_row(out, {stat.mode, std::to_string(stat.fold),
                           csv::format_fixed(stat.mean_dice),
                           csv::format_fixed(stat.std_dice),
                           stat.pearson ? csv::format_fixed(*stat.pearson) : ""});
    }
    csv::write_row(out, {summary.mode, "mean",
                         csv::format_fixed(summary.mean_dice),
                         csv::format_fixed(summary.std_dice),
                         summary.mean_pearson
                             ? csv::format_fixed(*summary.mean_pearson)
                             : ""});
    csv::write_row(out, {summary.mode, "pooled",
                         csv::format_fixed(summary.pooled_mean_dice),
                         csv::format_fixed(summary.pooled_std_dice),
                         summary.pooled_pearson
                             ? csv::format_fixed(*summary.pooled_pearson)
                             : ""});
  }
  if (!out) throw IoError(path.string() + ": write failed");
}

void write_coverage_csv(const std::filesystem::path& path,
                        const EvaluationReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string() + ": cannot open");
  csv::write_row(out, {"mode", "d", "mean_dice", "count"});
  for (const std::string& mode : canonical_mode_order()) {
    const auto it = report.coverage.find(mode);
    if (it == report.coverage.end()) continue;
    for (const CoveragePoint& p : it->second) {
      csv::write_row(out, {mode, std::to_string(p.d),
                           csv::format_fixed(p.mean_dice),
                           std::to_string(p.count)});
    }
  }
  for (const auto& [mode, curve] : report.coverage) {
    if (std::find(canonical_mode_order().begin(), canonical_mode_order().end(),
                  mode) != canonical_mode_order().end()) {
      continue;
    }
    for (const CoveragePoint& p : curve) {
      csv::write_row(out, {mode, std::to_string(p.d),
                           csv::format_fixed(p.mean_dice),
                           std::to_string(p.count)});
    }
  }
  if (!out) throw IoError(path.string() + ": write failed");
}

void write_ranking_csv(const std::filesystem::path& path,
                       const EvaluationReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string() + ": cannot open");
  csv::write_row(out, {"rank", "id", "confidence", "dice"});
  for (std::size_t i = 0; i < report.ranking.size(); ++i) {
    const ConfidenceRow& r = report.ranking[i];
    csv::write_row(out, {std::to_string(i + 1), std::to_string(r.image_id),
                         csv::format_fixed(r.confidence),
                         csv::format_fixed(r.dice)});
  }
  if (!out) throw IoError(path.string() + ": write failed");
}

namespace {

// pixels inside the mask that touch a background pixel (or the image edge)
BinaryMask contour_of(const BinaryMask& mask) {
  BinaryMask edge(mask.height(), mask.width());
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.at(y, x)) continue;
      const bool boundary =
          y == 0 || y == mask.height() - 1 || x == 0 || x == mask.width() - 1 ||
          !mask.at(y - 1, x) || !mask.at(y + 1, x) || !mask.at(y, x - 1) ||
          !mask.at(y, x + 1);
      if (boundary) edge.set(y, x, true);
    }
  }
  return edge;
}

void write_one_overlay(const std::filesystem::path& path,
                       const SampleRecord& sample, const BinaryMask& predicted) {
  std::vector<double> canvas = sample.image;
  const BinaryMask gt_edge = contour_of(sample.mask);
  const BinaryMask pred_edge = contour_of(predicted);
  for (int y = 0; y < sample.height; ++y) {
    for (int x = 0; x < sample.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * sample.width + x;
      if (gt_edge.at(y, x)) canvas[i] = 1.0;   // ground truth: white contour
      if (pred_edge.at(y, x)) canvas[i] = 0.0;  // prediction: black contour
    }
  }
  write_pgm16(path, canvas, sample.height, sample.width);
}

}  // namespace

void write_ranking_overlays(const std::filesystem::path& out_dir,
                            const EvaluationReport& report, const Dataset& data,
                            std::span<const std::filesystem::path> pred_dirs,
                            int k) {
  if (report.ranking.empty() || k <= 0) return;
  std::filesystem::create_directories(out_dir);

  auto find_mask = [&pred_dirs](std::int64_t id) -> std::optional<BinaryMask> {
    const std::string name = std::to_string(id) + "_savg.pbm";
    for (const auto& dir : pred_dirs) {
      const auto path = dir / name;
      if (std::filesystem::exists(path)) return read_pbm(path);
    }
    return std::nullopt;
  };

  const std::size_t n = report.ranking.size();
  const std::size_t take = std::min(static_cast<std::size_t>(k), n);
  char name[64];
  for (std::size_t i = 0; i < take; ++i) {
    const ConfidenceRow& hard = report.ranking[i];
    if (auto mask = find_mask(hard.image_id)) {
      std::snprintf(name, sizeof(name), "overlay_hard_%02zu_id%lld.pgm", i + 1,
                    static_cast<long long>(hard.image_id));
      write_one_overlay(out_dir / name, data.by_id(hard.image_id), *mask);
    }
    const ConfidenceRow& easy = report.ranking[n - 1 - i];
    if (auto mask = find_mask(easy.image_id)) {
      std::snprintf(name, sizeof(name), "overlay_easy_%02zu_id%lld.pgm", i + 1,
                    static_cast<long long>(easy.image_id));
      write_one_overlay(out_dir / name, data.by_id(easy.image_id), *mask);
    }
  }
}

// ---------------------------------------------------------------------------
// cross-validation driver

namespace {

int thread_cap() {
  if (const char* env = std::getenv("RELSEG_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

struct FoldOutput {
  std::vector<PredRow> rows;
};

FoldOutput run_fold(const Dataset& data, const CrossValConfig& config,
                    const std::filesystem::path& out_dir, int fold) {
  const auto fold_dir = out_dir / ("fold" + std::to_string(fold));
  std::filesystem::create_directories(fold_dir);
  const auto train_ids = data.folds.ids_outside_fold(fold);
  const auto test_ids = data.folds.ids_in_fold(fold);
  if (train_ids.empty() || test_ids.empty()) {
    throw ConfigError("fold " + std::to_string(fold) +
                      " leaves an empty train or test split");
  }

  bool want_repeat = false, want_anchor_train = false, want_anchor_test = false,
       want_mc = false, want_vanilla = false;
  for (InferenceModeKind m : config.modes) {
    switch (m) {
      case InferenceModeKind::kRepeat: want_repeat = true; break;
      case InferenceModeKind::kAnchorTrain: want_anchor_train = true; break;
      case InferenceModeKind::kAnchorTest: want_anchor_test = true; break;
      case InferenceModeKind::kMcDropout: want_mc = true; break;
      case InferenceModeKind::kVanilla: want_vanilla = true; break;
    }
  }

  FoldOutput result;
  auto collect = [&](const PredictionSet& set) {
    const auto dir = fold_dir / ("pred_" + set.mode);
    write_predictions(dir, set);
    // read the emitted file back so the aggregate provably matches the CSVs
    auto rows = read_predictions(dir);
    result.rows.insert(result.rows.end(), rows.begin(), rows.end());
  };

  const std::uint64_t fold_salt = static_cast<std::uint64_t>(fold);

  if (want_repeat || want_anchor_train || want_anchor_test) {
    ModelConfig mc = config.model;
    mc.variant = Variant::kRelation;
    UNet net(mc, mix_seed(config.seed, 0x400 + fold_salt));
    TrainConfig tc = config.train;
    tc.seed = mix_seed(config.seed, 0x100 + fold_salt);
    const TrainLog log = train_relation(net, data, train_ids, tc);
    log.write_csv(fold_dir / "trainlog_relation.csv");
    save_checkpoint(fold_dir / "relation.ckpt", net);

    if (want_repeat) {
      PredictionSet set{mode_name(InferenceModeKind::kRepeat), fold, {}};
      for (std::int64_t id : test_ids) {
        set.records.push_back(infer_repeat(net, data.by_id(id)));
      }
      collect(set);
    }
    const std::uint64_t anchor_seed = mix_seed(config.seed, 0x700 + fold_salt);
    if (want_anchor_train) {
      PredictionSet set{mode_name(InferenceModeKind::kAnchorTrain), fold, {}};
      for (std::int64_t id : test_ids) {
        const auto anchors =
            select_anchors(train_ids, config.anchor_count, anchor_seed, id);
        set.records.push_back(
            infer_anchored(net, data.by_id(id), anchors, data));
      }
      collect(set);
    }
    if (want_anchor_test) {
      PredictionSet set{mode_name(InferenceModeKind::kAnchorTest), fold, {}};
      for (std::int64_t id : test_ids) {
        const auto anchors =
            select_anchors(test_ids, config.anchor_count, anchor_seed, id);
        set.records.push_back(
            infer_anchored(net, data.by_id(id), anchors, data));
      }
      collect(set);
    }
  }

  if (want_vanilla) {
    ModelConfig mc = config.model;
    mc.variant = Variant::kVanilla;
    UNet net(mc, mix_seed(config.seed, 0x500 + fold_salt));
    TrainConfig tc = config.train;
    tc.seed = mix_seed(config.seed, 0x200 + fold_salt);
    const TrainLog log = train_vanilla(net, data, train_ids, tc);
    log.write_csv(fold_dir / "trainlog_vanilla.csv");
    save_checkpoint(fold_dir / "vanilla.ckpt", net);

    PredictionSet set{mode_name(InferenceModeKind::kVanilla), fold, {}};
    for (std::int64_t id : test_ids) {
      set.records.push_back(infer_vanilla(net, data.by_id(id)));
    }
    collect(set);
  }

  if (want_mc) {
    ModelConfig mc = config.model;
    mc.variant = Variant::kVanillaDropout;
    UNet net(mc, mix_seed(config.seed, 0x600 + fold_salt));
    TrainConfig tc = config.train;
    tc.seed = mix_seed(config.seed, 0x300 + fold_salt);
    const TrainLog log = train_vanilla(net, data, train_ids, tc);
    log.write_csv(fold_dir / "trainlog_dropout.csv");
    save_checkpoint(fold_dir / "dropout.ckpt", net);

    const std::uint64_t mc_seed = mix_seed(config.seed, 0x800 + fold_salt);
    PredictionSet set{mode_name(InferenceModeKind::kMcDropout), fold, {}};
    for (std::int64_t id : test_ids) {
      set.records.push_back(
          infer_mc_dropout(net, data.by_id(id), config.mc_passes, mc_seed));
    }
    collect(set);
  }
  return result;
}

}  // namespace

EvaluationReport cross_validate(const Dataset& data,
                                const CrossValConfig& config,
                                const std::filesystem::path& out_dir) {
  if (data.folds.fold_count < 2) {
    throw ConfigError("cross_validate: dataset must carry at least two folds");
  }
  if (config.modes.empty()) {
    throw ConfigError("cross_validate: no inference modes requested");
  }
  std::filesystem::create_directories(out_dir);

  const int folds = data.folds.fold_count;
  std::vector<FoldOutput> outputs(static_cast<std::size_t>(folds));
  if (config.parallel_folds) {
    std::counting_semaphore<64> slots(std::min(thread_cap(), 64));
    std::vector<std::future<void>> tasks;
    for (int f = 0; f < folds; ++f) {
      tasks.push_back(std::async(std::launch::async, [&, f]() {
        slots.acquire();
        try {
          outputs[static_cast<std::size_t>(f)] = run_fold(data, config, out_dir, f);
        } catch (...) {
          slots.release();
          throw;
        }
        slots.release();
      }));
    }
    for (auto& t : tasks) t.get();
  } else {
    for (int f = 0; f < folds; ++f) {
      outputs[static_cast<std::size_t>(f)] = run_fold(data, config, out_dir, f);
    }
  }

  std::vector<PredRow> rows;
  for (const FoldOutput& o : outputs) {
    rows.insert(rows.end(), o.rows.begin(), o.rows.end());
  }
  EvaluationReport report = evaluate_rows(rows);
  write_report_csv(out_dir / "report.csv", report);
  write_coverage_csv(out_dir / "coverage.csv", report);
  write_ranking_csv(out_dir / "ranking.csv", report);

  if (!report.ranking_mode.empty()) {
    std::vector<std::filesystem::path> pred_dirs;
    for (int f = 0; f < folds; ++f) {
      pred_dirs.push_back(out_dir / ("fold" + std::to_string(f)) /
                          ("pred_" + report.ranking_mode));
    }
    write_ranking_overlays(out_dir / "overlays", report, data, pred_dirs,
                           config.overlay_k);
  }
  return report;
}

}  // namespace relseg
