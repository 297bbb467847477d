// relseg: synthetic segmentation pipeline around the relation-head U-Net.
// Subcommands: generate, train, infer, evaluate, crossval, gradcheck.
// Exit codes: 0 success, 1 gradcheck failure, 2 configuration error,
// 3 I/O error, 4 numerical divergence.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "relseg/checkpoint.hpp"
#include "relseg/error.hpp"
#include "relseg/evaluation.hpp"
#include "relseg/gradcheck.hpp"
#include "relseg/manifest.hpp"
#include "relseg/synth.hpp"
#include "relseg/trainer.hpp"

namespace {

using namespace relseg;

std::map<std::string, std::string> read_kv_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open config file");
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ": malformed line '" + line + "'");
    }
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

double kv_double(const std::map<std::string, std::string>& kv,
                 const std::string& key, double fallback) {
  const auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (const std::logic_error&) {
    throw ConfigError("config key '" + key + "': malformed value '" +
                      it->second + "'");
  }
}

int kv_int(const std::map<std::string, std::string>& kv, const std::string& key,
           int fallback) {
  const auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  try {
    return std::stoi(it->second);
  } catch (const std::logic_error&) {
    throw ConfigError("config key '" + key + "': malformed value '" +
                      it->second + "'");
  }
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  parts.push_back(cur);
  return parts;
}

std::pair<int, int> parse_size(const std::string& text) {
  const auto parts = split_on(text, 'x');
  if (parts.size() != 2 || parts[0].empty() || parts[1].empty()) {
    throw ConfigError("--size: expected HxW, got '" + text + "'");
  }
  try {
    const int h = std::stoi(parts[0]);
    const int w = std::stoi(parts[1]);
    if (h < 1 || w < 1) throw std::invalid_argument("");
    return {h, w};
  } catch (const std::logic_error&) {
    throw ConfigError("--size: expected positive HxW, got '" + text + "'");
  }
}

TrainConfig train_config_from_kv(const std::map<std::string, std::string>& kv,
                                 std::uint64_t seed) {
  TrainConfig tc;
  tc.epochs = kv_int(kv, "epochs", tc.epochs);
  tc.initial_lr = kv_double(kv, "initial_lr", tc.initial_lr);
  tc.lr_halving_period = kv_int(kv, "lr_halving_period", tc.lr_halving_period);
  tc.batch_size = kv_int(kv, "batch_size", tc.batch_size);
  tc.batches_per_epoch = kv_int(kv, "batches_per_epoch", tc.batches_per_epoch);
  tc.seed = seed;
  if (const auto it = kv.find("loss_head_weights"); it != kv.end()) {
    const auto parts = split_on(it->second, ',');
    if (parts.size() != 4) {
      throw ConfigError("loss_head_weights: expected four comma-separated values");
    }
    for (std::size_t i = 0; i < 4; ++i) {
      tc.loss_head_weights[i] = std::stod(parts[i]);
    }
  }
  return tc;
}

ModelConfig model_config_from_kv(const std::map<std::string, std::string>& kv,
                                 const Dataset& data, Variant variant) {
  ModelConfig mc;
  mc.variant = variant;
  mc.in_channels_per_image = 1;
  mc.base_channels = kv_int(kv, "base_channels", mc.base_channels);
  mc.depth = kv_int(kv, "depth", mc.depth);
  mc.dropout_rate = kv_double(kv, "dropout_rate", mc.dropout_rate);
  mc.input_h = data.height;
  mc.input_w = data.width;
  return mc;
}

std::string join_args(int argc, char** argv) {
  std::string joined;
  for (int i = 0; i < argc; ++i) {
    if (i) joined += ' ';
    joined += argv[i];
  }
  return joined;
}

struct GenerateArgs {
  int count = 0;
  std::string size = "32x32";
  std::string difficulty_config;
  std::uint64_t seed = 0;
  std::string out;
  int folds = 5;
};

void cmd_generate(const GenerateArgs& args, RunManifest manifest) {
  if (args.count < 1) throw ConfigError("--count must be >= 1");
  const auto [h, w] = parse_size(args.size);
  DifficultyRanges ranges;
  if (!args.difficulty_config.empty()) {
    const auto kv = read_kv_file(args.difficulty_config);
    manifest.config_digest = digest_file(args.difficulty_config);
    ranges.target_radius.min = kv_double(kv, "radius_min", ranges.target_radius.min);
    ranges.target_radius.max = kv_double(kv, "radius_max", ranges.target_radius.max);
    ranges.contrast.min = kv_double(kv, "contrast_min", ranges.contrast.min);
    ranges.contrast.max = kv_double(kv, "contrast_max", ranges.contrast.max);
    ranges.blur_sigma.min = kv_double(kv, "blur_min", ranges.blur_sigma.min);
    ranges.blur_sigma.max = kv_double(kv, "blur_max", ranges.blur_sigma.max);
    ranges.noise_std.min = kv_double(kv, "noise_min", ranges.noise_std.min);
    ranges.noise_std.max = kv_double(kv, "noise_max", ranges.noise_std.max);
  }
  const auto samples = generate_dataset(args.count, h, w, ranges, args.seed);
  std::vector<std::int64_t> ids;
  for (const auto& s : samples) ids.push_back(s.id);
  const FoldSplit folds = split_folds(ids, args.folds, args.seed);
  save_dataset(args.out, samples, folds);
  std::cout << "generated " << samples.size() << " samples (" << h << "x" << w
            << ", " << args.folds << " folds) into " << args.out << "\n";
  manifest.finished = timestamp_utc();
  manifest.write(args.out);
}

struct TrainArgs {
  std::string data;
  std::string variant = "relation";
  std::string config;
  int fold = 0;
  std::uint64_t seed = 0;
  std::string out;
};

void cmd_train(const TrainArgs& args, RunManifest manifest) {
  const Dataset data = load_dataset(args.data);
  if (args.fold < 0 || args.fold >= data.folds.fold_count) {
    throw ConfigError("--fold " + std::to_string(args.fold) +
                      " outside the dataset's " +
                      std::to_string(data.folds.fold_count) + " folds");
  }
  std::map<std::string, std::string> kv;
  if (!args.config.empty()) {
    kv = read_kv_file(args.config);
    manifest.config_digest = digest_file(args.config);
  }
  const Variant variant = variant_from_name(args.variant);
  const TrainConfig tc = train_config_from_kv(kv, args.seed);
  const ModelConfig mc = model_config_from_kv(kv, data, variant);

  UNet net(mc, mix_seed(args.seed, 0x6e6574));
  const auto train_ids = data.folds.ids_outside_fold(args.fold);
  const TrainLog log = variant == Variant::kRelation
                           ? train_relation(net, data, train_ids, tc)
                           : train_vanilla(net, data, train_ids, tc);

  std::filesystem::create_directories(args.out);
  save_checkpoint(std::filesystem::path(args.out) / "checkpoint.ckpt", net);
  log.write_csv(std::filesystem::path(args.out) / "trainlog.csv");
  std::cout << "trained " << args.variant << " on " << train_ids.size()
            << " samples (fold " << args.fold << " held out); final loss "
            << log.epochs.back().total_loss << "\n";
  manifest.finished = timestamp_utc();
  manifest.write(args.out);
}

struct InferArgs {
  std::string checkpoint;
  std::string data;
  int fold = 0;
  std::string mode = "repeat";
  int anchors = 20;
  int mc_passes = 20;
  std::uint64_t seed = 0;
  std::string out;
};

void cmd_infer(const InferArgs& args, RunManifest manifest) {
  const UNet net = load_checkpoint(args.checkpoint);
  const Dataset data = load_dataset(args.data);
  if (args.fold < 0 || args.fold >= data.folds.fold_count) {
    throw ConfigError("--fold " + std::to_string(args.fold) +
                      " outside the dataset's " +
                      std::to_string(data.folds.fold_count) + " folds");
  }
  const InferenceModeKind kind = mode_from_name(args.mode);
  const Variant variant = net.config().variant;
  const auto requires_variant = [&](Variant needed) {
    if (variant != needed) {
      throw ConfigError("--mode " + args.mode + " needs a " +
                        variant_name(needed) + " checkpoint, but '" +
                        args.checkpoint + "' holds " + variant_name(variant));
    }
  };
  switch (kind) {
    case InferenceModeKind::kRepeat:
    case InferenceModeKind::kAnchorTrain:
    case InferenceModeKind::kAnchorTest:
      requires_variant(Variant::kRelation);
      break;
    case InferenceModeKind::kMcDropout:
      requires_variant(Variant::kVanillaDropout);
      break;
    case InferenceModeKind::kVanilla:
      requires_variant(Variant::kVanilla);
      break;
  }

  const auto test_ids = data.folds.ids_in_fold(args.fold);
  const auto train_ids = data.folds.ids_outside_fold(args.fold);
  if (test_ids.empty()) {
    throw ConfigError("fold " + std::to_string(args.fold) + " is empty");
  }

  PredictionSet set{args.mode, args.fold, {}};
  for (std::int64_t id : test_ids) {
    const SampleRecord& sample = data.by_id(id);
    switch (kind) {
      case InferenceModeKind::kRepeat:
        set.records.push_back(infer_repeat(net, sample));
        break;
      case InferenceModeKind::kAnchorTrain:
        set.records.push_back(infer_anchored(
            net, sample, select_anchors(train_ids, args.anchors, args.seed, id),
            data));
        break;
      case InferenceModeKind::kAnchorTest:
        set.records.push_back(infer_anchored(
            net, sample, select_anchors(test_ids, args.anchors, args.seed, id),
            data));
        break;
      case InferenceModeKind::kMcDropout:
        set.records.push_back(
            infer_mc_dropout(net, sample, args.mc_passes, args.seed));
        break;
      case InferenceModeKind::kVanilla:
        set.records.push_back(infer_vanilla(net, sample));
        break;
    }
  }
  write_predictions(args.out, set);
  double mean = 0.0;
  for (const auto& r : set.records) mean += r.dice;
  std::cout << "inferred " << set.records.size() << " images, mode "
            << args.mode << ", mean dice "
            << mean / static_cast<double>(set.records.size()) << "\n";
  manifest.finished = timestamp_utc();
  manifest.write(args.out);
}

struct EvaluateArgs {
  std::vector<std::string> predictions;
  std::string data;
  std::string out;
  int overlay_k = 5;
};

void cmd_evaluate(const EvaluateArgs& args, RunManifest manifest) {
  std::vector<PredRow> rows;
  std::vector<std::filesystem::path> pred_dirs;
  for (const std::string& dir : args.predictions) {
    const auto batch = read_predictions(dir);
    rows.insert(rows.end(), batch.begin(), batch.end());
    pred_dirs.emplace_back(dir);
  }
  const EvaluationReport report = evaluate_rows(rows);
  std::filesystem::create_directories(args.out);
  write_report_csv(std::filesystem::path(args.out) / "report.csv", report);
  write_coverage_csv(std::filesystem::path(args.out) / "coverage.csv", report);
  write_ranking_csv(std::filesystem::path(args.out) / "ranking.csv", report);
  if (!args.data.empty() && !report.ranking_mode.empty()) {
    const Dataset data = load_dataset(args.data);
    write_ranking_overlays(std::filesystem::path(args.out) / "overlays", report,
                           data, pred_dirs, args.overlay_k);
  }
  for (const ModeSummary& s : report.summaries) {
    std::cout << s.mode << ": dice " << s.mean_dice << " +- " << s.std_dice;
    if (s.mean_pearson) std::cout << ", pearson " << *s.mean_pearson;
    std::cout << "\n";
  }
  manifest.finished = timestamp_utc();
  manifest.write(args.out);
}

struct CrossvalArgs {
  std::string data;
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  bool parallel = false;
};

void cmd_crossval(const CrossvalArgs& args, RunManifest manifest) {
  const Dataset data = load_dataset(args.data);
  std::map<std::string, std::string> kv;
  if (!args.config.empty()) {
    kv = read_kv_file(args.config);
    manifest.config_digest = digest_file(args.config);
  }
  CrossValConfig cfg;
  cfg.train = train_config_from_kv(kv, args.seed);
  cfg.model = model_config_from_kv(kv, data, Variant::kRelation);
  cfg.seed = args.seed;
  cfg.parallel_folds = args.parallel;
  cfg.anchor_count = kv_int(kv, "anchors", cfg.anchor_count);
  cfg.mc_passes = kv_int(kv, "mc_passes", cfg.mc_passes);
  cfg.overlay_k = kv_int(kv, "overlay_k", cfg.overlay_k);
  if (const auto it = kv.find("modes"); it != kv.end()) {
    cfg.modes.clear();
    for (const std::string& name : split_on(it->second, ',')) {
      cfg.modes.push_back(mode_from_name(name));
    }
  }
  const EvaluationReport report = cross_validate(data, cfg, args.out);
  for (const ModeSummary& s : report.summaries) {
    std::cout << s.mode << ": dice " << s.mean_dice << " +- " << s.std_dice;
    if (s.mean_pearson) std::cout << ", pearson " << *s.mean_pearson;
    std::cout << "\n";
  }
  manifest.finished = timestamp_utc();
  manifest.write(args.out);
}

int cmd_gradcheck(std::uint64_t seed) {
  const GradCheckResult result = run_gradient_checks(seed);
  std::printf("checked %lld values, max relative error %.3e, max absolute %.3e\n",
              static_cast<long long>(result.checked_values),
              result.max_rel_error, result.max_abs_error);
  if (!result.ok()) {
    for (const std::string& f : result.failures) {
      std::printf("FAIL %s\n", f.c_str());
    }
    return 1;
  }
  std::printf("gradient check passed\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"relation-head U-Net segmentation pipeline"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* sc_gen = app.add_subcommand("generate", "generate a synthetic dataset");
  sc_gen->add_option("--count", gen.count, "number of samples")->required();
  sc_gen->add_option("--size", gen.size, "image size as HxW (default 32x32)");
  sc_gen->add_option("--difficulty-config", gen.difficulty_config,
                     "key=value file with difficulty ranges");
  sc_gen->add_option("--seed", gen.seed, "rng seed")->required();
  sc_gen->add_option("--out", gen.out, "output directory")->required();
  sc_gen->add_option("--folds", gen.folds, "fold count (default 5)");

  TrainArgs train;
  auto* sc_train = app.add_subcommand("train", "train one variant on all folds but one");
  sc_train->add_option("--data", train.data, "dataset directory")->required();
  sc_train->add_option("--variant", train.variant,
                       "vanilla | relation | vanilla_dropout");
  sc_train->add_option("--config", train.config, "key=value training config");
  sc_train->add_option("--fold", train.fold, "held-out fold")->required();
  sc_train->add_option("--seed", train.seed, "rng seed")->required();
  sc_train->add_option("--out", train.out, "output directory")->required();

  InferArgs infer;
  auto* sc_infer = app.add_subcommand("infer", "run one inference mode on a held-out fold");
  sc_infer->add_option("--checkpoint", infer.checkpoint, "checkpoint file")->required();
  sc_infer->add_option("--data", infer.data, "dataset directory")->required();
  sc_infer->add_option("--fold", infer.fold, "held-out fold")->required();
  sc_infer->add_option("--mode", infer.mode,
                       "repeat | anchor_train | anchor_test | mc_dropout | vanilla");
  sc_infer->add_option("--anchors", infer.anchors, "anchor count (default 20)");
  sc_infer->add_option("--mc-passes", infer.mc_passes, "dropout passes (default 20)");
  sc_infer->add_option("--seed", infer.seed, "rng seed")->required();
  sc_infer->add_option("--out", infer.out, "output directory")->required();

  EvaluateArgs eval;
  auto* sc_eval = app.add_subcommand("evaluate", "merge prediction sets into report/coverage/ranking CSVs");
  sc_eval->add_option("--predictions", eval.predictions, "prediction directories")
      ->required()
      ->expected(-1);
  sc_eval->add_option("--data", eval.data, "dataset directory (enables overlays)");
  sc_eval->add_option("--out", eval.out, "output directory")->required();
  sc_eval->add_option("--overlay-k", eval.overlay_k, "overlays per end (default 5)");

  CrossvalArgs crossval;
  auto* sc_cv = app.add_subcommand("crossval", "full cross-validated pipeline");
  sc_cv->add_option("--data", crossval.data, "dataset directory")->required();
  sc_cv->add_option("--config", crossval.config, "key=value config");
  sc_cv->add_option("--seed", crossval.seed, "rng seed")->required();
  sc_cv->add_option("--out", crossval.out, "output directory")->required();
  sc_cv->add_flag("--parallel", crossval.parallel,
                  "run folds concurrently (RELSEG_THREADS caps workers)");

  std::uint64_t gradcheck_seed = 7;
  auto* sc_grad = app.add_subcommand("gradcheck", "finite-difference gradient oracle");
  sc_grad->add_option("--seed", gradcheck_seed, "rng seed (default 7)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  RunManifest manifest;
  manifest.command_line = join_args(argc, argv);
  manifest.started = timestamp_utc();

  try {
    if (sc_gen->parsed()) {
      manifest.seed = gen.seed;
      manifest.output_dir = gen.out;
      cmd_generate(gen, manifest);
    } else if (sc_train->parsed()) {
      manifest.seed = train.seed;
      manifest.output_dir = train.out;
      cmd_train(train, manifest);
    } else if (sc_infer->parsed()) {
      manifest.seed = infer.seed;
      manifest.output_dir = infer.out;
      cmd_infer(infer, manifest);
    } else if (sc_eval->parsed()) {
      manifest.output_dir = eval.out;
      cmd_evaluate(eval, manifest);
    } else if (sc_cv->parsed()) {
      manifest.seed = crossval.seed;
      manifest.output_dir = crossval.out;
      cmd_crossval(crossval, manifest);
    } else if (sc_grad->parsed()) {
      return cmd_gradcheck(gradcheck_seed);
    }
  } catch (const NumericError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
