#include "relseg/inference.hpp"

#include <algorithm>
#include <fstream>

#include "relseg/csv.hpp"
#include "relseg/error.hpp"
#include "relseg/netpbm.hpp"

namespace relseg {

std::string mode_name(InferenceModeKind kind) {
  switch (kind) {
    case InferenceModeKind::kRepeat:
      return "repeat";
    case InferenceModeKind::kAnchorTrain:
      return "anchor_train";
    case InferenceModeKind::kAnchorTest:
      return "anchor_test";
    case InferenceModeKind::kMcDropout:
      return "mc_dropout";
    case InferenceModeKind::kVanilla:
      return "vanilla";
  }
  throw ConfigError("unknown inference mode");
}

InferenceModeKind mode_from_name(const std::string& name) {
  if (name == "repeat") return InferenceModeKind::kRepeat;
  if (name == "anchor_train") return InferenceModeKind::kAnchorTrain;
  if (name == "anchor_test") return InferenceModeKind::kAnchorTest;
  if (name == "mc_dropout") return InferenceModeKind::kMcDropout;
  if (name == "vanilla") return InferenceModeKind::kVanilla;
  throw ConfigError("unknown inference mode '" + name + "'");
}

namespace {

std::vector<double> probabilities(const Tensor& logits) {
  const Tensor p = sigmoid(nullptr, logits);
  return {p.data().begin(), p.data().end()};
}

BinaryMask binarize_probs(const std::vector<double>& probs, int h, int w) {
  return binarize(probs, h, w, 0.5);
}

}  // namespace

PredictionRecord infer_repeat(const UNet& net, const SampleRecord& sample) {
  if (net.config().variant != Variant::kRelation) {
    throw UsageError("infer_repeat requires a relation checkpoint");
  }
  const int h = sample.height, w = sample.width;
  const Tensor x = image_tensor(sample);
  const ModelOutputs out = net.forward_relation(nullptr, x, x);
  const auto p1 = probabilities(out.s1_logits);
  const auto p2 = probabilities(out.s2_logits);
  const auto pp = probabilities(out.rp_logits);
  const auto pc = probabilities(out.rc_logits);
  std::vector<double> avg(p1.size());
  for (std::size_t i = 0; i < avg.size(); ++i) avg[i] = 0.5 * (p1[i] + p2[i]);

  PredictionRecord rec;
  rec.image_id = sample.id;
  rec.s1_hat = binarize_probs(p1, h, w);
  rec.s2_hat = binarize_probs(p2, h, w);
  rec.rp_hat = binarize_probs(pp, h, w);
  rec.rc_hat = binarize_probs(pc, h, w);
  rec.s_avg = binarize_probs(avg, h, w);
  rec.has_confidence = true;
  rec.confidence = confidence({rec.rp_hat, rec.rc_hat}).value;
  rec.dice_s1 = dice(rec.s1_hat, sample.mask);
  rec.dice_s2 = dice(rec.s2_hat, sample.mask);
  rec.dice_savg = dice(rec.s_avg, sample.mask);
  rec.dice_rp = dice(rec.rp_hat, sample.mask);
  rec.dice_rc = dice(rec.rc_hat, sample.mask);
  rec.dice = rec.dice_savg;
  return rec;
}

PredictionRecord infer_anchored(const UNet& net, const SampleRecord& sample,
                                std::span<const std::int64_t> anchor_ids,
                                const Dataset& data) {
  if (net.config().variant != Variant::kRelation) {
    throw UsageError("infer_anchored requires a relation checkpoint");
  }
  if (anchor_ids.empty()) {
    throw UsageError("infer_anchored: empty anchor list");
  }
  PredictionRecord rec = infer_repeat(net, sample);

  const Tensor x = image_tensor(sample);
  std::vector<double> mean_p1(
      static_cast<std::size_t>(sample.height) * sample.width, 0.0);
  for (std::int64_t anchor : anchor_ids) {
    const Tensor xa = image_tensor(data.by_id(anchor));
    const ModelOutputs out = net.forward_relation(nullptr, x, xa);
    const auto p1 = probabilities(out.s1_logits);
    for (std::size_t i = 0; i < mean_p1.size(); ++i) mean_p1[i] += p1[i];
  }
  for (double& v : mean_p1) v /= static_cast<double>(anchor_ids.size());
  rec.s1_hat = binarize_probs(mean_p1, sample.height, sample.width);
  rec.dice_s1 = dice(rec.s1_hat, sample.mask);
  rec.dice = rec.dice_s1;  // anchored modes report the ensembled s1
  return rec;
}

PredictionRecord infer_mc_dropout(const UNet& net, const SampleRecord& sample,
                                  int passes, std::uint64_t seed) {
  if (net.config().variant != Variant::kVanillaDropout) {
    throw UsageError("infer_mc_dropout requires a vanilla_dropout checkpoint");
  }
  if (passes < 2) {
    throw UsageError("infer_mc_dropout: need at least two passes");
  }
  const int h = sample.height, w = sample.width;
  const Tensor x = image_tensor(sample);
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(sample.id)));

  std::vector<BinaryMask> masks;
  masks.reserve(static_cast<std::size_t>(passes));
  std::vector<double> mean_p(static_cast<std::size_t>(h) * w, 0.0);
  for (int k = 0; k < passes; ++k) {
    const auto p = probabilities(net.forward_dropout(nullptr, x, true, rng));
    for (std::size_t i = 0; i < mean_p.size(); ++i) mean_p[i] += p[i];
    masks.push_back(binarize_probs(p, h, w));
  }
  for (double& v : mean_p) v /= static_cast<double>(passes);

  const RelationPair agg = aggregate_mc(masks);
  PredictionRecord rec;
  rec.image_id = sample.id;
  rec.rp_hat = agg.possible;
  rec.rc_hat = agg.consensus;
  rec.s_avg = binarize_probs(mean_p, h, w);
  rec.has_confidence = true;
  rec.confidence = confidence(agg).value;
  rec.dice_savg = dice(rec.s_avg, sample.mask);
  rec.dice_rp = dice(rec.rp_hat, sample.mask);
  rec.dice_rc = dice(rec.rc_hat, sample.mask);
  rec.dice = rec.dice_savg;
  return rec;
}

PredictionRecord infer_vanilla(const UNet& net, const SampleRecord& sample) {
  if (net.config().variant != Variant::kVanilla) {
    throw UsageError("infer_vanilla requires a vanilla checkpoint");
  }
  const auto p = probabilities(net.forward_vanilla(nullptr, image_tensor(sample)));
  PredictionRecord rec;
  rec.image_id = sample.id;
  rec.s_avg = binarize_probs(p, sample.height, sample.width);
  rec.has_confidence = false;
  rec.dice_savg = dice(rec.s_avg, sample.mask);
  rec.dice = rec.dice_savg;
  return rec;
}

std::vector<std::int64_t> select_anchors(std::span<const std::int64_t> pool,
                                         int count, std::uint64_t seed,
                                         std::int64_t image_id) {
  if (count < 1) throw ConfigError("select_anchors: count must be >= 1");
  if (static_cast<std::size_t>(count) > pool.size()) {
    throw ConfigError("select_anchors: anchor count " + std::to_string(count) +
                      " exceeds pool of " + std::to_string(pool.size()));
  }
  std::vector<std::int64_t> shuffled(pool.begin(), pool.end());
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(image_id) ^ 0xa6c402));
  rng.shuffle(shuffled);
  shuffled.resize(static_cast<std::size_t>(count));
  return shuffled;
}

void write_predictions(const std::filesystem::path& dir,
                       const PredictionSet& set) {
  std::filesystem::create_directories(dir);
  std::ofstream meta(dir / "meta.txt", std::ios::binary);
  if (!meta) throw IoError((dir / "meta.txt").string() + ": cannot open");
  meta << "mode=" << set.mode << "\n" << "fold=" << set.fold << "\n";

  std::ofstream out(dir / "predictions.csv", std::ios::binary);
  if (!out) throw IoError((dir / "predictions.csv").string() + ": cannot open");
  csv::write_row(out, {"id", "mode", "dice", "confidence"});

  std::vector<const PredictionRecord*> ordered;
  ordered.reserve(set.records.size());
  for (const auto& r : set.records) ordered.push_back(&r);
  std::sort(ordered.begin(), ordered.end(),
            [](const auto* a, const auto* b) { return a->image_id < b->image_id; });

  const bool per_head = set.mode == "repeat";
  for (const PredictionRecord* r : ordered) {
    const std::string id = std::to_string(r->image_id);
    const std::string conf =
        r->has_confidence ? csv::format_fixed(r->confidence) : "";
    csv::write_row(out, {id, set.mode, csv::format_fixed(r->dice), conf});
    if (per_head) {
      csv::write_row(out, {id, "repeat_s1", csv::format_fixed(r->dice_s1), conf});
      csv::write_row(out, {id, "repeat_s2", csv::format_fixed(r->dice_s2), conf});
      csv::write_row(out, {id, "repeat_rp", csv::format_fixed(r->dice_rp), conf});
      csv::write_row(out, {id, "repeat_rc", csv::format_fixed(r->dice_rc), conf});
    }

    if (r->s1_hat.pixel_count() > 0) {
      write_pbm(dir / (id + "_s1.pbm"), r->s1_hat);
    }
    if (r->rp_hat.pixel_count() > 0) {
      write_pbm(dir / (id + "_rp.pbm"), r->rp_hat);
      write_pbm(dir / (id + "_rc.pbm"), r->rc_hat);
    }
    write_pbm(dir / (id + "_savg.pbm"), r->s_avg);
  }
  if (!out) throw IoError((dir / "predictions.csv").string() + ": write failed");
}

std::vector<PredRow> read_predictions(const std::filesystem::path& dir) {
  int fold = 0;
  {
    std::ifstream meta(dir / "meta.txt", std::ios::binary);
    if (!meta) throw IoError((dir / "meta.txt").string() + ": cannot open");
    std::string line;
    while (std::getline(meta, line)) {
      if (line.starts_with("fold=")) fold = std::stoi(line.substr(5));
    }
  }
  const auto csv_path = dir / "predictions.csv";
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw IoError(csv_path.string() + ": cannot open");
  std::string line;
  if (!std::getline(in, line)) throw IoError(csv_path.string() + ": empty file");
  if (csv::parse_line(line) !=
      std::vector<std::string>{"id", "mode", "dice", "confidence"}) {
    throw IoError(csv_path.string() + ": unexpected header");
  }
  std::vector<PredRow> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto fields = csv::parse_line(line);
    if (fields.size() != 4) {
      throw IoError(csv_path.string() + ": malformed row '" + line + "'");
    }
    PredRow row;
    row.id = csv::parse_int(fields[0]);
    row.mode = fields[1];
    row.dice = csv::parse_double(fields[2]);
    row.has_confidence = !fields[3].empty();
    if (row.has_confidence) row.confidence = csv::parse_double(fields[3]);
    row.fold = fold;
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace relseg
