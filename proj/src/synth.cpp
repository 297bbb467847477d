#include "relseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "relseg/csv.hpp"
#include "relseg/error.hpp"
#include "relseg/netpbm.hpp"

namespace relseg {

std::vector<std::int64_t> FoldSplit::ids_in_fold(int fold) const {
  std::vector<std::int64_t> ids;
  for (const auto& [id, f] : assignments) {
    if (f == fold) ids.push_back(id);
  }
  return ids;
}

std::vector<std::int64_t> FoldSplit::ids_outside_fold(int fold) const {
  std::vector<std::int64_t> ids;
  for (const auto& [id, f] : assignments) {
    if (f != fold) ids.push_back(id);
  }
  return ids;
}

const SampleRecord& Dataset::by_id(std::int64_t id) const {
  for (const SampleRecord& s : samples) {
    if (s.id == id) return s;
  }
  throw IoError("dataset has no sample with id " + std::to_string(id));
}

namespace {

void check_range(const Range& r, const char* name) {
  if (r.min > r.max) {
    throw ConfigError(std::string("difficulty range ") + name +
                      ": min exceeds max");
  }
}

// separable Gaussian blur with edge replication; sigma 0 is the identity
void gaussian_blur(std::vector<double>& img, int h, int w, double sigma) {
  if (sigma <= 0.0) return;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(radius) + 1);
  double norm = 0.0;
  for (int i = 0; i <= radius; ++i) {
    kernel[static_cast<std::size_t>(i)] =
        std::exp(-0.5 * (static_cast<double>(i) * i) / (sigma * sigma));
    norm += (i == 0 ? 1.0 : 2.0) * kernel[static_cast<std::size_t>(i)];
  }
  for (double& k : kernel) k /= norm;

  std::vector<double> tmp(img.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = kernel[0] * img[static_cast<std::size_t>(y) * w + x];
      for (int i = 1; i <= radius; ++i) {
        const int xl = std::max(0, x - i);
        const int xr = std::min(w - 1, x + i);
        acc += kernel[static_cast<std::size_t>(i)] *
               (img[static_cast<std::size_t>(y) * w + xl] +
                img[static_cast<std::size_t>(y) * w + xr]);
      }
      tmp[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = kernel[0] * tmp[static_cast<std::size_t>(y) * w + x];
      for (int i = 1; i <= radius; ++i) {
        const int yu = std::max(0, y - i);
        const int yd = std::min(h - 1, y + i);
        acc += kernel[static_cast<std::size_t>(i)] *
               (tmp[static_cast<std::size_t>(yu) * w + x] +
                tmp[static_cast<std::size_t>(yd) * w + x]);
      }
      img[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
}

constexpr double kBackground = 0.3;

SampleRecord generate_sample(std::int64_t id, int height, int width,
                             const DifficultyRanges& ranges,
                             std::uint64_t seed) {
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(id)));
  SampleRecord s;
  s.id = id;
  s.height = height;
  s.width = width;
  s.difficulty.target_radius =
      rng.uniform(ranges.target_radius.min, ranges.target_radius.max);
  s.difficulty.contrast = rng.uniform(ranges.contrast.min, ranges.contrast.max);
  s.difficulty.blur_sigma =
      rng.uniform(ranges.blur_sigma.min, ranges.blur_sigma.max);
  s.difficulty.noise_std =
      rng.uniform(ranges.noise_std.min, ranges.noise_std.max);

  const double a = s.difficulty.target_radius;        // major semi-axis
  const double b = a * rng.uniform(0.75, 1.0);        // minor semi-axis
  const double theta = rng.uniform(0.0, std::numbers::pi);
  const double margin = a + 2.0;
  const double cy = rng.uniform(margin, static_cast<double>(height) - margin);
  const double cx = rng.uniform(margin, static_cast<double>(width) - margin);

  s.mask = BinaryMask(height, width);
  const double cos_t = std::cos(theta), sin_t = std::sin(theta);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double dx = (static_cast<double>(x) + 0.5) - cx;
      const double dy = (static_cast<double>(y) + 0.5) - cy;
      const double u = (dx * cos_t + dy * sin_t) / a;
      const double v = (-dx * sin_t + dy * cos_t) / b;
      if (u * u + v * v <= 1.0) s.mask.set(y, x, true);
    }
  }

  s.image.assign(static_cast<std::size_t>(height) * width, kBackground);
  const double foreground = kBackground + s.difficulty.contrast;
  auto bits = s.mask.bits();
  for (std::size_t i = 0; i < s.image.size(); ++i) {
    if (bits[i]) s.image[i] = foreground;
  }
  gaussian_blur(s.image, height, width, s.difficulty.blur_sigma);
  if (s.difficulty.noise_std > 0.0) {
    for (double& v : s.image) v += s.difficulty.noise_std * rng.normal();
  }
  for (double& v : s.image) v = std::clamp(v, 0.0, 1.0);
  return s;
}

}  // namespace

std::vector<SampleRecord> generate_dataset(int count, int height, int width,
                                           const DifficultyRanges& ranges,
                                           std::uint64_t seed) {
  if (count < 1) throw ConfigError("generate_dataset: count must be >= 1");
  if (height < 4 || width < 4) {
    throw ConfigError("generate_dataset: image size too small");
  }
  check_range(ranges.target_radius, "target_radius");
  check_range(ranges.contrast, "contrast");
  check_range(ranges.blur_sigma, "blur_sigma");
  check_range(ranges.noise_std, "noise_std");
  if (ranges.target_radius.min < 1.0) {
    throw ConfigError("generate_dataset: target_radius must be >= 1 px");
  }
  if (ranges.contrast.min <= 0.0 || ranges.contrast.max > 1.0) {
    throw ConfigError("generate_dataset: contrast must lie in (0, 1]");
  }
  if (ranges.blur_sigma.min < 0.0 || ranges.noise_std.min < 0.0) {
    throw ConfigError("generate_dataset: blur/noise must be non-negative");
  }
  const double max_extent = ranges.target_radius.max + 2.0;
  if (2.0 * max_extent >= static_cast<double>(std::min(height, width))) {
    throw ConfigError(
        "generate_dataset: target_radius range does not fit the image size");
  }

  std::vector<SampleRecord> samples;
  samples.reserve(static_cast<std::size_t>(count));
  for (int id = 0; id < count; ++id) {
    samples.push_back(generate_sample(id, height, width, ranges, seed));
  }
  return samples;
}

FoldSplit split_folds(std::span<const std::int64_t> ids, int fold_count,
                      std::uint64_t seed) {
  if (fold_count < 2) throw ConfigError("split_folds: fold_count must be >= 2");
  if (ids.empty()) throw UsageError("split_folds: empty id list");
  if (static_cast<std::size_t>(fold_count) > ids.size()) {
    throw ConfigError("split_folds: more folds than ids");
  }
  std::vector<std::int64_t> shuffled(ids.begin(), ids.end());
  Rng rng(mix_seed(seed, 0x666f6c64));
  rng.shuffle(shuffled);
  FoldSplit split;
  split.fold_count = fold_count;
  for (std::size_t i = 0; i < shuffled.size(); ++i) {
    split.assignments[shuffled[i]] = static_cast<int>(i % fold_count);
  }
  return split;
}

PairBatch sample_pairs(const Dataset& data,
                       std::span<const std::int64_t> train_ids, int batch_size,
                       Rng& rng) {
  if (train_ids.empty()) throw UsageError("sample_pairs: empty training set");
  if (batch_size < 1) throw ConfigError("sample_pairs: batch_size must be >= 1");
  const int h = data.height, w = data.width;
  PairBatch batch;
  batch.x1 = Tensor::zeros({batch_size, 1, h, w});
  batch.x2 = Tensor::zeros({batch_size, 1, h, w});
  batch.s1 = Tensor::zeros({batch_size, 1, h, w});
  batch.s2 = Tensor::zeros({batch_size, 1, h, w});
  batch.rp = Tensor::zeros({batch_size, 1, h, w});
  batch.rc = Tensor::zeros({batch_size, 1, h, w});
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  for (int i = 0; i < batch_size; ++i) {
    const std::int64_t id1 = train_ids[rng.below(train_ids.size())];
    const std::int64_t id2 = train_ids[rng.below(train_ids.size())];
    batch.x1_ids.push_back(id1);
    batch.x2_ids.push_back(id2);
    const SampleRecord& a = data.by_id(id1);
    const SampleRecord& b = data.by_id(id2);
    const RelationPair rel = make_relations(a.mask, b.mask);
    auto am = a.mask.bits();
    auto bm = b.mask.bits();
    auto pm = rel.possible.bits();
    auto cm = rel.consensus.bits();
    for (std::int64_t k = 0; k < plane; ++k) {
      batch.x1.data()[i * plane + k] = a.image[static_cast<std::size_t>(k)];
      batch.x2.data()[i * plane + k] = b.image[static_cast<std::size_t>(k)];
      batch.s1.data()[i * plane + k] = am[static_cast<std::size_t>(k)];
      batch.s2.data()[i * plane + k] = bm[static_cast<std::size_t>(k)];
      batch.rp.data()[i * plane + k] = pm[static_cast<std::size_t>(k)];
      batch.rc.data()[i * plane + k] = cm[static_cast<std::size_t>(k)];
    }
  }
  return batch;
}

void save_dataset(const std::filesystem::path& dir,
                  const std::vector<SampleRecord>& samples,
                  const FoldSplit& folds) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.csv", std::ios::binary);
  if (!manifest) throw IoError((dir / "manifest.csv").string() + ": cannot open");
  csv::write_row(manifest, {"id", "target_radius", "contrast", "blur_sigma",
                            "noise_std", "fold"});
  for (const SampleRecord& s : samples) {
    const auto it = folds.assignments.find(s.id);
    const int fold = it == folds.assignments.end() ? 0 : it->second;
    csv::write_row(manifest, {std::to_string(s.id),
                              csv::format_exact(s.difficulty.target_radius),
                              csv::format_exact(s.difficulty.contrast),
                              csv::format_exact(s.difficulty.blur_sigma),
                              csv::format_exact(s.difficulty.noise_std),
                              std::to_string(fold)});
    write_pgm16(dir / (std::to_string(s.id) + ".pgm"), s.image, s.height,
                s.width);
    write_pbm(dir / (std::to_string(s.id) + ".pbm"), s.mask);
  }
  if (!manifest) throw IoError((dir / "manifest.csv").string() + ": write failed");
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.csv";
  std::ifstream manifest(manifest_path, std::ios::binary);
  if (!manifest) throw IoError(manifest_path.string() + ": cannot open");
  std::string line;
  if (!std::getline(manifest, line)) {
    throw IoError(manifest_path.string() + ": missing header");
  }
  const auto header = csv::parse_line(line);
  const std::vector<std::string> expected = {
      "id", "target_radius", "contrast", "blur_sigma", "noise_std", "fold"};
  if (header != expected) {
    throw IoError(manifest_path.string() + ": unexpected header");
  }

  Dataset data;
  int max_fold = -1;
  while (std::getline(manifest, line)) {
    if (line.empty() || line == "\r") continue;
    const auto fields = csv::parse_line(line);
    if (fields.size() != expected.size()) {
      throw IoError(manifest_path.string() + ": malformed row '" + line + "'");
    }
    SampleRecord s;
    s.id = csv::parse_int(fields[0]);
    s.difficulty.target_radius = csv::parse_double(fields[1]);
    s.difficulty.contrast = csv::parse_double(fields[2]);
    s.difficulty.blur_sigma = csv::parse_double(fields[3]);
    s.difficulty.noise_std = csv::parse_double(fields[4]);
    const int fold = static_cast<int>(csv::parse_int(fields[5]));

    const Pgm16 img = read_pgm16(dir / (std::to_string(s.id) + ".pgm"));
    s.height = img.height;
    s.width = img.width;
    s.image = img.values;
    s.mask = read_pbm(dir / (std::to_string(s.id) + ".pbm"));
    if (s.mask.height() != s.height || s.mask.width() != s.width) {
      throw IoError((dir / (std::to_string(s.id) + ".pbm")).string() +
                    ": mask dimensions do not match the image");
    }
    if (data.samples.empty()) {
      data.height = s.height;
      data.width = s.width;
    } else if (s.height != data.height || s.width != data.width) {
      throw IoError((dir / (std::to_string(s.id) + ".pgm")).string() +
                    ": sample size differs from the rest of the dataset");
    }
    if (data.folds.assignments.contains(s.id)) {
      throw IoError(manifest_path.string() + ": duplicate id " +
                    std::to_string(s.id));
    }
    data.folds.assignments[s.id] = fold;
    max_fold = std::max(max_fold, fold);
    data.samples.push_back(std::move(s));
  }
  data.folds.fold_count = max_fold + 1;
  return data;
}

Tensor image_tensor(const SampleRecord& sample) {
  return Tensor::from_data({1, 1, sample.height, sample.width}, sample.image);
}

Tensor mask_tensor(const BinaryMask& mask) {
  std::vector<double> data(static_cast<std::size_t>(mask.pixel_count()));
  auto bits = mask.bits();
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = bits[i];
  return Tensor::from_data({1, 1, mask.height(), mask.width()}, std::move(data));
}

}  // namespace relseg
