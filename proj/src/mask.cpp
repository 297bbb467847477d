#include "relseg/mask.hpp"

#include <string>

#include "relseg/error.hpp"

namespace relseg {

namespace {

void check_same_dims(const BinaryMask& a, const BinaryMask& b,
                     const char* what) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw DimensionError(std::string(what) + ": mask dimensions differ (" +
                         std::to_string(a.height()) + "x" +
                         std::to_string(a.width()) + " vs " +
                         std::to_string(b.height()) + "x" +
                         std::to_string(b.width()) + ")");
  }
}

}  // namespace

BinaryMask::BinaryMask(int height, int width)
    : height_(height), width_(width) {
  if (height <= 0 || width <= 0) {
    throw DimensionError("mask dimensions must be positive");
  }
  bits_.assign(static_cast<std::size_t>(height) * width, 0);
}

std::int64_t BinaryMask::popcount() const {
  std::int64_t n = 0;
  for (std::uint8_t b : bits_) n += b;
  return n;
}

RelationPair make_relations(const BinaryMask& s1, const BinaryMask& s2) {
  check_same_dims(s1, s2, "make_relations");
  RelationPair pair{BinaryMask(s1.height(), s1.width()),
                    BinaryMask(s1.height(), s1.width())};
  auto a = s1.bits();
  auto b = s2.bits();
  auto p = pair.possible.bits();
  auto c = pair.consensus.bits();
  for (std::size_t i = 0; i < a.size(); ++i) {
    p[i] = a[i] | b[i];
    c[i] = a[i] & b[i];
  }
  return pair;
}

double dice(const BinaryMask& a, const BinaryMask& b) {
  check_same_dims(a, b, "dice");
  std::int64_t inter = 0, total = 0;
  auto da = a.bits();
  auto db = b.bits();
  for (std::size_t i = 0; i < da.size(); ++i) {
    inter += da[i] & db[i];
    total += da[i] + db[i];
  }
  if (total == 0) return 1.0;  // both empty: perfect agreement
  return 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

ConfidenceScore confidence(const RelationPair& pred) {
  return ConfidenceScore{dice(pred.possible, pred.consensus)};
}

BinaryMask binarize(std::span<const double> probs, int height, int width,
                    double threshold) {
  if (static_cast<std::int64_t>(probs.size()) !=
      static_cast<std::int64_t>(height) * width) {
    throw DimensionError("binarize: probability map size mismatch");
  }
  BinaryMask mask(height, width);
  auto bits = mask.bits();
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = probs[i];
    if (!(p >= 0.0 && p <= 1.0)) {
      throw ValidationError("binarize: probability " + std::to_string(p) +
                            " outside [0, 1]");
    }
    bits[i] = p > threshold ? 1 : 0;
  }
  return mask;
}

RelationPair aggregate_mc(std::span<const BinaryMask> masks) {
  if (masks.empty()) {
    throw UsageError("aggregate_mc requires at least one mask");
  }
  RelationPair pair{masks[0], masks[0]};
  for (std::size_t k = 1; k < masks.size(); ++k) {
    check_same_dims(masks[0], masks[k], "aggregate_mc");
    auto m = masks[k].bits();
    auto p = pair.possible.bits();
    auto c = pair.consensus.bits();
    for (std::size_t i = 0; i < m.size(); ++i) {
      p[i] |= m[i];
      c[i] &= m[i];
    }
  }
  return pair;
}

}  // namespace relseg
