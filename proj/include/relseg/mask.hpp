#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace relseg {

// H x W boolean segmentation map.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int height, int width);

  int height() const { return height_; }
  int width() const { return width_; }
  std::int64_t pixel_count() const {
    return static_cast<std::int64_t>(height_) * width_;
  }

  bool at(int y, int x) const {
    return bits_[static_cast<std::size_t>(y) * width_ + x] != 0;
  }
  void set(int y, int x, bool v) {
    bits_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0;
  }

  std::int64_t popcount() const;

  std::span<const std::uint8_t> bits() const { return bits_; }
  std::span<std::uint8_t> bits() { return bits_; }

  bool operator==(const BinaryMask&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> bits_;  // row-major, 0/1
};

// Possible (union) and Consensus (intersection) of two segmentation maps.
// For ground-truth pairs consensus is a subset of possible by construction;
// independently predicted pairs carry no such guarantee.
struct RelationPair {
  BinaryMask possible;
  BinaryMask consensus;
};

struct ConfidenceScore {
  double value = 0.0;  // in [0, 1]
};

RelationPair make_relations(const BinaryMask& s1, const BinaryMask& s2);

// 2|a n b| / (|a| + |b|); both masks empty yields 1.0
double dice(const BinaryMask& a, const BinaryMask& b);

// consistency between the predicted Possible and Consensus maps
ConfidenceScore confidence(const RelationPair& pred);

// bit set iff probability strictly exceeds the threshold
BinaryMask binarize(std::span<const double> probs, int height, int width,
                    double threshold = 0.5);

// n-ary union / intersection over one or more masks
RelationPair aggregate_mc(std::span<const BinaryMask> masks);

}  // namespace relseg
