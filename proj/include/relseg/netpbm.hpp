#pragma once

#include <filesystem>
#include <vector>

#include "relseg/mask.hpp"

namespace relseg {

// Binary PBM (P4). Mask bit 1 maps to PBM black.
void write_pbm(const std::filesystem::path& path, const BinaryMask& mask);
BinaryMask read_pbm(const std::filesystem::path& path);

// 16-bit binary PGM (P5, maxval 65535, big-endian samples).
// Values are probabilities/intensities in [0,1]; sample = round(v * 65535).
void write_pgm16(const std::filesystem::path& path,
                 const std::vector<double>& values, int height, int width);
struct Pgm16 {
  int height = 0;
  int width = 0;
  std::vector<double> values;  // in [0,1]
};
Pgm16 read_pgm16(const std::filesystem::path& path);

}  // namespace relseg
