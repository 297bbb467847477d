#include "relseg/netpbm.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>

#include "relseg/error.hpp"

namespace relseg {

namespace {

[[noreturn]] void io_fail(const std::filesystem::path& path,
                          const std::string& why) {
  throw IoError(path.string() + ": " + why);
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) io_fail(path, "cannot open for writing");
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_fail(path, "cannot open for reading");
  return in;
}

// reads one whitespace-delimited token, skipping '#' comment lines
std::string next_token(std::istream& in) {
  std::string tok;
  int c = in.get();
  while (c != EOF && (std::isspace(c) || c == '#')) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    }
    c = in.get();
  }
  while (c != EOF && !std::isspace(c)) {
    tok.push_back(static_cast<char>(c));
    c = in.get();
  }
  return tok;
}

int parse_dim(std::istream& in, const std::filesystem::path& path) {
  const std::string tok = next_token(in);
  try {
    const int v = std::stoi(tok);
    if (v <= 0) io_fail(path, "non-positive dimension");
    return v;
  } catch (const std::logic_error&) {
    io_fail(path, "malformed header token '" + tok + "'");
  }
}

}  // namespace

void write_pbm(const std::filesystem::path& path, const BinaryMask& mask) {
  auto out = open_out(path);
  out << "P4\n" << mask.width() << " " << mask.height() << "\n";
  const int row_bytes = (mask.width() + 7) / 8;
  std::vector<std::uint8_t> row(static_cast<std::size_t>(row_bytes));
  for (int y = 0; y < mask.height(); ++y) {
    std::fill(row.begin(), row.end(), 0);
    for (int x = 0; x < mask.width(); ++x) {
      if (mask.at(y, x)) row[static_cast<std::size_t>(x / 8)] |= 0x80u >> (x % 8);
    }
    out.write(reinterpret_cast<const char*>(row.data()), row_bytes);
  }
  if (!out) io_fail(path, "write failed");
}

BinaryMask read_pbm(const std::filesystem::path& path) {
  auto in = open_in(path);
  if (next_token(in) != "P4") io_fail(path, "not a binary PBM (P4) file");
  const int width = parse_dim(in, path);
  const int height = parse_dim(in, path);
  // single whitespace byte separates header from raster; next_token already
  // consumed it as the delimiter of the height token
  BinaryMask mask(height, width);
  const int row_bytes = (width + 7) / 8;
  std::vector<char> row(static_cast<std::size_t>(row_bytes));
  for (int y = 0; y < height; ++y) {
    in.read(row.data(), row_bytes);
    if (in.gcount() != row_bytes) io_fail(path, "truncated raster");
    for (int x = 0; x < width; ++x) {
      const auto byte = static_cast<std::uint8_t>(row[static_cast<std::size_t>(x / 8)]);
      mask.set(y, x, (byte >> (7 - x % 8)) & 1u);
    }
  }
  return mask;
}

void write_pgm16(const std::filesystem::path& path,
                 const std::vector<double>& values, int height, int width) {
  if (static_cast<std::int64_t>(values.size()) !=
      static_cast<std::int64_t>(height) * width) {
    throw DimensionError("write_pgm16: value count does not match dimensions");
  }
  auto out = open_out(path);
  out << "P5\n" << width << " " << height << "\n65535\n";
  std::vector<std::uint8_t> raster(values.size() * 2);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = values[i];
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ValidationError("write_pgm16: value outside [0, 1]");
    }
    const auto q = static_cast<std::uint16_t>(std::lround(v * 65535.0));
    raster[2 * i] = static_cast<std::uint8_t>(q >> 8);  // big-endian samples
    raster[2 * i + 1] = static_cast<std::uint8_t>(q & 0xff);
  }
  out.write(reinterpret_cast<const char*>(raster.data()),
            static_cast<std::streamsize>(raster.size()));
  if (!out) io_fail(path, "write failed");
}

Pgm16 read_pgm16(const std::filesystem::path& path) {
  auto in = open_in(path);
  if (next_token(in) != "P5") io_fail(path, "not a binary PGM (P5) file");
  Pgm16 img;
  img.width = parse_dim(in, path);
  img.height = parse_dim(in, path);
  const int maxval = parse_dim(in, path);
  if (maxval != 65535) io_fail(path, "expected 16-bit PGM (maxval 65535)");
  const std::size_t count =
      static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height);
  std::vector<char> raster(count * 2);
  in.read(raster.data(), static_cast<std::streamsize>(raster.size()));
  if (in.gcount() != static_cast<std::streamsize>(raster.size())) {
    io_fail(path, "truncated raster");
  }
  img.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto hi = static_cast<std::uint8_t>(raster[2 * i]);
    const auto lo = static_cast<std::uint8_t>(raster[2 * i + 1]);
    img.values[i] = static_cast<double>((hi << 8) | lo) / 65535.0;
  }
  return img;
}

}  // namespace relseg
