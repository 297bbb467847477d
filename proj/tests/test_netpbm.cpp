#include <cmath>

#include "doctest.h"
#include "relseg/error.hpp"
#include "relseg/netpbm.hpp"
#include "relseg/rng.hpp"
#include "test_util.hpp"

using namespace relseg;
using relseg::test::TempDir;

TEST_SUITE_BEGIN("netpbm");

TEST_CASE("pbm round-trip is bit-exact for random masks") {
  TempDir tmp("pbm");
  Rng rng(13);
  // widths straddling byte boundaries
  for (int w : {1, 7, 8, 9, 17, 32}) {
    for (int h : {1, 3, 8}) {
      BinaryMask m(h, w);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) m.set(y, x, rng.uniform() < 0.5);
      }
      const auto path = tmp.path / "mask.pbm";
      write_pbm(path, m);
      CHECK(read_pbm(path) == m);
    }
  }
}

TEST_CASE("pgm16 round-trip error stays within one quantization step") {
  TempDir tmp("pgm");
  Rng rng(14);
  std::vector<double> img(32 * 32);
  for (double& v : img) v = rng.uniform();
  const auto path = tmp.path / "img.pgm";
  write_pgm16(path, img, 32, 32);
  const Pgm16 back = read_pgm16(path);
  CHECK(back.height == 32);
  CHECK(back.width == 32);
  double max_err = 0.0;
  for (std::size_t i = 0; i < img.size(); ++i) {
    max_err = std::max(max_err, std::abs(back.values[i] - img[i]));
  }
  CHECK(max_err <= 0.5 / 65535.0 + 1e-12);

  // a second write of the re-read image is a fixed point
  write_pgm16(tmp.path / "img2.pgm", back.values, 32, 32);
  const Pgm16 twice = read_pgm16(tmp.path / "img2.pgm");
  CHECK(twice.values == back.values);
}

TEST_CASE("readers report the offending path") {
  TempDir tmp("badfiles");
  CHECK_THROWS_WITH_AS(read_pbm(tmp.path / "missing.pbm"),
                       doctest::Contains("missing.pbm"), IoError);

  {
    std::ofstream out(tmp.path / "trunc.pgm", std::ios::binary);
    out << "P5\n32 32\n65535\nxx";
  }
  CHECK_THROWS_AS(read_pgm16(tmp.path / "trunc.pgm"), IoError);

  {
    std::ofstream out(tmp.path / "not16.pgm", std::ios::binary);
    out << "P5\n2 2\n255\n" << std::string(4, '\0');
  }
  CHECK_THROWS_AS(read_pgm16(tmp.path / "not16.pgm"), IoError);
}

TEST_SUITE_END();
