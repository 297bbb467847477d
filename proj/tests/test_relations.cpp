#include <set>

#include "doctest.h"
#include "relseg/error.hpp"
#include "relseg/mask.hpp"
#include "relseg/rng.hpp"

using namespace relseg;

namespace {

BinaryMask mask_from_bits(int h, int w, std::uint32_t bits) {
  BinaryMask m(h, w);
  for (int i = 0; i < h * w; ++i) {
    if (bits & (1u << i)) m.set(i / w, i % w, true);
  }
  return m;
}

// independent oracle: masks as index sets, relations as set algebra
std::set<int> to_set(const BinaryMask& m) {
  std::set<int> s;
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      if (m.at(y, x)) s.insert(y * m.width() + x);
    }
  }
  return s;
}

double set_dice(const std::set<int>& a, const std::set<int>& b) {
  if (a.empty() && b.empty()) return 1.0;
  int inter = 0;
  for (int v : a) inter += b.count(v);
  return 2.0 * inter / static_cast<double>(a.size() + b.size());
}

}  // namespace

TEST_SUITE_BEGIN("relations");

TEST_CASE("make_relations: reflexive, disjoint and nested cases") {
  const BinaryMask m = mask_from_bits(3, 3, 0b010111010);
  const RelationPair reflexive = make_relations(m, m);
  CHECK(reflexive.possible == m);
  CHECK(reflexive.consensus == m);

  const BinaryMask a = mask_from_bits(3, 3, 0b000000011);
  const BinaryMask b = mask_from_bits(3, 3, 0b110000000);
  const RelationPair disjoint = make_relations(a, b);
  CHECK(disjoint.consensus.popcount() == 0);
  CHECK(disjoint.possible.popcount() == 4);

  const BinaryMask inner = mask_from_bits(3, 3, 0b000000011);
  const BinaryMask outer = mask_from_bits(3, 3, 0b000001111);
  const RelationPair nested = make_relations(inner, outer);
  CHECK(nested.possible == outer);
  CHECK(nested.consensus == inner);

  CHECK_THROWS_AS(make_relations(m, BinaryMask(2, 3)), DimensionError);
}

TEST_CASE("dice examples") {
  const BinaryMask m = mask_from_bits(3, 3, 0b111000001);
  CHECK(dice(m, m) == doctest::Approx(1.0).epsilon(0.0));

  // |a| = 4, |b| = 4, overlap 2
  const BinaryMask a = mask_from_bits(3, 3, 0b000001111);
  const BinaryMask b = mask_from_bits(3, 3, 0b001111000);
  CHECK(dice(a, b) == doctest::Approx(0.5).epsilon(0.0));

  const BinaryMask empty(3, 3);
  CHECK(dice(empty, empty) == doctest::Approx(1.0).epsilon(0.0));
}

TEST_CASE("confidence examples") {
  const BinaryMask m = mask_from_bits(3, 3, 0b000011110);
  CHECK(confidence({m, m}).value == doctest::Approx(1.0).epsilon(0.0));

  const BinaryMask empty(3, 3);
  CHECK(confidence({m, empty}).value == doctest::Approx(0.0).epsilon(0.0));

  // |possible| = 6 containing |consensus| = 4: C = 8/10
  const BinaryMask outer = mask_from_bits(3, 3, 0b000111111);
  const BinaryMask inner = mask_from_bits(3, 3, 0b000001111);
  CHECK(confidence({outer, inner}).value == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("binarize: strict threshold, boundary cases, validation") {
  const std::vector<double> half(4, 0.5);
  CHECK(binarize(half, 2, 2, 0.5).popcount() == 0);

  const std::vector<double> full(4, 1.0);
  CHECK(binarize(full, 2, 2, 0.5).popcount() == 4);

  const std::vector<double> pair = {0.4, 0.6};
  const BinaryMask m = binarize(pair, 1, 2, 0.5);
  CHECK_FALSE(m.at(0, 0));
  CHECK(m.at(0, 1));

  const std::vector<double> bad = {0.4, 1.2};
  CHECK_THROWS_AS(binarize(bad, 1, 2, 0.5), ValidationError);
}

TEST_CASE("aggregate_mc: unary, binary and three-mask cases") {
  const BinaryMask a = mask_from_bits(3, 3, 0b000000001);  // {p}
  const BinaryMask ab = mask_from_bits(3, 3, 0b000000011); // {p,q}
  const BinaryMask ac = mask_from_bits(3, 3, 0b000000101); // {p,r}

  const std::vector<BinaryMask> one = {a};
  const RelationPair unary = aggregate_mc(one);
  CHECK(unary.possible == a);
  CHECK(unary.consensus == a);

  const std::vector<BinaryMask> two = {ab, ac};
  const RelationPair binary = aggregate_mc(two);
  const RelationPair direct = make_relations(ab, ac);
  CHECK(binary.possible == direct.possible);
  CHECK(binary.consensus == direct.consensus);

  const std::vector<BinaryMask> three = {a, ab, ac};
  const RelationPair triple = aggregate_mc(three);
  CHECK(triple.consensus == a);
  CHECK(triple.possible == mask_from_bits(3, 3, 0b000000111));

  const std::vector<BinaryMask> none;
  CHECK_THROWS_AS(aggregate_mc(none), UsageError);
}

TEST_CASE("aggregate_mc is order- and duplicate-invariant") {
  Rng rng(21);
  for (int round = 0; round < 50; ++round) {
    std::vector<BinaryMask> masks;
    for (int k = 0; k < 4; ++k) {
      masks.push_back(
          mask_from_bits(3, 3, static_cast<std::uint32_t>(rng.below(512))));
    }
    const RelationPair base = aggregate_mc(masks);

    std::vector<BinaryMask> shuffled = masks;
    rng.shuffle(shuffled);
    shuffled.push_back(shuffled[rng.below(shuffled.size())]);  // duplicate
    const RelationPair again = aggregate_mc(shuffled);
    CHECK(base.possible == again.possible);
    CHECK(base.consensus == again.consensus);
  }
}

TEST_CASE("exhaustive 2x2 brute force against the set oracle") {
  // the full 3x3 sweep (2^9 x 2^9 pairs) runs in the acceptance suite; the
  // 2x2 grid is exhaustive here and catches the same class of defects
  for (std::uint32_t i = 0; i < 16; ++i) {
    for (std::uint32_t j = 0; j < 16; ++j) {
      const BinaryMask a = mask_from_bits(2, 2, i);
      const BinaryMask b = mask_from_bits(2, 2, j);
      const auto sa = to_set(a);
      const auto sb = to_set(b);

      const RelationPair rel = make_relations(a, b);
      std::set<int> u = sa, n;
      u.insert(sb.begin(), sb.end());
      for (int v : sa) {
        if (sb.count(v)) n.insert(v);
      }
      CHECK(to_set(rel.possible) == u);
      CHECK(to_set(rel.consensus) == n);
      CHECK(dice(a, b) == doctest::Approx(set_dice(sa, sb)).epsilon(1e-15));
      CHECK(confidence(rel).value ==
            doctest::Approx(set_dice(u, n)).epsilon(1e-15));
      CHECK(dice(a, b) == dice(b, a));
    }
  }
}

TEST_CASE("reflexivity holds for every 3x3 mask") {
  for (std::uint32_t bits = 0; bits < 512; ++bits) {
    const BinaryMask m = mask_from_bits(3, 3, bits);
    const RelationPair rel = make_relations(m, m);
    CHECK(rel.possible == m);
    CHECK(rel.consensus == m);
  }
}

TEST_CASE("relation containment properties on random masks") {
  Rng rng(77);
  for (int round = 0; round < 200; ++round) {
    const BinaryMask a =
        mask_from_bits(3, 3, static_cast<std::uint32_t>(rng.below(512)));
    const BinaryMask b =
        mask_from_bits(3, 3, static_cast<std::uint32_t>(rng.below(512)));
    const RelationPair ab = make_relations(a, b);
    const RelationPair ba = make_relations(b, a);
    CHECK(ab.possible == ba.possible);
    CHECK(ab.consensus == ba.consensus);
    for (int y = 0; y < 3; ++y) {
      for (int x = 0; x < 3; ++x) {
        CHECK((ab.consensus.at(y, x) ? 1 : 0) <= (a.at(y, x) ? 1 : 0));
        CHECK((a.at(y, x) ? 1 : 0) <= (ab.possible.at(y, x) ? 1 : 0));
      }
    }
    const double d = dice(a, b);
    CHECK(d >= 0.0);
    CHECK(d <= 1.0);
    if (d == 1.0) CHECK(a == b);
  }
}

TEST_SUITE_END();
