#include <cmath>

#include "doctest.h"
#include "relseg/error.hpp"
#include "relseg/rng.hpp"
#include "relseg/unet.hpp"

using namespace relseg;

namespace {

ModelConfig small_relation_config() {
  ModelConfig c;
  c.in_channels_per_image = 1;
  c.base_channels = 4;
  c.depth = 2;
  c.input_h = 8;
  c.input_w = 8;
  c.variant = Variant::kRelation;
  return c;
}

Tensor random_image(int h, int w, Rng& rng) {
  Tensor t = Tensor::zeros({1, 1, h, w});
  for (double& v : t.data()) v = rng.uniform();
  return t;
}

}  // namespace

TEST_SUITE_BEGIN("unet");

TEST_CASE("relation variant concatenates the two inputs") {
  const UNet net(small_relation_config(), 1);
  const auto params = net.named_parameters();
  CHECK(params.front().first == "enc0.conv1.weight");
  CHECK(params.front().second.dim(1) == 2);  // C=1 per image, two images
}

TEST_CASE("vanilla variant has exactly one head") {
  ModelConfig c = small_relation_config();
  c.variant = Variant::kVanilla;
  const UNet net(c, 1);
  int heads = 0;
  for (const auto& [name, t] : net.named_parameters()) {
    if (name.starts_with("head")) ++heads;
  }
  CHECK(heads == 2);  // weight + bias of a single head
  CHECK(net.named_parameters().front().second.dim(1) == 1);
}

TEST_CASE("parameter count matches an independent layer enumeration") {
  ModelConfig c;
  c.in_channels_per_image = 1;
  c.base_channels = 8;
  c.depth = 3;
  c.input_h = 32;
  c.input_w = 32;
  c.variant = Variant::kRelation;
  const UNet net(c, 3);

  // layer list written out by hand: {cout, cin, k}
  struct L {
    int cout, cin, k;
  };
  const std::vector<L> layers = {
      {8, 2, 3},   {8, 8, 3},                // enc0 (channel sequence 8,
      {16, 8, 3},  {16, 16, 3},              //       16,
      {32, 16, 3}, {32, 32, 3},              //       32)
      {64, 32, 3}, {64, 64, 3},              // bottleneck
      {32, 64, 3}, {32, 64, 3}, {32, 32, 3}, // dec2: up, post-concat block
      {16, 32, 3}, {16, 32, 3}, {16, 16, 3}, // dec1
      {8, 16, 3},  {8, 16, 3},  {8, 8, 3},   // dec0
      {1, 8, 1},   {1, 8, 1},   {1, 8, 1},   {1, 8, 1},  // four 1x1 heads
  };
  std::int64_t expected = 0;
  for (const L& l : layers) {
    expected += static_cast<std::int64_t>(l.cout) * l.cin * l.k * l.k + l.cout;
  }
  CHECK(net.parameter_count() == expected);
}

TEST_CASE("input size must divide by 2^depth") {
  ModelConfig c = small_relation_config();
  c.input_h = 12;  // 12 % 4 == 0, fine
  c.input_w = 10;  // 10 % 4 != 0
  CHECK_THROWS_AS(UNet(c, 1), ConfigError);
}

TEST_CASE("seeded builds are bit-identical and distinct seeds differ") {
  const ModelConfig c = small_relation_config();
  const UNet a(c, 99), b(c, 99), other(c, 100);
  const auto pa = a.named_parameters();
  const auto pb = b.named_parameters();
  const auto po = other.named_parameters();
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].first == pb[i].first);
    const auto da = pa[i].second.data();
    const auto db = pb[i].second.data();
    for (std::size_t k = 0; k < da.size(); ++k) {
      CHECK(da[k] == db[k]);
      any_diff = any_diff || da[k] != po[i].second.data()[k];
    }
  }
  CHECK(any_diff);
}

TEST_CASE("repeated input produces valid but non-identical head logits") {
  const UNet net(small_relation_config(), 5);
  Rng rng(17);
  const Tensor x = random_image(8, 8, rng);
  const ModelOutputs out = net.forward_relation(nullptr, x, x);
  CHECK(out.s1_logits.shape() == std::vector<int>{1, 1, 8, 8});
  bool differ = false;
  for (std::size_t i = 0; i < out.s1_logits.data().size(); ++i) {
    CHECK(std::isfinite(out.s1_logits.data()[i]));
    differ = differ || out.s1_logits.data()[i] != out.s2_logits.data()[i];
  }
  CHECK(differ);  // independently initialized heads
}

TEST_CASE("batched forward equals per-item forward bit for bit") {
  const UNet net(small_relation_config(), 5);
  Rng rng(18);
  const Tensor x1a = random_image(8, 8, rng);
  const Tensor x2a = random_image(8, 8, rng);
  const Tensor x1b = random_image(8, 8, rng);
  const Tensor x2b = random_image(8, 8, rng);

  Tensor x1 = Tensor::zeros({2, 1, 8, 8});
  Tensor x2 = Tensor::zeros({2, 1, 8, 8});
  std::copy(x1a.data().begin(), x1a.data().end(), x1.data().begin());
  std::copy(x1b.data().begin(), x1b.data().end(), x1.data().begin() + 64);
  std::copy(x2a.data().begin(), x2a.data().end(), x2.data().begin());
  std::copy(x2b.data().begin(), x2b.data().end(), x2.data().begin() + 64);

  const ModelOutputs batched = net.forward_relation(nullptr, x1, x2);
  const ModelOutputs first = net.forward_relation(nullptr, x1a, x2a);
  const ModelOutputs second = net.forward_relation(nullptr, x1b, x2b);
  for (int i = 0; i < 64; ++i) {
    CHECK(batched.s1_logits.data()[i] == first.s1_logits.data()[i]);
    CHECK(batched.s1_logits.data()[64 + i] == second.s1_logits.data()[i]);
    CHECK(batched.rc_logits.data()[i] == first.rc_logits.data()[i]);
    CHECK(batched.rc_logits.data()[64 + i] == second.rc_logits.data()[i]);
  }
}

TEST_CASE("zeroing one head changes only that head") {
  UNet net(small_relation_config(), 6);
  Rng rng(19);
  const Tensor x = random_image(8, 8, rng);
  const ModelOutputs before = net.forward_relation(nullptr, x, x);

  for (auto& [name, t] : net.named_parameters()) {
    if (name.starts_with("head_s2")) {
      for (double& v : t.data()) v = 0.0;
    }
  }
  const ModelOutputs after = net.forward_relation(nullptr, x, x);
  for (std::size_t i = 0; i < before.s1_logits.data().size(); ++i) {
    CHECK(after.s1_logits.data()[i] == before.s1_logits.data()[i]);
    CHECK(after.rp_logits.data()[i] == before.rp_logits.data()[i]);
    CHECK(after.rc_logits.data()[i] == before.rc_logits.data()[i]);
    CHECK(after.s2_logits.data()[i] == 0.0);  // zero weight and bias
  }
}

TEST_CASE("output spatial size equals input size for every variant") {
  Rng rng(20);
  for (Variant v :
       {Variant::kVanilla, Variant::kRelation, Variant::kVanillaDropout}) {
    ModelConfig c = small_relation_config();
    c.variant = v;
    c.input_h = 16;
    c.input_w = 8;
    const UNet net(c, 2);
    const Tensor x = Tensor::zeros({1, 1, 16, 8});
    Tensor logits;
    Rng drop_rng(1);
    switch (v) {
      case Variant::kVanilla:
        logits = net.forward_vanilla(nullptr, x);
        break;
      case Variant::kRelation:
        logits = net.forward_relation(nullptr, x, x).rp_logits;
        break;
      case Variant::kVanillaDropout:
        logits = net.forward_dropout(nullptr, x, true, drop_rng);
        break;
    }
    CHECK(logits.shape() == std::vector<int>{1, 1, 16, 8});
  }
}

TEST_CASE("wrong-variant forwards are rejected") {
  const UNet net(small_relation_config(), 1);
  const Tensor x = Tensor::zeros({1, 1, 8, 8});
  Rng rng(1);
  CHECK_THROWS_AS(net.forward_vanilla(nullptr, x), UsageError);
  CHECK_THROWS_AS(net.forward_dropout(nullptr, x, false, rng), UsageError);
}

TEST_CASE("dropout rate zero makes sampling a no-op") {
  ModelConfig c = small_relation_config();
  c.variant = Variant::kVanillaDropout;
  c.dropout_rate = 0.0;
  const UNet net(c, 7);
  Rng rng(23);
  const Tensor x = random_image(8, 8, rng);
  Rng drop_rng(4);
  const Tensor sampled = net.forward_dropout(nullptr, x, true, drop_rng);
  const Tensor plain = net.forward_dropout(nullptr, x, false, drop_rng);
  for (std::size_t i = 0; i < sampled.data().size(); ++i) {
    CHECK(sampled.data()[i] == plain.data()[i]);
  }
}

TEST_CASE("deterministic eval-mode forward") {
  ModelConfig c = small_relation_config();
  c.variant = Variant::kVanillaDropout;
  c.dropout_rate = 0.5;
  const UNet net(c, 8);
  Rng rng(24);
  const Tensor x = random_image(8, 8, rng);
  Rng r1(1), r2(2);
  const Tensor a = net.forward_dropout(nullptr, x, false, r1);
  const Tensor b = net.forward_dropout(nullptr, x, false, r2);
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    CHECK(a.data()[i] == b.data()[i]);
  }
}

TEST_CASE("inverted dropout preserves the expected activation") {
  // 200 sampled masks of a unit activation: the empirical mean must sit
  // near the analytic expectation of 1.0
  Rng rng(2025);
  const Tensor unit = Tensor::scalar(1.0);
  double acc = 0.0;
  for (int i = 0; i < 200; ++i) {
    acc += dropout(nullptr, unit, 0.5, rng).item();
  }
  const double mean = acc / 200.0;
  CHECK(mean > 0.9);
  CHECK(mean < 1.1);
}

TEST_CASE("model config text block round-trips") {
  ModelConfig c;
  c.in_channels_per_image = 2;
  c.base_channels = 16;
  c.depth = 4;
  c.input_h = 64;
  c.input_w = 32;
  c.variant = Variant::kVanillaDropout;
  c.dropout_rate = 0.37;
  const ModelConfig back = ModelConfig::from_text(c.to_text());
  CHECK(back.in_channels_per_image == c.in_channels_per_image);
  CHECK(back.base_channels == c.base_channels);
  CHECK(back.depth == c.depth);
  CHECK(back.input_h == c.input_h);
  CHECK(back.input_w == c.input_w);
  CHECK(back.variant == c.variant);
  CHECK(back.dropout_rate == c.dropout_rate);
}

TEST_SUITE_END();
