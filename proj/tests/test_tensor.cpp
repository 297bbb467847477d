#include <cmath>

#include "doctest.h"
#include "relseg/adam.hpp"
#include "relseg/error.hpp"
#include "relseg/gradcheck.hpp"
#include "relseg/rng.hpp"
#include "relseg/tensor.hpp"

using namespace relseg;

namespace {

Tensor t4(std::vector<int> shape, std::vector<double> data,
          bool requires_grad = false) {
  return Tensor::from_data(std::move(shape), std::move(data), requires_grad);
}

}  // namespace

TEST_SUITE_BEGIN("tensor");

TEST_CASE("conv2d identity kernel passes the value through") {
  const Tensor x = t4({1, 1, 1, 1}, {5.0});
  const Tensor w = t4({1, 1, 1, 1}, {1.0});
  const Tensor b = Tensor::zeros({1});
  const Tensor y = conv2d(nullptr, x, w, b, 0, 1);
  CHECK(y.shape() == std::vector<int>{1, 1, 1, 1});
  CHECK(y.item() == doctest::Approx(5.0).epsilon(0.0));
}

TEST_CASE("conv2d window dot product") {
  const Tensor x = t4({1, 1, 2, 2}, {1, 2, 3, 4});
  // even kernels are rejected, so the single 2x2 dot product is expressed as
  // a 3x3 kernel with a zeroed first row and column
  const Tensor w = t4({1, 1, 3, 3}, {0, 0, 0, 0, 1, 1, 0, 1, 1});
  const Tensor b = Tensor::zeros({1});
  const Tensor y = conv2d(nullptr, x, w, b, 1, 1);
  CHECK(y.shape() == std::vector<int>{1, 1, 2, 2});
  CHECK(y.at4(0, 0, 0, 0) == doctest::Approx(10.0).epsilon(0.0));
}

TEST_CASE("conv2d zero input yields the bias everywhere") {
  const Tensor x = Tensor::zeros({1, 1, 3, 3});
  Rng rng(11);
  Tensor w = Tensor::zeros({2, 1, 3, 3});
  for (double& v : w.data()) v = rng.normal();
  const Tensor b = t4({2}, {0.25, -1.5});
  const Tensor y = conv2d(nullptr, x, w, b, 1, 1);
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < 9; ++i) {
      CHECK(y.data()[c * 9 + i] == doctest::Approx(b.data()[c]).epsilon(0.0));
    }
  }
}

TEST_CASE("conv2d rejects mismatched channels and bad output sizes") {
  const Tensor x = Tensor::zeros({1, 3, 4, 4});
  const Tensor w = Tensor::zeros({1, 2, 3, 3});
  const Tensor b = Tensor::zeros({1});
  CHECK_THROWS_AS(conv2d(nullptr, x, w, b, 1, 1), DimensionError);
  const Tensor w_ok = Tensor::zeros({1, 3, 3, 3});
  CHECK_THROWS_AS(conv2d(nullptr, x, w_ok, b, 0, 2), ConfigError);
}

TEST_CASE("conv2d is linear in its input") {
  Rng rng(42);
  auto randt = [&rng](std::vector<int> shape) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data()) v = rng.normal();
    return t;
  };
  const Tensor w = randt({3, 2, 3, 3});
  const Tensor b = Tensor::zeros({3});
  const Tensor x = randt({1, 2, 6, 6});
  const Tensor y = randt({1, 2, 6, 6});
  const double a = 1.7, c = -0.4;

  Tensor combo = Tensor::zeros({1, 2, 6, 6});
  for (std::size_t i = 0; i < combo.data().size(); ++i) {
    combo.data()[i] = a * x.data()[i] + c * y.data()[i];
  }
  const Tensor lhs = conv2d(nullptr, combo, w, b, 1, 1);
  const Tensor fx = conv2d(nullptr, x, w, b, 1, 1);
  const Tensor fy = conv2d(nullptr, y, w, b, 1, 1);
  for (std::size_t i = 0; i < lhs.data().size(); ++i) {
    const double rhs = a * fx.data()[i] + c * fy.data()[i];
    CHECK(std::abs(lhs.data()[i] - rhs) < 1e-10);
  }
}

TEST_CASE("max_pool2 picks window maxima") {
  const Tensor x = t4({1, 1, 2, 2}, {1, 2, 3, 4});
  CHECK(max_pool2(nullptr, x).item() == doctest::Approx(4.0).epsilon(0.0));

  const Tensor neg = t4({1, 1, 2, 2}, {-1, -2, -3, -4});
  CHECK(max_pool2(nullptr, neg).item() == doctest::Approx(-1.0).epsilon(0.0));

  const Tensor odd = Tensor::zeros({1, 1, 3, 4});
  CHECK_THROWS_AS(max_pool2(nullptr, odd), DimensionError);
}

TEST_CASE("max_pool2 ties route gradient to the first element in row-major order") {
  Tensor x = Tensor::full({1, 1, 4, 4}, 2.5, true);
  Tape tape;
  const Tensor pooled = max_pool2(&tape, x);
  for (double v : pooled.data()) CHECK(v == doctest::Approx(2.5).epsilon(0.0));
  tape.backward(sum(&tape, pooled));
  for (int y = 0; y < 4; ++y) {
    for (int x_ = 0; x_ < 4; ++x_) {
      const double expected = (y % 2 == 0 && x_ % 2 == 0) ? 1.0 : 0.0;
      CHECK(x.grad()[y * 4 + x_] == doctest::Approx(expected).epsilon(0.0));
    }
  }
}

TEST_CASE("max_pool2 output stays within window bounds") {
  Rng rng(3);
  Tensor x = Tensor::zeros({2, 3, 8, 8});
  for (double& v : x.data()) v = rng.normal();
  const Tensor y = max_pool2(nullptr, x);
  for (int n = 0; n < 2; ++n) {
    for (int c = 0; c < 3; ++c) {
      for (int oy = 0; oy < 4; ++oy) {
        for (int ox = 0; ox < 4; ++ox) {
          const double v = y.at4(n, c, oy, ox);
          double win_max = -1e300, win_min = 1e300;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const double e = x.at4(n, c, 2 * oy + dy, 2 * ox + dx);
              win_max = std::max(win_max, e);
              win_min = std::min(win_min, e);
            }
          }
          CHECK(v <= win_max);
          CHECK(v >= win_min);
        }
      }
    }
  }
}

TEST_CASE("upsample_nearest2 replicates 2x2 blocks") {
  const Tensor single = t4({1, 1, 1, 1}, {7.0});
  const Tensor up1 = upsample_nearest2(nullptr, single);
  CHECK(up1.shape() == std::vector<int>{1, 1, 2, 2});
  for (double v : up1.data()) CHECK(v == doctest::Approx(7.0).epsilon(0.0));

  const Tensor x = t4({1, 1, 2, 2}, {1, 2, 3, 4});
  const Tensor up = upsample_nearest2(nullptr, x);
  const std::vector<double> expected = {1, 1, 2, 2, 1, 1, 2, 2,
                                        3, 3, 4, 4, 3, 3, 4, 4};
  for (std::size_t i = 0; i < expected.size(); ++i) {
    CHECK(up.data()[i] == doctest::Approx(expected[i]).epsilon(0.0));
  }
}

TEST_CASE("upsample_nearest2 backward sums four replicas") {
  Tensor x = Tensor::full({1, 1, 2, 2}, 1.0, true);
  Tape tape;
  tape.backward(sum(&tape, upsample_nearest2(&tape, x)));
  for (double g : x.grad()) CHECK(g == doctest::Approx(4.0).epsilon(0.0));
}

TEST_CASE("relu, sigmoid and concat_channels basics") {
  const Tensor x = t4({1, 1, 1, 2}, {-3.0, 3.0});
  const Tensor r = relu(nullptr, x);
  CHECK(r.data()[0] == doctest::Approx(0.0).epsilon(0.0));
  CHECK(r.data()[1] == doctest::Approx(3.0).epsilon(0.0));

  CHECK(sigmoid(nullptr, Tensor::scalar(0.0)).item() ==
        doctest::Approx(0.5).epsilon(0.0));

  const Tensor a = Tensor::zeros({2, 2, 3, 3});
  const Tensor b = Tensor::zeros({2, 3, 3, 3});
  CHECK(concat_channels(nullptr, a, b).shape() == std::vector<int>{2, 5, 3, 3});

  const Tensor bad = Tensor::zeros({2, 3, 4, 3});
  CHECK_THROWS_AS(concat_channels(nullptr, a, bad), DimensionError);
}

TEST_CASE("bce_with_logits matches hand-computed values") {
  const Tensor zeros = Tensor::zeros({1, 1, 2, 2});
  const Tensor ones = Tensor::full({1, 1, 2, 2}, 1.0);
  CHECK(bce_with_logits(nullptr, zeros, ones).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // saturated logits: loss collapses to ~0
  const Tensor hot = Tensor::full({1, 1, 2, 2}, 50.0);
  CHECK(bce_with_logits(nullptr, hot, ones).item() < 1e-10);

  // logits [0,0] against targets [1,0]: both pixels contribute log 2
  const Tensor z = t4({1, 1, 1, 2}, {0.0, 0.0});
  const Tensor t = t4({1, 1, 1, 2}, {1.0, 0.0});
  CHECK(bce_with_logits(nullptr, z, t).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // extreme logits stay finite
  const Tensor wild = t4({1, 1, 1, 2}, {700.0, -700.0});
  CHECK(std::isfinite(bce_with_logits(nullptr, wild, t).item()));
}

TEST_CASE("backward populates gradients for simple losses") {
  Tensor x = t4({2, 3}, {1, -2, 3, 0.5, -0.25, 4}, true);
  {
    Tape tape;
    tape.backward(sum(&tape, x));
    for (double g : x.grad()) CHECK(g == doctest::Approx(1.0).epsilon(0.0));
  }
  x.zero_grad();
  {
    Tape tape;
    tape.backward(sum(&tape, mul(&tape, x, x)));
    for (std::size_t i = 0; i < x.data().size(); ++i) {
      CHECK(x.grad()[i] == doctest::Approx(2.0 * x.data()[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("backward rejects non-scalar losses and double sweeps") {
  Tensor x = Tensor::full({2, 2}, 1.0, true);
  Tape tape;
  const Tensor y = scale(&tape, x, 2.0);
  CHECK_THROWS_AS(tape.backward(y), UsageError);
  const Tensor s = sum(&tape, y);
  tape.backward(s);
  CHECK_THROWS_AS(tape.backward(s), UsageError);
}

TEST_CASE("gradient oracle: finite differences across all layer kinds") {
  const GradCheckResult result = run_gradient_checks(7);
  CHECK(result.ok());
  CHECK(result.checked_values > 8000);  // includes every net parameter
  CHECK(result.max_rel_error < 1e-4);
  for (const auto& f : result.failures) {
    MESSAGE(f);
  }
}

TEST_CASE("adam: zero gradient leaves parameters untouched") {
  std::vector<double> params = {0.5, -1.25, 3.0};
  const std::vector<double> grads = {0.0, 0.0, 0.0};
  AdamState state = AdamState::create(3, 0.01);
  adam_step(params, grads, state);
  CHECK(state.step == 1);
  CHECK(params == std::vector<double>{0.5, -1.25, 3.0});
}

TEST_CASE("adam: hand-evaluated first step") {
  // w=0, g=1, lr=0.001: bias-corrected m_hat = v_hat = 1, so the update is
  // -lr / (1 + eps)
  std::vector<double> params = {0.0};
  const std::vector<double> grads = {1.0};
  AdamState state = AdamState::create(1, 0.001);
  adam_step(params, grads, state);
  CHECK(params[0] == doctest::Approx(-0.001).epsilon(1e-6));
}

TEST_CASE("adam: identical parameters with identical gradients stay identical") {
  std::vector<double> params = {0.3, 0.3};
  AdamState state = AdamState::create(2, 0.01);
  Rng rng(5);
  for (int step = 0; step < 50; ++step) {
    const double g = rng.normal();
    const std::vector<double> grads = {g, g};
    adam_step(params, grads, state);
    CHECK(params[0] == params[1]);
  }
  CHECK(state.step == 50);
}

TEST_CASE("adam rejects mismatched lengths") {
  std::vector<double> params = {1.0, 2.0};
  const std::vector<double> grads = {1.0};
  AdamState state = AdamState::create(2, 0.01);
  CHECK_THROWS_AS(adam_step(params, grads, state), DimensionError);
}

TEST_CASE("forward passes are deterministic") {
  Rng rng(9);
  Tensor x = Tensor::zeros({1, 2, 8, 8});
  for (double& v : x.data()) v = rng.normal();
  Tensor w = Tensor::zeros({3, 2, 3, 3});
  for (double& v : w.data()) v = rng.normal();
  const Tensor b = Tensor::zeros({3});
  const Tensor y1 = max_pool2(nullptr, relu(nullptr, conv2d(nullptr, x, w, b, 1, 1)));
  const Tensor y2 = max_pool2(nullptr, relu(nullptr, conv2d(nullptr, x, w, b, 1, 1)));
  for (std::size_t i = 0; i < y1.data().size(); ++i) {
    CHECK(y1.data()[i] == y2.data()[i]);
  }
}

TEST_SUITE_END();
