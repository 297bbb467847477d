#include "relseg/gradcheck.hpp"

#include <cmath>
#include <functional>

#include "relseg/rng.hpp"
#include "relseg/tensor.hpp"
#include "relseg/unet.hpp"

namespace relseg {

namespace {

constexpr double kStep = 1e-5;
constexpr double kRelTol = 1e-4;
constexpr double kAbsTol = 1e-7;

struct Checker {
  GradCheckResult result;

  // compares the analytic gradient of `target` against central differences
  // of `loss_fn`, which must be a deterministic pure-forward evaluation
  void check_tensor(const std::string& label, Tensor target,
                    const std::function<double()>& loss_fn,
                    std::span<const double> analytic) {
    auto data = target.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + kStep;
      const double up = loss_fn();
      data[i] = saved - kStep;
      const double down = loss_fn();
      data[i] = saved;
      const double fd = (up - down) / (2.0 * kStep);
      const double g = analytic[i];
      const double abs_err = std::abs(fd - g);
      const double denom = std::max(std::abs(fd), std::abs(g));
      const double rel_err = denom > 0.0 ? abs_err / denom : 0.0;
      ++result.checked_values;
      result.max_abs_error = std::max(result.max_abs_error, abs_err);
      if (abs_err > kAbsTol) {
        result.max_rel_error = std::max(result.max_rel_error, rel_err);
      }
      if (abs_err > kAbsTol && rel_err > kRelTol) {
        result.failures.push_back(label + "[" + std::to_string(i) +
                                  "]: analytic " + std::to_string(g) +
                                  " vs finite-difference " + std::to_string(fd));
      }
    }
  }
};

Tensor random_tensor(std::vector<int> shape, Rng& rng, double spread,
                     bool requires_grad) {
  Tensor t = Tensor::zeros(std::move(shape), requires_grad);
  for (double& v : t.data()) v = spread * rng.normal();
  return t;
}

// scalarizes an arbitrary output with a fixed random weighting so every
// output element influences the loss
Tensor weighted_sum(Tape* tape, const Tensor& out, const Tensor& weights) {
  return sum(tape, mul(tape, out, weights));
}

void check_single_ops(Checker& chk, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 1));

  // conv2d: same-padding, no padding, and strided variants
  struct ConvCase {
    const char* label;
    int cin, cout, h, w, k, padding, stride;
  };
  const ConvCase conv_cases[] = {
      {"conv2d(pad1)", 2, 3, 6, 6, 3, 1, 1},
      {"conv2d(pad0)", 1, 2, 5, 5, 3, 0, 1},
      {"conv2d(1x1)", 3, 2, 4, 4, 1, 0, 1},
      {"conv2d(stride2)", 2, 2, 7, 7, 3, 1, 2},
  };
  for (const ConvCase& c : conv_cases) {
    Tensor x = random_tensor({1, c.cin, c.h, c.w}, rng, 1.0, true);
    Tensor w = random_tensor({c.cout, c.cin, c.k, c.k}, rng, 0.5, true);
    Tensor b = random_tensor({c.cout}, rng, 0.5, true);
    Tensor probe;
    {
      Tensor out = conv2d(nullptr, x, w, b, c.padding, c.stride);
      probe = random_tensor(out.shape(), rng, 1.0, false);
    }
    auto eval = [&]() {
      return weighted_sum(nullptr, conv2d(nullptr, x, w, b, c.padding, c.stride),
                          probe)
          .item();
    };
    Tape tape;
    tape.backward(
        weighted_sum(&tape, conv2d(&tape, x, w, b, c.padding, c.stride), probe));
    chk.check_tensor(std::string(c.label) + ".input", x, eval, x.grad());
    chk.check_tensor(std::string(c.label) + ".weight", w, eval, w.grad());
    chk.check_tensor(std::string(c.label) + ".bias", b, eval, b.grad());
  }

  // unary spatial / pointwise ops
  {
    Tensor x = random_tensor({2, 2, 4, 4}, rng, 1.0, true);
    Tensor probe = random_tensor({2, 2, 2, 2}, rng, 1.0, false);
    auto eval = [&]() {
      return weighted_sum(nullptr, max_pool2(nullptr, x), probe).item();
    };
    Tape tape;
    tape.backward(weighted_sum(&tape, max_pool2(&tape, x), probe));
    chk.check_tensor("max_pool2.input", x, eval, x.grad());
  }
  {
    Tensor x = random_tensor({1, 2, 3, 3}, rng, 1.0, true);
    Tensor probe = random_tensor({1, 2, 6, 6}, rng, 1.0, false);
    auto eval = [&]() {
      return weighted_sum(nullptr, upsample_nearest2(nullptr, x), probe).item();
    };
    Tape tape;
    tape.backward(weighted_sum(&tape, upsample_nearest2(&tape, x), probe));
    chk.check_tensor("upsample_nearest2.input", x, eval, x.grad());
  }
  {
    Tensor x = random_tensor({1, 1, 4, 4}, rng, 1.0, true);
    Tensor probe = random_tensor({1, 1, 4, 4}, rng, 1.0, false);
    auto eval = [&]() {
      return weighted_sum(nullptr, relu(nullptr, x), probe).item();
    };
    Tape tape;
    tape.backward(weighted_sum(&tape, relu(&tape, x), probe));
    chk.check_tensor("relu.input", x, eval, x.grad());
  }
  {
    Tensor x = random_tensor({1, 1, 4, 4}, rng, 2.0, true);
    Tensor probe = random_tensor({1, 1, 4, 4}, rng, 1.0, false);
    auto eval = [&]() {
      return weighted_sum(nullptr, sigmoid(nullptr, x), probe).item();
    };
    Tape tape;
    tape.backward(weighted_sum(&tape, sigmoid(&tape, x), probe));
    chk.check_tensor("sigmoid.input", x, eval, x.grad());
  }
  {
    Tensor a = random_tensor({1, 2, 3, 3}, rng, 1.0, true);
    Tensor b = random_tensor({1, 3, 3, 3}, rng, 1.0, true);
    Tensor probe = random_tensor({1, 5, 3, 3}, rng, 1.0, false);
    auto eval = [&]() {
      return weighted_sum(nullptr, concat_channels(nullptr, a, b), probe).item();
    };
    Tape tape;
    tape.backward(weighted_sum(&tape, concat_channels(&tape, a, b), probe));
    chk.check_tensor("concat_channels.a", a, eval, a.grad());
    chk.check_tensor("concat_channels.b", b, eval, b.grad());
  }
  {
    Tensor z = random_tensor({1, 1, 4, 4}, rng, 2.0, true);
    Tensor t = Tensor::zeros({1, 1, 4, 4});
    for (double& v : t.data()) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
    auto eval = [&]() { return bce_with_logits(nullptr, z, t).item(); };
    Tape tape;
    tape.backward(bce_with_logits(&tape, z, t));
    chk.check_tensor("bce_with_logits.logits", z, eval, z.grad());
  }
  {
    // fixed rng seed per evaluation keeps the dropout mask constant, which
    // is what makes the finite-difference comparison valid
    Tensor x = random_tensor({1, 2, 4, 4}, rng, 1.0, true);
    Tensor probe = random_tensor({1, 2, 4, 4}, rng, 1.0, false);
    const std::uint64_t mask_seed = mix_seed(seed, 7);
    auto eval = [&]() {
      Rng mask_rng(mask_seed);
      return weighted_sum(nullptr, dropout(nullptr, x, 0.5, mask_rng), probe)
          .item();
    };
    Tape tape;
    Rng mask_rng(mask_seed);
    tape.backward(weighted_sum(&tape, dropout(&tape, x, 0.5, mask_rng), probe));
    chk.check_tensor("dropout.input", x, eval, x.grad());
  }
  {
    Tensor a = random_tensor({2, 3}, rng, 1.0, true);
    Tensor b = random_tensor({2, 3}, rng, 1.0, true);
    auto eval = [&]() {
      return sum(nullptr, mul(nullptr, add(nullptr, a, b),
                              scale(nullptr, a, 0.7)))
          .item();
    };
    Tape tape;
    tape.backward(
        sum(&tape, mul(&tape, add(&tape, a, b), scale(&tape, a, 0.7))));
    chk.check_tensor("add_mul_scale.a", a, eval, a.grad());
    chk.check_tensor("add_mul_scale.b", b, eval, b.grad());
  }
}

// every parameter of a depth-2 relation net against the composed
// conv/relu/pool/upsample/concat/bce pipeline
void check_relation_network(Checker& chk, std::uint64_t seed) {
  ModelConfig config;
  config.in_channels_per_image = 1;
  config.base_channels = 4;
  config.depth = 2;
  config.input_h = 8;
  config.input_w = 8;
  config.variant = Variant::kRelation;

  UNet net(config, mix_seed(seed, 2));
  Rng rng(mix_seed(seed, 3));
  Tensor x1 = random_tensor({1, 1, 8, 8}, rng, 1.0, false);
  Tensor x2 = random_tensor({1, 1, 8, 8}, rng, 1.0, false);
  Tensor targets[4];
  for (Tensor& t : targets) {
    t = Tensor::zeros({1, 1, 8, 8});
    for (double& v : t.data()) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
  }

  auto loss_on = [&](Tape* tape) {
    const ModelOutputs out = net.forward_relation(tape, x1, x2);
    Tensor total = bce_with_logits(tape, out.s1_logits, targets[0]);
    total = add(tape, total, bce_with_logits(tape, out.s2_logits, targets[1]));
    total = add(tape, total, bce_with_logits(tape, out.rp_logits, targets[2]));
    total = add(tape, total, bce_with_logits(tape, out.rc_logits, targets[3]));
    return total;
  };

  Tape tape;
  tape.backward(loss_on(&tape));
  auto eval = [&]() { return loss_on(nullptr).item(); };
  for (auto& [name, param] : net.named_parameters()) {
    chk.check_tensor("relation_net." + name, param, eval, param.grad());
  }
}

}  // namespace

GradCheckResult run_gradient_checks(std::uint64_t seed) {
  Checker chk;
  check_single_ops(chk, seed);
  check_relation_network(chk, seed);
  return chk.result;
}

}  // namespace relseg
