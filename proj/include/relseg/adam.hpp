#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace relseg {

// Bias-corrected Adam over one flat parameter vector.
struct AdamState {
  std::int64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double learning_rate = 1e-4;

  static AdamState create(std::size_t parameter_count, double learning_rate);
};

void adam_step(std::span<double> params, std::span<const double> grads,
               AdamState& state);

}  // namespace relseg
