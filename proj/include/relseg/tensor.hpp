#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "relseg/rng.hpp"

namespace relseg {

// Dense row-major f64 tensor. Handle semantics: copies share storage, which
// is what lets tape nodes reference the same buffers the caller holds.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value,
                     bool requires_grad = false);
  static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int>& shape() const;
  int rank() const;
  int dim(int i) const;
  std::int64_t numel() const;

  std::span<double> data();
  std::span<const double> data() const;

  bool requires_grad() const;
  // true once a tape node produced this tensor; such tensors accept gradient
  // even when requires_grad is false
  bool on_tape() const;
  void mark_on_tape();

  bool has_grad() const;
  // allocates a zero gradient on first access
  std::span<double> grad();
  std::span<const double> grad() const;
  void zero_grad();

  double item() const;  // scalar tensors only

  // element access for [N,C,H,W] tensors; test/debug convenience
  double& at4(int n, int c, int h, int w);
  double at4(int n, int c, int h, int w) const;

  // deep copy with fresh storage (gradient not copied)
  Tensor clone() const;

  bool same_storage(const Tensor& other) const {
    return impl_ == other.impl_;
  }

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

// Reverse-mode tape. One tape per training step; nodes run in exact reverse
// creation order on backward(). Not shareable across threads during a step.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // seeds d(loss)/d(loss)=1 and sweeps the tape once; a second call without
  // a fresh tape is a usage error
  void backward(const Tensor& loss);

  std::size_t node_count() const { return nodes_.size(); }

  void record(const char* op, std::function<void()> backward_fn);

 private:
  struct Node {
    const char* op;
    std::function<void()> backward_fn;
  };
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

// Ops record onto `tape` when it is non-null and any input participates in
// differentiation; tape == nullptr is the pure-forward (inference) path.

// cross-correlation, [N,Cin,H,W] * [Cout,Cin,kH,kW] -> [N,Cout,H',W']
Tensor conv2d(Tape* tape, const Tensor& input, const Tensor& weight,
              const Tensor& bias, int padding, int stride);

// 2x2 max pooling; gradient routes to the first max in row-major order
Tensor max_pool2(Tape* tape, const Tensor& input);

// nearest-neighbour x2; backward sums the four replicas per source element
Tensor upsample_nearest2(Tape* tape, const Tensor& input);

Tensor relu(Tape* tape, const Tensor& input);
Tensor sigmoid(Tape* tape, const Tensor& input);

// channel-axis concatenation of tensors with equal N,H,W
Tensor concat_channels(Tape* tape, const Tensor& a, const Tensor& b);

// mean binary cross-entropy from logits, log-sum-exp form; returns a scalar
Tensor bce_with_logits(Tape* tape, const Tensor& logits, const Tensor& target);

// elementwise helpers used by losses and tests
Tensor add(Tape* tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape* tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape* tape, const Tensor& a, double factor);
Tensor sum(Tape* tape, const Tensor& a);  // scalar

// inverted dropout: keep with probability 1-rate, scale kept values by
// 1/(1-rate); the mask is drawn from rng at call time
Tensor dropout(Tape* tape, const Tensor& input, double rate, Rng& rng);

}  // namespace relseg
