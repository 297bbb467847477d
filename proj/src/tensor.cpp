#include "relseg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "relseg/error.hpp"

namespace relseg {

struct Tensor::Impl {
  std::vector<int> shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first use
  bool requires_grad = false;
  bool on_tape = false;
};

namespace {

std::int64_t shape_numel(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw DimensionError("tensor dimensions must be positive");
    n *= d;
  }
  return n;
}

// gradient flows into a tensor if it is trainable or was produced on a tape
bool wants_grad(const Tensor& t) { return t.requires_grad() || t.on_tape(); }

void check_rank4(const Tensor& t, const char* what) {
  if (t.rank() != 4) {
    throw DimensionError(std::string(what) + ": expected a 4-d tensor");
  }
}

}  // namespace

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  const std::int64_t n = shape_numel(shape);
  t.impl_->shape = std::move(shape);
  t.impl_->data.assign(static_cast<std::size_t>(n), 0.0);
  t.impl_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::ranges::fill(t.impl_->data, value);
  return t;
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data,
                         bool requires_grad) {
  const std::int64_t n = shape_numel(shape);
  if (n != static_cast<std::int64_t>(data.size())) {
    throw DimensionError("tensor data length does not match shape");
  }
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->shape = std::move(shape);
  t.impl_->data = std::move(data);
  t.impl_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

const std::vector<int>& Tensor::shape() const { return impl_->shape; }
int Tensor::rank() const { return static_cast<int>(impl_->shape.size()); }
int Tensor::dim(int i) const { return impl_->shape.at(i); }

std::int64_t Tensor::numel() const {
  return static_cast<std::int64_t>(impl_->data.size());
}

std::span<double> Tensor::data() { return impl_->data; }
std::span<const double> Tensor::data() const { return impl_->data; }

bool Tensor::requires_grad() const { return impl_->requires_grad; }
bool Tensor::on_tape() const { return impl_->on_tape; }
void Tensor::mark_on_tape() { impl_->on_tape = true; }

bool Tensor::has_grad() const { return !impl_->grad.empty(); }

std::span<double> Tensor::grad() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

std::span<const double> Tensor::grad() const {
  if (impl_->grad.empty()) {
    throw UsageError("gradient accessed before backward populated it");
  }
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::ranges::fill(impl_->grad, 0.0);
}

double Tensor::item() const {
  if (numel() != 1) throw UsageError("item() requires a scalar tensor");
  return impl_->data[0];
}

double& Tensor::at4(int n, int c, int h, int w) {
  check_rank4(*this, "at4");
  const auto& s = impl_->shape;
  return impl_->data[((static_cast<std::int64_t>(n) * s[1] + c) * s[2] + h) *
                         s[3] +
                     w];
}

double Tensor::at4(int n, int c, int h, int w) const {
  return const_cast<Tensor*>(this)->at4(n, c, h, w);
}

Tensor Tensor::clone() const {
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->shape = impl_->shape;
  t.impl_->data = impl_->data;
  t.impl_->requires_grad = impl_->requires_grad;
  return t;
}

void Tape::record(const char* op, std::function<void()> backward_fn) {
  nodes_.push_back({op, std::move(backward_fn)});
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw UsageError("backward requires a scalar loss tensor");
  }
  if (consumed_) {
    throw UsageError("backward already ran on this tape; build a fresh tape");
  }
  consumed_ = true;
  Tensor seed = loss;
  seed.grad()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    it->backward_fn();
  }
}

// ---------------------------------------------------------------------------
// conv2d

namespace {

struct ConvDims {
  int n, cin, h, w, cout, kh, kw, ho, wo, hp, wp;
};

ConvDims conv_dims(const Tensor& input, const Tensor& weight,
                   const Tensor& bias, int padding, int stride) {
  check_rank4(input, "conv2d input");
  check_rank4(weight, "conv2d weight");
  if (bias.rank() != 1) throw DimensionError("conv2d bias must be 1-d");
  ConvDims d{};
  d.n = input.dim(0);
  d.cin = input.dim(1);
  d.h = input.dim(2);
  d.w = input.dim(3);
  d.cout = weight.dim(0);
  d.kh = weight.dim(2);
  d.kw = weight.dim(3);
  if (weight.dim(1) != d.cin) {
    throw DimensionError("conv2d: weight input-channel count " +
                         std::to_string(weight.dim(1)) +
                         " does not match input channels " +
                         std::to_string(d.cin));
  }
  if (bias.dim(0) != d.cout) {
    throw DimensionError("conv2d: bias length does not match output channels");
  }
  if (d.kh % 2 == 0 || d.kw % 2 == 0) {
    throw ConfigError("conv2d: kernel sides must be odd");
  }
  if (padding < 0 || stride < 1) {
    throw ConfigError("conv2d: padding must be >= 0 and stride >= 1");
  }
  const int eh = d.h + 2 * padding - d.kh;
  const int ew = d.w + 2 * padding - d.kw;
  if (eh < 0 || ew < 0 || eh % stride != 0 || ew % stride != 0) {
    throw ConfigError("conv2d: output size is not a positive integer");
  }
  d.ho = eh / stride + 1;
  d.wo = ew / stride + 1;
  d.hp = d.h + 2 * padding;
  d.wp = d.w + 2 * padding;
  return d;
}

// zero-padded copy of a [N,C,H,W] buffer
std::vector<double> pad_input(std::span<const double> in, const ConvDims& d,
                              int padding) {
  std::vector<double> padded(
      static_cast<std::size_t>(d.n) * d.cin * d.hp * d.wp, 0.0);
  for (int n = 0; n < d.n; ++n) {
    for (int c = 0; c < d.cin; ++c) {
      const double* src = in.data() +
                          (static_cast<std::int64_t>(n) * d.cin + c) * d.h * d.w;
      double* dst = padded.data() +
                    (static_cast<std::int64_t>(n) * d.cin + c) * d.hp * d.wp +
                    static_cast<std::int64_t>(padding) * d.wp + padding;
      for (int y = 0; y < d.h; ++y) {
        std::memcpy(dst + static_cast<std::int64_t>(y) * d.wp,
                    src + static_cast<std::int64_t>(y) * d.w,
                    sizeof(double) * static_cast<std::size_t>(d.w));
      }
    }
  }
  return padded;
}

}  // namespace

Tensor conv2d(Tape* tape, const Tensor& input, const Tensor& weight,
              const Tensor& bias, int padding, int stride) {
  const ConvDims d = conv_dims(input, weight, bias, padding, stride);
  auto padded = std::make_shared<std::vector<double>>(
      pad_input(input.data(), d, padding));

  Tensor out = Tensor::zeros({d.n, d.cout, d.ho, d.wo});
  {
    std::span<double> o = out.data();
    std::span<const double> w = weight.data();
    std::span<const double> b = bias.data();
    const double* pin = padded->data();
    for (int n = 0; n < d.n; ++n) {
      for (int co = 0; co < d.cout; ++co) {
        double* obase =
            o.data() + (static_cast<std::int64_t>(n) * d.cout + co) * d.ho * d.wo;
        std::fill(obase, obase + static_cast<std::int64_t>(d.ho) * d.wo, b[co]);
        for (int ci = 0; ci < d.cin; ++ci) {
          const double* ibase =
              pin + (static_cast<std::int64_t>(n) * d.cin + ci) * d.hp * d.wp;
          const double* wbase =
              w.data() + (static_cast<std::int64_t>(co) * d.cin + ci) * d.kh * d.kw;
          for (int ky = 0; ky < d.kh; ++ky) {
            for (int kx = 0; kx < d.kw; ++kx) {
              const double wv = wbase[ky * d.kw + kx];
              for (int oy = 0; oy < d.ho; ++oy) {
                const double* irow =
                    ibase + static_cast<std::int64_t>(oy * stride + ky) * d.wp + kx;
                double* orow = obase + static_cast<std::int64_t>(oy) * d.wo;
                if (stride == 1) {
                  for (int ox = 0; ox < d.wo; ++ox) orow[ox] += wv * irow[ox];
                } else {
                  for (int ox = 0; ox < d.wo; ++ox)
                    orow[ox] += wv * irow[static_cast<std::int64_t>(ox) * stride];
                }
              }
            }
          }
        }
      }
    }
  }

  if (tape && (wants_grad(input) || wants_grad(weight) || wants_grad(bias))) {
    out.mark_on_tape();
    Tensor in_t = input, w_t = weight, b_t = bias, out_t = out;
    tape->record("conv2d", [d, padding, stride, padded, in_t, w_t, b_t,
                            out_t]() mutable {
      if (!out_t.has_grad()) return;
      std::span<const double> go = out_t.grad();
      const double* pin = padded->data();

      if (wants_grad(b_t)) {
        std::span<double> gb = b_t.grad();
        for (int n = 0; n < d.n; ++n) {
          for (int co = 0; co < d.cout; ++co) {
            const double* grow =
                go.data() + (static_cast<std::int64_t>(n) * d.cout + co) * d.ho * d.wo;
            double acc = 0.0;
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(d.ho) * d.wo; ++i)
              acc += grow[i];
            gb[co] += acc;
          }
        }
      }

      if (wants_grad(w_t)) {
        std::span<double> gw = w_t.grad();
        for (int n = 0; n < d.n; ++n) {
          for (int co = 0; co < d.cout; ++co) {
            const double* gbase =
                go.data() + (static_cast<std::int64_t>(n) * d.cout + co) * d.ho * d.wo;
            for (int ci = 0; ci < d.cin; ++ci) {
              const double* ibase =
                  pin + (static_cast<std::int64_t>(n) * d.cin + ci) * d.hp * d.wp;
              double* wbase =
                  gw.data() +
                  (static_cast<std::int64_t>(co) * d.cin + ci) * d.kh * d.kw;
              for (int ky = 0; ky < d.kh; ++ky) {
                for (int kx = 0; kx < d.kw; ++kx) {
                  double acc = 0.0;
                  for (int oy = 0; oy < d.ho; ++oy) {
                    const double* irow =
                        ibase + static_cast<std::int64_t>(oy * stride + ky) * d.wp + kx;
                    const double* grow = gbase + static_cast<std::int64_t>(oy) * d.wo;
                    if (stride == 1) {
                      for (int ox = 0; ox < d.wo; ++ox)
                        acc += irow[ox] * grow[ox];
                    } else {
                      for (int ox = 0; ox < d.wo; ++ox)
                        acc += irow[static_cast<std::int64_t>(ox) * stride] * grow[ox];
                    }
                  }
                  wbase[ky * d.kw + kx] += acc;
                }
              }
            }
          }
        }
      }

      if (wants_grad(in_t)) {
        std::vector<double> gpad(
            static_cast<std::size_t>(d.n) * d.cin * d.hp * d.wp, 0.0);
        std::span<const double> w = w_t.data();
        for (int n = 0; n < d.n; ++n) {
          for (int co = 0; co < d.cout; ++co) {
            const double* gbase =
                go.data() + (static_cast<std::int64_t>(n) * d.cout + co) * d.ho * d.wo;
            for (int ci = 0; ci < d.cin; ++ci) {
              double* pbase =
                  gpad.data() + (static_cast<std::int64_t>(n) * d.cin + ci) * d.hp * d.wp;
              const double* wbase =
                  w.data() +
                  (static_cast<std::int64_t>(co) * d.cin + ci) * d.kh * d.kw;
              for (int ky = 0; ky < d.kh; ++ky) {
                for (int kx = 0; kx < d.kw; ++kx) {
                  const double wv = wbase[ky * d.kw + kx];
                  for (int oy = 0; oy < d.ho; ++oy) {
                    double* prow =
                        pbase + static_cast<std::int64_t>(oy * stride + ky) * d.wp + kx;
                    const double* grow = gbase + static_cast<std::int64_t>(oy) * d.wo;
                    if (stride == 1) {
                      for (int ox = 0; ox < d.wo; ++ox)
                        prow[ox] += wv * grow[ox];
                    } else {
                      for (int ox = 0; ox < d.wo; ++ox)
                        prow[static_cast<std::int64_t>(ox) * stride] += wv * grow[ox];
                    }
                  }
                }
              }
            }
          }
        }
        // crop padding back off
        std::span<double> gi = in_t.grad();
        for (int n = 0; n < d.n; ++n) {
          for (int c = 0; c < d.cin; ++c) {
            const double* src =
                gpad.data() + (static_cast<std::int64_t>(n) * d.cin + c) * d.hp * d.wp +
                static_cast<std::int64_t>(padding) * d.wp + padding;
            double* dst =
                gi.data() + (static_cast<std::int64_t>(n) * d.cin + c) * d.h * d.w;
            for (int y = 0; y < d.h; ++y) {
              const double* srow = src + static_cast<std::int64_t>(y) * d.wp;
              double* drow = dst + static_cast<std::int64_t>(y) * d.w;
              for (int x = 0; x < d.w; ++x) drow[x] += srow[x];
            }
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// max_pool2

Tensor max_pool2(Tape* tape, const Tensor& input) {
  check_rank4(input, "max_pool2 input");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2),
            w = input.dim(3);
  if (h % 2 != 0 || w % 2 != 0) {
    throw DimensionError("max_pool2 requires even spatial dimensions");
  }
  const int ho = h / 2, wo = w / 2;
  Tensor out = Tensor::zeros({n, c, ho, wo});
  auto argmax = std::make_shared<std::vector<std::int64_t>>(
      static_cast<std::size_t>(out.numel()));

  std::span<const double> in = input.data();
  std::span<double> o = out.data();
  std::int64_t oi = 0;
  for (int nc = 0; nc < n * c; ++nc) {
    const double* plane = in.data() + static_cast<std::int64_t>(nc) * h * w;
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox, ++oi) {
        // fixed row-major scan; strict > keeps the first maximum on ties
        const std::int64_t base = static_cast<std::int64_t>(2 * oy) * w + 2 * ox;
        std::int64_t best = base;
        double bv = plane[base];
        const std::int64_t candidates[3] = {base + 1, base + w, base + w + 1};
        for (std::int64_t idx : candidates) {
          if (plane[idx] > bv) {
            bv = plane[idx];
            best = idx;
          }
        }
        o[oi] = bv;
        (*argmax)[static_cast<std::size_t>(oi)] =
            static_cast<std::int64_t>(nc) * h * w + best;
      }
    }
  }

  if (tape && wants_grad(input)) {
    out.mark_on_tape();
    Tensor in_t = input, out_t = out;
    tape->record("max_pool2", [argmax, in_t, out_t]() mutable {
      if (!out_t.has_grad()) return;
      std::span<const double> go = out_t.grad();
      std::span<double> gi = in_t.grad();
      for (std::size_t i = 0; i < argmax->size(); ++i) {
        gi[static_cast<std::size_t>((*argmax)[i])] += go[i];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// upsample_nearest2

Tensor upsample_nearest2(Tape* tape, const Tensor& input) {
  check_rank4(input, "upsample_nearest2 input");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2),
            w = input.dim(3);
  Tensor out = Tensor::zeros({n, c, 2 * h, 2 * w});
  std::span<const double> in = input.data();
  std::span<double> o = out.data();
  for (int nc = 0; nc < n * c; ++nc) {
    const double* src = in.data() + static_cast<std::int64_t>(nc) * h * w;
    double* dst = o.data() + static_cast<std::int64_t>(nc) * 4 * h * w;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double v = src[static_cast<std::int64_t>(y) * w + x];
        double* d0 = dst + static_cast<std::int64_t>(2 * y) * 2 * w + 2 * x;
        d0[0] = v;
        d0[1] = v;
        d0[2 * w] = v;
        d0[2 * w + 1] = v;
      }
    }
  }

  if (tape && wants_grad(input)) {
    out.mark_on_tape();
    Tensor in_t = input, out_t = out;
    tape->record("upsample_nearest2", [n, c, h, w, in_t, out_t]() mutable {
      if (!out_t.has_grad()) return;
      std::span<const double> go = out_t.grad();
      std::span<double> gi = in_t.grad();
      for (int nc = 0; nc < n * c; ++nc) {
        const double* src = go.data() + static_cast<std::int64_t>(nc) * 4 * h * w;
        double* dst = gi.data() + static_cast<std::int64_t>(nc) * h * w;
        for (int y = 0; y < h; ++y) {
          for (int x = 0; x < w; ++x) {
            const double* s0 =
                src + static_cast<std::int64_t>(2 * y) * 2 * w + 2 * x;
            dst[static_cast<std::int64_t>(y) * w + x] +=
                s0[0] + s0[1] + s0[2 * w] + s0[2 * w + 1];
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// pointwise ops

Tensor relu(Tape* tape, const Tensor& input) {
  Tensor out = Tensor::zeros(input.shape());
  std::span<const double> in = input.data();
  std::span<double> o = out.data();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = in[i] > 0.0 ? in[i] : 0.0;

  if (tape && wants_grad(input)) {
    out.mark_on_tape();
    Tensor in_t = input, out_t = out;
    tape->record("relu", [in_t, out_t]() mutable {
      if (!out_t.has_grad()) return;
      std::span<const double> go = out_t.grad();
      std::span<const double> in = in_t.data();
      std::span<double> gi = in_t.grad();
      for (std::size_t i = 0; i < in.size(); ++i) {
        if (in[i] > 0.0) gi[i] += go[i];
      }
    });
  }
  return out;
}

namespace {
double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace

Tensor sigmoid(Tape* tape, const Tensor& input) {
  Tensor out = Tensor::zeros(input.shape());
  std::span<const double> in = input.data();
  std::span<double> o = out.data();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = stable_sigmoid(in[i]);

  if (tape && wants_grad(input)) {
    out.mark_on_tape();
    Tensor in_t = input, out_t = out;
    tape->record("sigmoid", [in_t, out_t]() mutable {
      if (!out_t.has_grad()) return;
      std::span<const double> go = out_t.grad();
      std::span<const double> o = out_t.data();
      std::span<double> gi = in_t.grad();
      for (std::size_t i = 0; i < o.size(); ++i) {
        gi[i] += go[i] * o[i] * (1.0 - o[i]);
      }
    });
  }
  return out;
}

Tensor concat_channels(Tape* tape, const Tensor& a, const Tensor& b) {
  check_rank4(a, "concat_channels");
  check_rank4(b, "concat_channels");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw DimensionError("concat_channels requires matching N, H, W");
  }
  const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1), h = a.dim(2),
            w = a.dim(3);
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  Tensor out = Tensor::zeros({n, ca + cb, h, w});
  std::span<double> o = out.data();
  std::span<const double> da = a.data();
  std::span<const double> db = b.data();
  for (int i = 0; i < n; ++i) {
    std::memcpy(o.data() + (static_cast<std::int64_t>(i) * (ca + cb)) * plane,
                da.data() + static_cast<std::int64_t>(i) * ca * plane,
                sizeof(double) * static_cast<std::size_t>(ca * plane));
    std::memcpy(
        o.data() + (static_cast<std::int64_t>(i) * (ca + cb) + ca) * plane,
        db.data() + static_cast<std::int64_t>(i) * cb * plane,
        sizeof(double) * static_cast<std::size_t>(cb * plane));
  }

  if (tape && (wants_grad(a) || wants_grad(b))) {
    out.mark_on_tape();
    Tensor a_t = a, b_t = b, out_t = out;
    tape->record("concat_channels", [n, ca, cb, plane, a_t, b_t,
                                     out_t]() mutable {
      if (!out_t.has_grad()) return;
      std::span<const double> go = out_t.grad();
      if (wants_grad(a_t)) {
        std::span<double> ga = a_t.grad();
        for (int i = 0; i < n; ++i) {
          const double* src =
              go.data() + (static_cast<std::int64_t>(i) * (ca + cb)) * plane;
          double* dst = ga.data() + static_cast<std::int64_t>(i) * ca * plane;
          for (std::int64_t k = 0; k < ca * plane; ++k) dst[k] += src[k];
        }
      }
      if (wants_grad(b_t)) {
        std::span<double> gb = b_t.grad();
        for (int i = 0; i < n; ++i) {
          const double* src =
              go.data() + (static_cast<std::int64_t>(i) * (ca + cb) + ca) * plane;
          double* dst = gb.data() + static_cast<std::int64_t>(i) * cb * plane;
          for (std::int64_t k = 0; k < cb * plane; ++k) dst[k] += src[k];
        }
      }
    });
  }
  return out;
}

Tensor bce_with_logits(Tape* tape, const Tensor& logits, const Tensor& target) {
  if (logits.shape() != target.shape()) {
    throw DimensionError("bce_with_logits: logit/target shape mismatch");
  }
  std::span<const double> z = logits.data();
  std::span<const double> t = target.data();
  // mean of max(z,0) - z*t + log(1+exp(-|z|)); never NaN on finite logits
  double acc = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double zi = z[i];
    acc += (zi > 0.0 ? zi : 0.0) - zi * t[i] + std::log1p(std::exp(-std::abs(zi)));
  }
  Tensor out = Tensor::scalar(acc / static_cast<double>(z.size()));

  if (tape && wants_grad(logits)) {
    out.mark_on_tape();
    Tensor z_t = logits, t_t = target, out_t = out;
    tape->record("bce_with_logits", [z_t, t_t, out_t]() mutable {
      if (!out_t.has_grad()) return;
      const double g = out_t.grad()[0];
      std::span<const double> z = z_t.data();
      std::span<const double> t = t_t.data();
      std::span<double> gz = z_t.grad();
      const double inv = 1.0 / static_cast<double>(z.size());
      for (std::size_t i = 0; i < z.size(); ++i) {
        gz[i] += g * inv * (stable_sigmoid(z[i]) - t[i]);
      }
    });
  }
  return out;
}

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add: shape mismatch");
  }
  Tensor out = Tensor::zeros(a.shape());
  std::span<const double> da = a.data();
  std::span<const double> db = b.data();
  std::span<double> o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = da[i] + db[i];

  if (tape && (wants_grad(a) || wants_grad(b))) {
    out.mark_on_tape();
    Tensor a_t = a, b_t = b, out_t = out;
    tape->record("add", [a_t, b_t, out_t]() mutable {
      if (!out_t.has_grad()) return;
      std::span<const double> go = out_t.grad();
      if (wants_grad(a_t)) {
        std::span<double> ga = a_t.grad();
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
      }
      if (wants_grad(b_t)) {
        std::span<double> gb = b_t.grad();
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
      }
    });
  }
  return out;
}

Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("mul: shape mismatch");
  }
  Tensor out = Tensor::zeros(a.shape());
  std::span<const double> da = a.data();
  std::span<const double> db = b.data();
  std::span<double> o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = da[i] * db[i];

  if (tape && (wants_grad(a) || wants_grad(b))) {
    out.mark_on_tape();
    Tensor a_t = a, b_t = b, out_t = out;
    tape->record("mul", [a_t, b_t, out_t]() mutable {
      if (!out_t.has_grad()) return;
      std::span<const double> go = out_t.grad();
      if (wants_grad(a_t)) {
        std::span<double> ga = a_t.grad();
        std::span<const double> db = b_t.data();
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * db[i];
      }
      if (wants_grad(b_t)) {
        std::span<double> gb = b_t.grad();
        std::span<const double> da = a_t.data();
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * da[i];
      }
    });
  }
  return out;
}

Tensor scale(Tape* tape, const Tensor& a, double factor) {
  Tensor out = Tensor::zeros(a.shape());
  std::span<const double> da = a.data();
  std::span<double> o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = factor * da[i];

  if (tape && wants_grad(a)) {
    out.mark_on_tape();
    Tensor a_t = a, out_t = out;
    tape->record("scale", [factor, a_t, out_t]() mutable {
      if (!out_t.has_grad()) return;
      std::span<const double> go = out_t.grad();
      std::span<double> ga = a_t.grad();
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += factor * go[i];
    });
  }
  return out;
}

Tensor sum(Tape* tape, const Tensor& a) {
  std::span<const double> da = a.data();
  double acc = 0.0;
  for (double v : da) acc += v;
  Tensor out = Tensor::scalar(acc);

  if (tape && wants_grad(a)) {
    out.mark_on_tape();
    Tensor a_t = a, out_t = out;
    tape->record("sum", [a_t, out_t]() mutable {
      if (!out_t.has_grad()) return;
      const double g = out_t.grad()[0];
      std::span<double> ga = a_t.grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
    });
  }
  return out;
}

Tensor dropout(Tape* tape, const Tensor& input, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ConfigError("dropout rate must be in [0, 1)");
  }
  const double keep_scale = 1.0 / (1.0 - rate);
  auto factors = std::make_shared<std::vector<double>>(
      static_cast<std::size_t>(input.numel()));
  Tensor out = Tensor::zeros(input.shape());
  std::span<const double> in = input.data();
  std::span<double> o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double f = rng.uniform() >= rate ? keep_scale : 0.0;
    (*factors)[i] = f;
    o[i] = f * in[i];
  }

  if (tape && wants_grad(input)) {
    out.mark_on_tape();
    Tensor in_t = input, out_t = out;
    tape->record("dropout", [factors, in_t, out_t]() mutable {
      if (!out_t.has_grad()) return;
      std::span<const double> go = out_t.grad();
      std::span<double> gi = in_t.grad();
      for (std::size_t i = 0; i < go.size(); ++i) gi[i] += (*factors)[i] * go[i];
    });
  }
  return out;
}

}  // namespace relseg
