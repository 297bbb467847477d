#include "relseg/unet.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "relseg/error.hpp"

namespace relseg {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kVanilla:
      return "vanilla";
    case Variant::kRelation:
      return "relation";
    case Variant::kVanillaDropout:
      return "vanilla_dropout";
  }
  throw ConfigError("unknown variant");
}

Variant variant_from_name(const std::string& name) {
  if (name == "vanilla") return Variant::kVanilla;
  if (name == "relation") return Variant::kRelation;
  if (name == "vanilla_dropout") return Variant::kVanillaDropout;
  throw ConfigError("unknown model variant '" + name + "'");
}

namespace {

std::string double_to_text(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

double double_from_text(const std::string& s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw ConfigError("malformed float '" + s + "'");
  }
  return v;
}

void validate_config(const ModelConfig& c) {
  if (c.in_channels_per_image < 1 || c.base_channels < 1 || c.depth < 1) {
    throw ConfigError("model config: channel counts and depth must be >= 1");
  }
  const int factor = 1 << c.depth;
  if (c.input_h <= 0 || c.input_w <= 0 || c.input_h % factor != 0 ||
      c.input_w % factor != 0) {
    throw ConfigError("model config: input size " + std::to_string(c.input_h) +
                      "x" + std::to_string(c.input_w) +
                      " must be divisible by 2^depth = " +
                      std::to_string(factor));
  }
  if (c.dropout_rate < 0.0 || c.dropout_rate >= 1.0) {
    throw ConfigError("model config: dropout_rate must be in [0, 1)");
  }
}

}  // namespace

std::string ModelConfig::to_text() const {
  std::ostringstream out;
  out << "variant=" << variant_name(variant) << "\n"
      << "in_channels_per_image=" << in_channels_per_image << "\n"
      << "base_channels=" << base_channels << "\n"
      << "depth=" << depth << "\n"
      << "input_h=" << input_h << "\n"
      << "input_w=" << input_w << "\n"
      << "dropout_rate=" << double_to_text(dropout_rate) << "\n";
  return out.str();
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  ModelConfig c;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("model config: malformed line '" + line + "'");
    }
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "variant") {
      c.variant = variant_from_name(value);
    } else if (key == "in_channels_per_image") {
      c.in_channels_per_image = std::stoi(value);
    } else if (key == "base_channels") {
      c.base_channels = std::stoi(value);
    } else if (key == "depth") {
      c.depth = std::stoi(value);
    } else if (key == "input_h") {
      c.input_h = std::stoi(value);
    } else if (key == "input_w") {
      c.input_w = std::stoi(value);
    } else if (key == "dropout_rate") {
      c.dropout_rate = double_from_text(value);
    } else {
      throw ConfigError("model config: unknown key '" + key + "'");
    }
  }
  validate_config(c);
  return c;
}

UNet::UNet(const ModelConfig& config, std::uint64_t rng_seed)
    : config_(config) {
  validate_config(config_);
  Rng rng(mix_seed(rng_seed, 0x756e6574));  // independent init stream

  // He (fan-in) normal init for weights, zero bias; one draw order, fixed
  auto make_conv = [&rng](int cin, int cout, int k) {
    Conv conv;
    const double std_dev = std::sqrt(2.0 / (cin * k * k));
    std::vector<double> w(static_cast<std::size_t>(cout) * cin * k * k);
    for (double& v : w) v = std_dev * rng.normal();
    conv.weight = Tensor::from_data({cout, cin, k, k}, std::move(w), true);
    conv.bias = Tensor::zeros({cout}, true);
    conv.padding = k / 2;
    return conv;
  };

  const int input_channels = config_.variant == Variant::kRelation
                                 ? 2 * config_.in_channels_per_image
                                 : config_.in_channels_per_image;
  const int base = config_.base_channels;

  int in_ch = input_channels;
  for (int level = 0; level < config_.depth; ++level) {
    const int out_ch = base << level;
    encoder_.push_back({make_conv(in_ch, out_ch, 3), make_conv(out_ch, out_ch, 3)});
    in_ch = out_ch;
  }
  const int bottleneck_ch = base << config_.depth;
  bottleneck_ = {make_conv(in_ch, bottleneck_ch, 3),
                 make_conv(bottleneck_ch, bottleneck_ch, 3)};

  for (int level = config_.depth - 1; level >= 0; --level) {
    const int out_ch = base << level;
    DecoderLevel dec;
    dec.up = make_conv(out_ch * 2, out_ch, 3);
    dec.block = {make_conv(out_ch * 2, out_ch, 3), make_conv(out_ch, out_ch, 3)};
    decoder_.push_back(std::move(dec));
  }

  const int head_count = config_.variant == Variant::kRelation ? 4 : 1;
  for (int i = 0; i < head_count; ++i) {
    heads_.push_back(make_conv(base, 1, 1));
  }
}

void UNet::check_input(const Tensor& x, int expected_channels) const {
  if (x.rank() != 4) throw DimensionError("forward: expected a 4-d input");
  if (x.dim(1) != expected_channels || x.dim(2) != config_.input_h ||
      x.dim(3) != config_.input_w) {
    throw DimensionError(
        "forward: input shape [" + std::to_string(x.dim(0)) + "," +
        std::to_string(x.dim(1)) + "," + std::to_string(x.dim(2)) + "," +
        std::to_string(x.dim(3)) + "] does not match config (C=" +
        std::to_string(expected_channels) + ", " + std::to_string(config_.input_h) +
        "x" + std::to_string(config_.input_w) + ")");
  }
}

Tensor UNet::trunk_forward(Tape* tape, const Tensor& input, bool dropout_sample,
                           Rng* rng) const {
  std::vector<Tensor> skips;
  skips.reserve(encoder_.size());
  Tensor cur = input;
  for (const ConvBlock& block : encoder_) {
    cur = relu(tape, conv2d(tape, cur, block.c1.weight, block.c1.bias,
                            block.c1.padding, 1));
    cur = relu(tape, conv2d(tape, cur, block.c2.weight, block.c2.bias,
                            block.c2.padding, 1));
    skips.push_back(cur);
    cur = max_pool2(tape, cur);
  }
  cur = relu(tape, conv2d(tape, cur, bottleneck_.c1.weight, bottleneck_.c1.bias,
                          bottleneck_.c1.padding, 1));
  cur = relu(tape, conv2d(tape, cur, bottleneck_.c2.weight, bottleneck_.c2.bias,
                          bottleneck_.c2.padding, 1));
  for (std::size_t i = 0; i < decoder_.size(); ++i) {
    const DecoderLevel& dec = decoder_[i];
    cur = upsample_nearest2(tape, cur);
    cur = relu(tape, conv2d(tape, cur, dec.up.weight, dec.up.bias,
                            dec.up.padding, 1));
    cur = concat_channels(tape, skips[skips.size() - 1 - i], cur);
    cur = relu(tape, conv2d(tape, cur, dec.block.c1.weight, dec.block.c1.bias,
                            dec.block.c1.padding, 1));
    cur = relu(tape, conv2d(tape, cur, dec.block.c2.weight, dec.block.c2.bias,
                            dec.block.c2.padding, 1));
  }
  if (dropout_sample) {
    cur = dropout(tape, cur, config_.dropout_rate, *rng);
  }
  return cur;
}

Tensor UNet::apply_head(Tape* tape, const Tensor& features,
                        const Conv& head) const {
  return conv2d(tape, features, head.weight, head.bias, head.padding, 1);
}

ModelOutputs UNet::forward_relation(Tape* tape, const Tensor& x1,
                                    const Tensor& x2) const {
  if (config_.variant != Variant::kRelation) {
    throw UsageError("forward_relation requires the relation variant");
  }
  check_input(x1, config_.in_channels_per_image);
  check_input(x2, config_.in_channels_per_image);
  if (x1.dim(0) != x2.dim(0)) {
    throw DimensionError("forward_relation: batch sizes differ");
  }
  const Tensor joint = concat_channels(tape, x1, x2);
  const Tensor features = trunk_forward(tape, joint, false, nullptr);
  ModelOutputs out;
  out.s1_logits = apply_head(tape, features, heads_[0]);
  out.s2_logits = apply_head(tape, features, heads_[1]);
  out.rp_logits = apply_head(tape, features, heads_[2]);
  out.rc_logits = apply_head(tape, features, heads_[3]);
  return out;
}

Tensor UNet::forward_vanilla(Tape* tape, const Tensor& x) const {
  if (config_.variant != Variant::kVanilla) {
    throw UsageError("forward_vanilla requires the vanilla variant");
  }
  check_input(x, config_.in_channels_per_image);
  return apply_head(tape, trunk_forward(tape, x, false, nullptr), heads_[0]);
}

Tensor UNet::forward_dropout(Tape* tape, const Tensor& x, bool sample,
                             Rng& rng) const {
  if (config_.variant != Variant::kVanillaDropout) {
    throw UsageError("forward_dropout requires the vanilla_dropout variant");
  }
  check_input(x, config_.in_channels_per_image);
  return apply_head(tape, trunk_forward(tape, x, sample, &rng), heads_[0]);
}

std::vector<std::pair<std::string, Tensor>> UNet::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> params;
  auto push_conv = [&params](const std::string& prefix, const Conv& conv) {
    params.emplace_back(prefix + ".weight", conv.weight);
    params.emplace_back(prefix + ".bias", conv.bias);
  };
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    push_conv("enc" + std::to_string(i) + ".conv1", encoder_[i].c1);
    push_conv("enc" + std::to_string(i) + ".conv2", encoder_[i].c2);
  }
  push_conv("bottleneck.conv1", bottleneck_.c1);
  push_conv("bottleneck.conv2", bottleneck_.c2);
  for (std::size_t i = 0; i < decoder_.size(); ++i) {
    const std::string prefix = "dec" + std::to_string(decoder_.size() - 1 - i);
    push_conv(prefix + ".up", decoder_[i].up);
    push_conv(prefix + ".conv1", decoder_[i].block.c1);
    push_conv(prefix + ".conv2", decoder_[i].block.c2);
  }
  if (config_.variant == Variant::kRelation) {
    static const char* head_names[4] = {"head_s1", "head_s2", "head_rp",
                                        "head_rc"};
    for (std::size_t i = 0; i < heads_.size(); ++i) {
      push_conv(head_names[i], heads_[i]);
    }
  } else {
    push_conv("head", heads_[0]);
  }
  return params;
}

std::int64_t UNet::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& [name, t] : named_parameters()) n += t.numel();
  return n;
}

}  // namespace relseg
