#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "relseg/rng.hpp"
#include "relseg/tensor.hpp"

namespace relseg {

enum class Variant { kVanilla, kRelation, kVanillaDropout };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

struct ModelConfig {
  int in_channels_per_image = 1;
  int base_channels = 8;
  int depth = 3;
  int input_h = 32;
  int input_w = 32;
  Variant variant = Variant::kRelation;
  double dropout_rate = 0.5;  // vanilla_dropout only

  // flat key=value block embedded in the checkpoint manifest; exact round-trip
  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);
};

struct ModelOutputs {
  // relation variant
  Tensor s1_logits, s2_logits, rp_logits, rc_logits;
  // vanilla variants
  Tensor s_logits;
};

// Encoder/decoder segmentation net with same-padded 3x3 convs, x2 max-pool
// downsampling and nearest-neighbour upsampling. The relation variant
// concatenates two input images and ends in four independent 1x1 heads fed
// by one shared trunk.
class UNet {
 public:
  UNet(const ModelConfig& config, std::uint64_t rng_seed);

  const ModelConfig& config() const { return config_; }

  ModelOutputs forward_relation(Tape* tape, const Tensor& x1,
                                const Tensor& x2) const;
  Tensor forward_vanilla(Tape* tape, const Tensor& x) const;
  // sample=true draws a fresh dropout mask from rng; sample=false is the
  // deterministic path
  Tensor forward_dropout(Tape* tape, const Tensor& x, bool sample,
                         Rng& rng) const;

  // fixed traversal order; shared handles, so writes reach the network
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::int64_t parameter_count() const;

 private:
  struct Conv {
    Tensor weight;
    Tensor bias;
    int padding = 1;
  };
  struct ConvBlock {
    Conv c1, c2;
  };
  struct DecoderLevel {
    Conv up;  // 3x3 conv after nearest upsample
    ConvBlock block;
  };

  Tensor trunk_forward(Tape* tape, const Tensor& input, bool dropout_sample,
                       Rng* rng) const;
  Tensor apply_head(Tape* tape, const Tensor& features, const Conv& head) const;
  void check_input(const Tensor& x, int expected_channels) const;

  ModelConfig config_;
  std::vector<ConvBlock> encoder_;
  ConvBlock bottleneck_;
  std::vector<DecoderLevel> decoder_;  // deepest level first
  std::vector<Conv> heads_;            // 1 (vanilla) or 4 (relation)
};

}  // namespace relseg
