#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "relseg/synth.hpp"
#include "relseg/unet.hpp"

namespace relseg {

struct TrainConfig {
  int epochs = 100;
  double initial_lr = 1e-4;
  int lr_halving_period = 20;  // epochs between halvings
  int batch_size = 8;
  int batches_per_epoch = 0;  // 0 resolves to ceil(|train| / batch_size)
  std::uint64_t seed = 0;
  // s1, s2, rp, rc order; relation variant only
  std::array<double, 4> loss_head_weights{1.0, 1.0, 1.0, 1.0};
};

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double total_loss = 0.0;
  std::vector<double> head_losses;  // four entries for relation, none otherwise
};

struct TrainLog {
  std::vector<EpochLog> epochs;

  // relation: epoch,lr,total_loss,loss_s1,loss_s2,loss_rp,loss_rc
  // vanilla variants: epoch,lr,total_loss
  void write_csv(const std::filesystem::path& path) const;
};

// initial_lr halved every lr_halving_period epochs (0-based epoch index)
double lr_at_epoch(const TrainConfig& config, int epoch);

TrainLog train_relation(UNet& net, const Dataset& data,
                        std::span<const std::int64_t> train_ids,
                        const TrainConfig& config);

// vanilla and vanilla_dropout; dropout sampling is active during training
TrainLog train_vanilla(UNet& net, const Dataset& data,
                       std::span<const std::int64_t> train_ids,
                       const TrainConfig& config);

}  // namespace relseg
