#include "relseg/trainer.hpp"

#include <cmath>
#include <fstream>

#include "relseg/adam.hpp"
#include "relseg/csv.hpp"
#include "relseg/error.hpp"

namespace relseg {

double lr_at_epoch(const TrainConfig& config, int epoch) {
  if (epoch < 0 || epoch >= config.epochs) {
    throw UsageError("lr_at_epoch: epoch " + std::to_string(epoch) +
                     " outside [0, " + std::to_string(config.epochs) + ")");
  }
  return config.initial_lr *
         std::pow(0.5, static_cast<double>(epoch / config.lr_halving_period));
}

void TrainLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string() + ": cannot open");
  const bool relation = !epochs.empty() && epochs.front().head_losses.size() == 4;
  if (relation) {
    csv::write_row(out, {"epoch", "lr", "total_loss", "loss_s1", "loss_s2",
                         "loss_rp", "loss_rc"});
  } else {
    csv::write_row(out, {"epoch", "lr", "total_loss"});
  }
  for (const EpochLog& e : epochs) {
    std::vector<std::string> fields = {std::to_string(e.epoch),
                                       csv::format_exact(e.lr),
                                       csv::format_fixed(e.total_loss)};
    for (double l : e.head_losses) fields.push_back(csv::format_fixed(l));
    csv::write_row(out, fields);
  }
  if (!out) throw IoError(path.string() + ": write failed");
}

namespace {

void validate_train_config(const TrainConfig& c) {
  if (c.epochs < 1 || c.batch_size < 1 || c.batches_per_epoch < 0) {
    throw ConfigError("train config: epochs and batch_size must be >= 1");
  }
  if (c.initial_lr <= 0.0) {
    throw ConfigError("train config: initial_lr must be positive");
  }
  if (c.lr_halving_period < 1) {
    throw ConfigError("train config: lr_halving_period must be >= 1");
  }
}

int resolve_batches_per_epoch(const TrainConfig& c, std::size_t train_size) {
  if (c.batches_per_epoch > 0) return c.batches_per_epoch;
  return static_cast<int>((train_size + c.batch_size - 1) /
                          static_cast<std::size_t>(c.batch_size));
}

// one optimizer owning the concatenated parameter vector
struct FlatOptimizer {
  std::vector<std::pair<std::string, Tensor>> params;
  std::vector<double> flat_params;
  std::vector<double> flat_grads;
  AdamState state;

  explicit FlatOptimizer(UNet& net, double lr)
      : params(net.named_parameters()) {
    std::size_t total = 0;
    for (const auto& [name, t] : params) total += t.data().size();
    flat_params.resize(total);
    flat_grads.resize(total);
    state = AdamState::create(total, lr);
  }

  void step(double lr) {
    std::size_t offset = 0;
    for (auto& [name, t] : params) {
      const auto d = t.data();
      const auto g = t.grad();
      std::copy(d.begin(), d.end(), flat_params.begin() + offset);
      std::copy(g.begin(), g.end(), flat_grads.begin() + offset);
      offset += d.size();
    }
    state.learning_rate = lr;
    adam_step(flat_params, flat_grads, state);
    offset = 0;
    for (auto& [name, t] : params) {
      auto d = t.data();
      std::copy(flat_params.begin() + offset,
                flat_params.begin() + offset + d.size(), d.begin());
      offset += d.size();
      t.zero_grad();
    }
  }
};

void check_finite(double value, const char* head, int epoch, int step) {
  if (!std::isfinite(value)) {
    throw NumericError("non-finite " + std::string(head) + " loss at epoch " +
                       std::to_string(epoch) + ", step " + std::to_string(step));
  }
}

}  // namespace

TrainLog train_relation(UNet& net, const Dataset& data,
                        std::span<const std::int64_t> train_ids,
                        const TrainConfig& config) {
  if (net.config().variant != Variant::kRelation) {
    throw UsageError("train_relation requires a relation-variant network");
  }
  validate_train_config(config);
  if (train_ids.empty()) throw UsageError("train_relation: empty training set");

  const int steps_per_epoch = resolve_batches_per_epoch(config, train_ids.size());
  Rng data_rng(mix_seed(config.seed, 0xda7a));
  FlatOptimizer opt(net, config.initial_lr);
  const auto& w = config.loss_head_weights;

  TrainLog log;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_at_epoch(config, epoch);
    double total_acc = 0.0;
    std::array<double, 4> head_acc{};
    for (int step = 0; step < steps_per_epoch; ++step) {
      const PairBatch batch =
          sample_pairs(data, train_ids, config.batch_size, data_rng);
      Tape tape;
      const ModelOutputs out = net.forward_relation(&tape, batch.x1, batch.x2);
      const Tensor losses[4] = {
          bce_with_logits(&tape, out.s1_logits, batch.s1),
          bce_with_logits(&tape, out.s2_logits, batch.s2),
          bce_with_logits(&tape, out.rp_logits, batch.rp),
          bce_with_logits(&tape, out.rc_logits, batch.rc),
      };
      static const char* head_names[4] = {"s1", "s2", "rp", "rc"};
      for (int i = 0; i < 4; ++i) {
        check_finite(losses[i].item(), head_names[i], epoch, step);
        head_acc[static_cast<std::size_t>(i)] += losses[i].item();
      }
      Tensor total = scale(&tape, losses[0], w[0]);
      for (int i = 1; i < 4; ++i) {
        total = add(&tape, total, scale(&tape, losses[i], w[static_cast<std::size_t>(i)]));
      }
      check_finite(total.item(), "total", epoch, step);
      total_acc += total.item();
      tape.backward(total);
      opt.step(lr);
    }
    EpochLog e;
    e.epoch = epoch;
    e.lr = lr;
    e.total_loss = total_acc / steps_per_epoch;
    for (double h : head_acc) e.head_losses.push_back(h / steps_per_epoch);
    log.epochs.push_back(std::move(e));
  }
  return log;
}

TrainLog train_vanilla(UNet& net, const Dataset& data,
                       std::span<const std::int64_t> train_ids,
                       const TrainConfig& config) {
  const Variant variant = net.config().variant;
  if (variant != Variant::kVanilla && variant != Variant::kVanillaDropout) {
    throw UsageError("train_vanilla requires a vanilla-family network");
  }
  validate_train_config(config);
  if (train_ids.empty()) throw UsageError("train_vanilla: empty training set");

  const int steps_per_epoch = resolve_batches_per_epoch(config, train_ids.size());
  Rng data_rng(mix_seed(config.seed, 0xda7a));
  // separate stream so rate-0 dropout runs match plain vanilla bit for bit
  Rng dropout_rng(mix_seed(config.seed, 0xd60b));
  FlatOptimizer opt(net, config.initial_lr);

  const int h = data.height, w = data.width;
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;

  TrainLog log;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_at_epoch(config, epoch);
    double total_acc = 0.0;
    for (int step = 0; step < steps_per_epoch; ++step) {
      Tensor x = Tensor::zeros({config.batch_size, 1, h, w});
      Tensor target = Tensor::zeros({config.batch_size, 1, h, w});
      for (int i = 0; i < config.batch_size; ++i) {
        const SampleRecord& s =
            data.by_id(train_ids[data_rng.below(train_ids.size())]);
        auto bits = s.mask.bits();
        for (std::int64_t k = 0; k < plane; ++k) {
          x.data()[i * plane + k] = s.image[static_cast<std::size_t>(k)];
          target.data()[i * plane + k] = bits[static_cast<std::size_t>(k)];
        }
      }
      Tape tape;
      const Tensor logits =
          variant == Variant::kVanilla
              ? net.forward_vanilla(&tape, x)
              : net.forward_dropout(&tape, x, true, dropout_rng);
      const Tensor loss = bce_with_logits(&tape, logits, target);
      check_finite(loss.item(), "bce", epoch, step);
      total_acc += loss.item();
      tape.backward(loss);
      opt.step(lr);
    }
    EpochLog e;
    e.epoch = epoch;
    e.lr = lr;
    e.total_loss = total_acc / steps_per_epoch;
    log.epochs.push_back(std::move(e));
  }
  return log;
}

}  // namespace relseg
