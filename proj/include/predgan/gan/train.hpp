#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "predgan/ad/adam.hpp"
#include "predgan/gan/model.hpp"

namespace predgan::gan {

struct TrainConfig {
  int epochs = 5000;
  std::size_t batch_size = 32;
  ad::AdamConfig generator_adam{};
  ad::AdamConfig discriminator_adam{};
  /// Minimise mean log(1 - D(G(z))) instead of -mean log D(G(z)).
  bool saturating_generator_loss = false;
  std::uint64_t seed = 0;
  /// Learning rates decay linearly from their configured value at epoch 1 to
  /// this fraction of it at the last epoch (1 keeps them constant).
  double final_lr_fraction = 1.0;
  /// Standard deviation of Gaussian noise added to every discriminator input,
  /// annealed linearly to zero over the run (0 disables).
  double instance_noise = 0.0;
  /// Weight gamma of the zero-centred gradient penalty
  /// (gamma / 2) * mean |d logit D(x) / dx|^2 on real windows (0 disables).
  double r1_penalty = 0.0;
  /// Write a checkpoint every this many epochs (0 disables).
  int checkpoint_interval = 0;
  std::filesystem::path checkpoint_dir;

  std::string digest() const;
};

struct EpochLoss {
  int epoch = 0;
  double discriminator = 0.0;  // mean over the epoch's batches
  double generator = 0.0;
};

struct TrainResult {
  std::vector<EpochLoss> history;
};

/// Alternating adversarial training: per batch, one discriminator step then
/// one generator step, each with a fresh standard-normal latent batch.
/// Throws Error naming the epoch and batch when a loss becomes non-finite.
TrainResult train(GanModel& model, std::span<const Window> dataset, const TrainConfig& cfg,
                  const std::function<void(const EpochLoss&)>& on_epoch = {});

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochLoss>& history);

}  // namespace predgan::gan
