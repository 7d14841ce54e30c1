#include "predgan/gan/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "predgan/util/digest.hpp"
#include "predgan/util/error.hpp"

namespace predgan::gan {

std::string TrainConfig::digest() const {
  Digest d;
  d.update(static_cast<std::uint64_t>(epochs));
  d.update(static_cast<std::uint64_t>(batch_size));
  for (const auto* a : {&generator_adam, &discriminator_adam}) {
    d.update(a->lr);
    d.update(a->beta1);
    d.update(a->beta2);
    d.update(a->eps);
  }
  d.update(static_cast<std::uint64_t>(saturating_generator_loss));
  d.update(seed);
  d.update(final_lr_fraction);
  d.update(instance_noise);
  d.update(r1_penalty);
  return d.hex();
}

class Trainer {
 public:
  Trainer(GanModel& model, std::span<const Window> data, const TrainConfig& cfg)
      : model_(model), data_(data), cfg_(cfg), rng_(cfg.seed) {
    gen_ids_ = model_.parameter_ids(model_.gen_);
    disc_ids_ = model_.parameter_ids(model_.disc_);
    gen_params_ = model_.generator_parameters();
    disc_params_ = model_.discriminator_parameters();
    gen_state_ = ad::AdamState::zeros_like(gen_params_);
    disc_state_ = ad::AdamState::zeros_like(disc_params_);
  }

  TrainResult run(const std::function<void(const EpochLoss&)>& on_epoch) {
    TrainResult result;
    std::vector<std::size_t> order(data_.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t bs = std::max<std::size_t>(1, cfg_.batch_size);
    for (int epoch = 1; epoch <= cfg_.epochs; ++epoch) {
      const double progress =
          cfg_.epochs > 1 ? static_cast<double>(epoch - 1) / static_cast<double>(cfg_.epochs - 1) : 0.0;
      const double lr_scale = 1.0 + (cfg_.final_lr_fraction - 1.0) * progress;
      gen_adam_ = cfg_.generator_adam;
      disc_adam_ = cfg_.discriminator_adam;
      gen_adam_.lr *= lr_scale;
      disc_adam_.lr *= lr_scale;
      noise_ = cfg_.instance_noise * (1.0 - progress);
      std::shuffle(order.begin(), order.end(), rng_);
      double ld_sum = 0.0;
      double lg_sum = 0.0;
      std::size_t batches = 0;
      for (std::size_t start = 0; start < order.size(); start += bs) {
        const std::size_t count = std::min(bs, order.size() - start);
        const double ld = discriminator_step(order, start, count);
        const double lg = generator_step(count);
        if (!std::isfinite(ld) || !std::isfinite(lg)) {
          throw Error("non-finite GAN loss at epoch " + std::to_string(epoch) + ", batch " +
                      std::to_string(batches) + " (L_D=" + std::to_string(ld) +
                      ", L_G=" + std::to_string(lg) + ")");
        }
        ld_sum += ld;
        lg_sum += lg;
        ++batches;
      }
      EpochLoss loss{epoch, ld_sum / static_cast<double>(batches),
                     lg_sum / static_cast<double>(batches)};
      result.history.push_back(loss);
      if (on_epoch) on_epoch(loss);
      if (cfg_.checkpoint_interval > 0 && epoch % cfg_.checkpoint_interval == 0) {
        write_checkpoint(epoch);
      }
    }
    return result;
  }

 private:
  ad::Tensor latent_batch(std::size_t count) {
    ad::Tensor z({count, model_.cfg_.n_z});
    for (double& v : z.data()) v = normal_(rng_);
    return z;
  }

  double discriminator_step(const std::vector<std::size_t>& order, std::size_t start,
                            std::size_t count) {
    const std::size_t d = model_.cfg_.window_size();
    ad::Tensor real({count, d});
    for (std::size_t i = 0; i < count; ++i) {
      const Window& w = data_[order[start + i]];
      if (w.size() != d) throw ShapeError("training window has the wrong size");
      std::copy(w.data().begin(), w.data().end(), real.data().begin() + static_cast<std::ptrdiff_t>(i * d));
    }
    auto& g = model_.graph_;
    if (noise_ > 0.0) {
      for (double& v : real.data()) v += noise_ * normal_(rng_);
    }
    g.set_input(model_.real_, std::move(real));
    g.set_input(model_.z_, latent_batch(count));
    set_fake_noise(count);
    const bool penalised = cfg_.r1_penalty > 0.0;
    const ad::NodeId loss_id = penalised ? model_.loss_d_r1_ : model_.loss_d_;
    if (penalised) g.set_input(model_.r1_weight_, ad::Tensor::scalar(cfg_.r1_penalty));
    const ad::NodeId target[] = {loss_id};
    g.forward(target);
    const double loss = g.value(model_.loss_d_).item();
    auto grads = g.backward(loss_id, disc_ids_);
    ad::adam_step(disc_params_, grads, disc_state_, disc_adam_);
    return loss;
  }

  double generator_step(std::size_t count) {
    auto& g = model_.graph_;
    g.set_input(model_.z_, latent_batch(count));
    set_fake_noise(count);
    const ad::NodeId loss_id = cfg_.saturating_generator_loss ? model_.loss_g_sat_ : model_.loss_g_;
    const ad::NodeId target[] = {loss_id};
    g.forward(target);
    const double loss = g.value(loss_id).item();
    auto grads = g.backward(loss_id, gen_ids_);
    ad::adam_step(gen_params_, grads, gen_state_, gen_adam_);
    return loss;
  }

  void set_fake_noise(std::size_t count) {
    ad::Tensor n({count, model_.cfg_.window_size()});
    if (noise_ > 0.0) {
      for (double& v : n.data()) v = noise_ * normal_(rng_);
    }
    model_.graph_.set_input(model_.fake_noise_, std::move(n));
  }

  void write_checkpoint(int epoch) const {
    std::filesystem::create_directories(cfg_.checkpoint_dir);
    auto ckpt = model_.to_checkpoint();
    ckpt.metadata["train.config_digest"] = cfg_.digest();
    ckpt.metadata["train.epoch"] = std::to_string(epoch);
    char name[64];
    std::snprintf(name, sizeof name, "gan_epoch_%06d.ckpt", epoch);
    ckpt.save(cfg_.checkpoint_dir / name);
  }

  GanModel& model_;
  std::span<const Window> data_;
  const TrainConfig& cfg_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::vector<ad::NodeId> gen_ids_;
  std::vector<ad::NodeId> disc_ids_;
  std::vector<ad::Tensor*> gen_params_;
  std::vector<ad::Tensor*> disc_params_;
  ad::AdamState gen_state_;
  ad::AdamState disc_state_;
  ad::AdamConfig gen_adam_;
  ad::AdamConfig disc_adam_;
  double noise_ = 0.0;
};

TrainResult train(GanModel& model, std::span<const Window> dataset, const TrainConfig& cfg,
                  const std::function<void(const EpochLoss&)>& on_epoch) {
  if (cfg.epochs > 0 && dataset.empty()) throw Error("train: dataset is empty");
  Trainer trainer(model, dataset, cfg);
  return trainer.run(on_epoch);
}

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochLoss>& history) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.precision(17);
  os << "epoch,loss_discriminator,loss_generator\n";
  for (const auto& h : history) os << h.epoch << ',' << h.discriminator << ',' << h.generator << '\n';
}

}  // namespace predgan::gan
