#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "predgan/ad/checkpoint.hpp"
#include "predgan/ad/graph.hpp"
#include "predgan/gan/window.hpp"

namespace predgan::gan {

struct NetworkConfig {
  std::size_t n_z = 100;
  std::size_t rows = 10;  // time levels per window
  std::size_t cols = 17;  // POD coefficients plus model parameters
  std::vector<std::size_t> generator_hidden{256, 512};
  std::vector<std::size_t> discriminator_hidden{512, 256};
  double leaky_slope = 0.2;

  std::size_t window_size() const { return rows * cols; }
  std::string digest() const;
};

/// Dense generator z -> window (leaky-ReLU hidden layers, tanh output) and
/// discriminator window -> probability (leaky-ReLU hidden layers, sigmoid
/// output), held in one computation graph that shares the parameters between
/// inference and the adversarial losses.
class GanModel {
 public:
  explicit GanModel(NetworkConfig cfg, std::uint64_t seed = 0);

  const NetworkConfig& config() const { return cfg_; }

  /// G(z) as an [rows, cols] window.
  Window generate(std::span<const double> z);
  /// G applied to a batch of latents [B, n_z]; returns [B, rows * cols].
  ad::Tensor generate_batch(const ad::Tensor& z);
  /// Gradient of sum(cotangent * G(z)) with respect to z, at the z of the
  /// latest generate() call. `cotangent` has the window's shape.
  std::vector<double> pullback(const Window& cotangent) const;

  double discriminate(const Window& w);
  /// D applied to a batch [B, rows * cols]; returns B probabilities.
  std::vector<double> discriminate_batch(const ad::Tensor& x);

  std::vector<ad::Tensor*> generator_parameters();
  std::vector<ad::Tensor*> discriminator_parameters();

  ad::Checkpoint to_checkpoint() const;
  static GanModel from_checkpoint(const ad::Checkpoint& ckpt);

 private:
  friend class Trainer;

  struct Net {
    std::vector<ad::NodeId> weights;
    std::vector<ad::NodeId> biases;
  };

  // Appends the network applied to x. Pre-activations of every layer are
  // written to `pre` when it is given.
  ad::NodeId build_net(const Net& net, ad::NodeId x, bool tanh_output,
                       std::vector<ad::NodeId>* pre = nullptr);
  Net declare_net(const std::string& prefix, std::size_t in, const std::vector<std::size_t>& hidden,
                  std::size_t out);
  void initialise(std::uint64_t seed);
  std::vector<ad::NodeId> parameter_ids(const Net& net) const;

  NetworkConfig cfg_;
  ad::Graph graph_;
  Net gen_;
  Net disc_;
  ad::NodeId z_ = 0;
  ad::NodeId real_ = 0;
  ad::NodeId fake_ = 0;
  ad::NodeId fake_noise_ = 0;  // added to G(z) before D during training
  ad::NodeId d_real_ = 0;
  ad::NodeId d_fake_ = 0;
  ad::NodeId loss_d_ = 0;
  ad::NodeId loss_g_ = 0;      // -mean log D(G(z))
  ad::NodeId loss_g_sat_ = 0;  // mean log(1 - D(G(z)))
  ad::NodeId r1_weight_ = 0;
  ad::NodeId loss_d_r1_ = 0;   // loss_d_ + r1_weight * 0.5 * mean_b |d logit / d real_b|^2
};

}  // namespace predgan::gan
