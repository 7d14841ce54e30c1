#pragma once

#include <functional>
#include <vector>

#include "predgan/ad/adam.hpp"
#include "predgan/pred/generator.hpp"

namespace predgan::pred {

struct LatentOptConfig {
  int max_iterations = 500;
  int window = 20;
  /// Stops when max-min of the loss over the last `window` iterations is below
  /// rel_tol * (1 + best loss).
  double rel_tol = 1e-6;
  ad::AdamConfig adam{.lr = 0.03, .beta1 = 0.9, .beta2 = 0.999, .eps = 1e-8};
};

/// Loss of a generated window; writes dLoss/dwindow into `grad` (same shape).
using WindowLoss = std::function<double(const ad::Tensor& window, ad::Tensor& grad)>;

struct LatentResult {
  std::vector<double> z;          // best iterate
  ad::Tensor window;              // G(z) at the best iterate
  double loss = 0.0;              // loss at the best iterate
  double initial_loss = 0.0;      // loss at the starting latent
  int iterations = 0;             // gradient steps taken
  bool converged = false;         // stopping rule met before max_iterations
};

/// Adam descent on z through the generator, keeping the best iterate seen.
LatentResult optimize_latent(WindowGenerator& gen, std::vector<double> z0, const WindowLoss& loss,
                             const LatentOptConfig& cfg);

}  // namespace predgan::pred
