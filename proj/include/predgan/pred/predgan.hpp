#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <vector>

#include "predgan/pred/generator.hpp"
#include "predgan/pred/latent_opt.hpp"

namespace predgan::pred {

using Levels = std::vector<std::vector<double>>;

/// Weights of the time-stepping functional. All quantities are in the
/// generator's normalized units.
struct PredLossConfig {
  std::vector<double> w_alpha;  // diagonal of W_alpha, one per POD coefficient
  std::vector<double> w_mu;     // diagonal of W_mu, one per model parameter
  double zeta_mu = 0.0;
  LatentOptConfig opt;

  /// Identity weights for n_alpha coefficients and n_mu parameters.
  static PredLossConfig identity(std::size_t n_alpha, std::size_t n_mu, double zeta_mu);
  void validate(std::size_t cols) const;
};

struct LossTerms {
  double alpha = 0.0;
  double mu = 0.0;
  double obs = 0.0;
  double total() const { return alpha + mu + obs; }
};

/// Weighted mismatch between window rows [first_row, first_row + alpha.size())
/// and the known levels. Adds dLoss/dwindow into `grad` when given.
LossTerms known_rows_loss(const ad::Tensor& window, std::size_t first_row, const Levels& alpha,
                          const Levels& mu, const PredLossConfig& cfg, ad::Tensor* grad = nullptr);

/// Time-stepping functional for the level after m - 1 known levels: rows
/// 0..m-2 of G(z) against the known (alpha, mu); row m - 1 is free.
double prediction_loss(WindowGenerator& gen, std::span<const double> z, const Levels& alpha,
                       const Levels& mu, const PredLossConfig& cfg);

/// Latest m - 1 accepted levels (normalized) and the warm-start latent.
struct PredictionState {
  std::deque<std::vector<double>> alpha;  // oldest first
  std::vector<double> z;
  std::size_t next_level = 0;  // index of the level predict_next produces
};

struct LevelReport {
  std::size_t level = 0;
  double initial_loss = 0.0;
  double loss = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct LevelResult {
  std::vector<double> alpha;     // accepted row m of G(z), normalized
  std::vector<double> mu;        // predicted mu of that row, normalized
  std::vector<double> z_start;   // latent the optimisation started from
  LatentResult latent;
  LevelReport report;
};

/// Predicts level state.next_level from the known levels in `state` and the
/// mu schedule (indexed by level), then appends it to the state.
LevelResult predict_next(WindowGenerator& gen, PredictionState& state, const Levels& mu_schedule,
                         const PredLossConfig& cfg);

struct RolloutConfig {
  PredLossConfig loss;
  int first_level_restarts = 4;
  std::uint64_t seed = 0;
};

struct RolloutResult {
  Levels alpha;       // normalized; the m - 1 initial levels first
  Levels mu;          // predicted mu rows, normalized; initial levels carry the schedule
  Levels latents;     // accepted latent per predicted level
  std::vector<LevelReport> reports;
  bool all_converged = true;
};

/// Marches from m - 1 initial levels to n_levels levels. The first level draws
/// `first_level_restarts` standard-normal latents and keeps the best.
RolloutResult rollout(WindowGenerator& gen, const Levels& initial_alpha, const Levels& mu_schedule,
                      std::size_t n_levels, const RolloutConfig& cfg);

void write_rollout_report_csv(const std::filesystem::path& path, const RolloutResult& result);

}  // namespace predgan::pred
