#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "predgan/da/observations.hpp"
#include "predgan/pred/predgan.hpp"

namespace predgan::da {

using pred::Levels;
using pred::LossTerms;

/// Weighted sum of squared observation residuals of the levels
/// first_level .. first_level + alpha.size() - 1 (normalized coefficients).
double observation_loss(const Levels& alpha, std::size_t first_level,
                        const ObservationOperator& obs, double zeta_obs);

/// Known-level mismatch of window rows [first_row, first_row + alpha.size())
/// plus the observation mismatch of the same rows, row r standing for level
/// first_level + r - first_row. The observation term is skipped when obs is
/// null or zeta_obs is zero. Adds dLoss/dwindow into `grad` when given.
LossTerms da_window_loss(const ad::Tensor& window, std::size_t first_row, std::size_t first_level,
                         const Levels& alpha, const Levels& mu, const ObservationOperator* obs,
                         const pred::PredLossConfig& cfg, double zeta_obs,
                         ad::Tensor* grad = nullptr);

/// Forward functional for level n: rows 0..m-2 hold the known levels
/// n-m+1..n-1 (first_level = n-m+1); row m-1 is free.
double da_forward_loss(pred::WindowGenerator& gen, std::span<const double> z, const Levels& alpha,
                       const Levels& mu, std::size_t first_level, const ObservationOperator* obs,
                       const pred::PredLossConfig& cfg, double zeta_obs);

/// Backward functional for level n: rows 1..m-1 hold the known levels
/// n+1..n+m-1 (first_level = n+1); row 0 is free.
double da_backward_loss(pred::WindowGenerator& gen, std::span<const double> z, const Levels& alpha,
                        const Levels& mu, std::size_t first_level, const ObservationOperator* obs,
                        const pred::PredLossConfig& cfg, double zeta_obs);

struct WeightConfig {
  double zeta_obs_hat = 10.0;
  double zeta_mu_prediction = 1e-2;  // prediction-mode marches
  double zeta_mu_start = 1e-4;       // assimilation marches, outer iteration 1
  double zeta_mu_growth = 1.2;       // per outer iteration
  double delta_alpha = 2.0;          // normalized coefficient range
  double delta_mu = 2.0;             // normalized parameter range
  double delta_u = 0.0;              // physical state range of the training ensemble
};

/// zeta_hat for outer iteration j >= 1 of the assimilation marches.
double zeta_mu_hat(const WeightConfig& cfg, int j);

struct DaWeights {
  /// zeta_obs_hat (da/du)^2 (m-1) sum(W_alpha); divided by a window's
  /// observation weight sum to give its zeta_obs.
  double zeta_obs_numerator = 0.0;
  /// (da/dmu)^2 sum(W_alpha) / sum(W_mu); multiplied by zeta_hat.
  double zeta_mu_factor = 0.0;

  /// Zero for a window without observations (its observation term vanishes).
  double zeta_obs(double window_weight_sum) const;
  double zeta_mu(double zeta_hat) const { return zeta_hat * zeta_mu_factor; }
};

/// Throws when a denominator (range, weight sum) is zero.
DaWeights compute_weights(const WeightConfig& cfg, const pred::PredLossConfig& loss,
                          const ObservationOperator& obs, std::size_t m);

struct RelaxationConfig {
  double shrink = 0.5;
  double growth = 1.5;
  double converged_below = 0.01;
  int max_outer_iterations = 50;
};

/// Relaxation factor driven by the average observation mismatch of each
/// forward-backward pair.
struct RelaxationState {
  double r = 1.0;
  int iteration = 0;
  std::optional<double> reference;  // mismatch of the last accepted pair

  /// Records pair j = iteration + 1. A mismatch above the reference halves r
  /// and rejects the pair; otherwise r grows (capped at 1) and the pair
  /// becomes the reference. Returns whether the pair was accepted.
  bool record(double mismatch, const RelaxationConfig& cfg);
  bool converged(const RelaxationConfig& cfg) const { return r < cfg.converged_below; }
};

/// z = (1 - r) z_prev + r z_hat
std::vector<double> relax(std::span<const double> z_prev, std::span<const double> z_hat, double r);

/// Levels of one march. Index = time level.
struct Trajectory {
  Levels alpha;     // normalized coefficients
  Levels mu_known;  // mu used as known by the functionals
  Levels mu_pred;   // mu of the accepted generator rows
  Levels latents;   // latent that produced each level (empty if none)
};

enum class Direction { Forward, Backward };

struct MarchSettings {
  Direction direction = Direction::Forward;
  double zeta_mu = 0.0;
  bool with_observations = true;
  /// Copy each predicted mu into mu_known so later windows treat it as known.
  bool promote_mu = true;
  double r = 1.0;
  /// Latents of the previous march in this direction, by level. Null or an
  /// empty entry disables relaxation for that level.
  const Levels* anchors = nullptr;
  /// Relax towards the latent of the previously produced level of this march
  /// instead of the same level of the previous march.
  bool anchor_previous_level = false;
};

struct MarchReport {
  std::vector<pred::LevelReport> levels;
  LossTerms terms;  // summed over produced levels at the accepted windows
  bool all_converged = true;
};

/// Steps through every level not covered by the starting window: forward
/// from level m-1 to the end, or backward from level N-m down to 0 (the
/// level produced at step t is N-1-(m-1)-t). `z_start` seeds the first
/// latent optimisation; each later one warm-starts from the previous level.
MarchReport march(pred::WindowGenerator& gen, Trajectory& traj, const ObservationOperator* obs,
                  const DaWeights& weights, const pred::PredLossConfig& loss,
                  const MarchSettings& settings, std::vector<double> z_start);

/// Optional adaptation of the W_mu diagonal between outer iterations.
struct MuWeightAdaptation {
  bool enabled = false;
  double raise_above = 0.1;  // mean |change| as a fraction of delta_mu
  double lower_below = 0.01;
  double factor = 2.0;
  double floor = 0.25;
  double cap = 4.0;
};

struct AssimilationConfig {
  pred::PredLossConfig loss;  // zeta_mu is set per march from `weights`
  WeightConfig weights;
  RelaxationConfig relaxation;
  MuWeightAdaptation adaptation;
  int first_level_restarts = 4;
  bool anchor_previous_level = false;
  std::uint64_t seed = 0;
};

struct OuterIteration {
  int j = 0;
  double r = 1.0;
  double zeta_mu_hat = 0.0;
  double mismatch = 0.0;
  std::optional<double> reference;
  bool accepted = false;
  LossTerms forward_terms;   // per produced level
  LossTerms backward_terms;  // per produced level
};

struct AssimilationResult {
  Trajectory initial;      // prediction march from the guess
  Trajectory assimilated;  // last accepted pair, after its backward march
  Trajectory final;        // prediction march with the assimilated mu
  std::vector<OuterIteration> history;
  double initial_mismatch = 0.0;  // average over the initial prediction march
  double final_mismatch = 0.0;    // average over the final prediction march
  bool converged = false;
};

/// Forward-backward assimilation of `obs` starting from m - 1 normalized
/// levels and a constant normalized mu guess.
AssimilationResult assimilate(pred::WindowGenerator& gen, const Levels& initial_alpha,
                              const std::vector<double>& mu_guess, std::size_t n_levels,
                              const ObservationOperator& obs, const AssimilationConfig& cfg);

void write_diagnostics_csv(const std::filesystem::path& path, const AssimilationResult& result);

/// level, one column per parameter name.
void write_mu_history_csv(const std::filesystem::path& path, const Levels& mu,
                          const std::vector<std::string>& names);

}  // namespace predgan::da
