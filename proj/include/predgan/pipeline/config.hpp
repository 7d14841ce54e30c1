#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "predgan/da/assimilate.hpp"
#include "predgan/epi/model.hpp"
#include "predgan/epi/solver.hpp"
#include "predgan/epi/transport.hpp"
#include "predgan/gan/model.hpp"
#include "predgan/gan/train.hpp"
#include "predgan/pred/latent_opt.hpp"

namespace predgan::pipeline {

struct EpiConfig {
  double population_per_home_cell = 2000.0;
  double exposed_fraction = 0.001;
  double latency_days = 4.5;
  double infectious_days = 7.0;
  double immunity_days = 365.0;
  double lifespan_years = 60.0;  // births and deaths balance at 1 / lifespan
  double r0_min = 0.0;
  double r0_max = 20.0;
  double mobile_diffusion = 1e4;  // m^2/s, every compartment of the mobile group
  double home_diffusion = 0.0;
  double exchange_rate_per_day = 4.0;
  bool exchange_in_home_region_only = true;
  double dt = 4000.0;
  int n_steps = 983;
  int substeps = 32;

  epi::EpiParams params(double r0_home, double r0_mobile) const;
  epi::TransportParams transport() const;
  epi::SolverConfig solver() const;
};

struct EnsembleConfig {
  int members = 40;
};

struct SurrogateConfig {
  std::size_t n_pod = 15;
  std::size_t window = 10;
  std::size_t stride = 2;
  gan::NetworkConfig network;  // rows and cols are derived from window, n_pod
  gan::TrainConfig training;
  /// Keep every k-th training window (1 keeps all).
  std::size_t window_subsample = 1;
};

struct PredictConfig {
  double zeta_mu_hat = 1e-2;
  pred::LatentOptConfig optimizer;
  int first_level_restarts = 4;
  /// Stored level of the reference run the m - 1 initial levels start at.
  std::size_t start_level = 0;
  std::array<double, 2> r0{7.7, 17.4};
};

struct ObservationConfig {
  std::vector<int> regions{2, 3, 4, 5, 6};  // observe each region's bottom-left cell
  /// "group:compartment" with group home, mobile or all (sum over groups).
  std::vector<std::string> fields{"home:S",   "home:E",   "home:I",   "home:R",
                                  "mobile:S", "mobile:E", "mobile:I", "mobile:R"};
  double every_days = 0.0;  // 0 observes every surrogate level
  double noise = 0.05;
  double weight = 1.0;
};

struct AssimilateConfig {
  std::array<double, 2> truth_r0{7.7, 17.4};
  std::array<double, 2> guess_r0{6.5, 5.7};
  /// Surrogate levels assimilated (0 = the whole run).
  std::size_t levels = 0;
  da::WeightConfig weights;
  da::RelaxationConfig relaxation;
  da::MuWeightAdaptation adaptation;
  bool anchor_previous_level = false;
  ObservationConfig observations;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  EpiConfig epi;
  EnsembleConfig ensemble;
  SurrogateConfig surrogate;
  PredictConfig predict;
  AssimilateConfig assimilate;

  std::string digest() const;
  void validate() const;
};

/// Named starting points: "default" (full-scale town experiment), "smoke"
/// (seconds-long end-to-end run) and "desk" (the scaled experiment used for
/// acceptance on one core).
ExperimentConfig preset(const std::string& name);
const std::vector<std::string>& preset_names();

nlohmann::json to_json(const ExperimentConfig& cfg);
/// Missing keys keep their defaults; unknown keys are errors.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const ExperimentConfig& cfg);

}  // namespace predgan::pipeline
