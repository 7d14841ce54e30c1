#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "predgan/da/assimilate.hpp"
#include "predgan/epi/grid.hpp"
#include "predgan/epi/snapshot_io.hpp"
#include "predgan/gan/model.hpp"
#include "predgan/pipeline/config.hpp"
#include "predgan/pred/predgan.hpp"
#include "predgan/rom/normalization.hpp"
#include "predgan/rom/pod.hpp"

namespace predgan::pipeline {

namespace fs = std::filesystem;

/// Artifact locations below an output directory.
struct Layout {
  fs::path root;
  fs::path ensemble() const { return root / "ensemble"; }
  fs::path ensemble_manifest() const { return ensemble() / "manifest.json"; }
  fs::path train() const { return root / "train"; }
  fs::path predict() const { return root / "predict"; }
  fs::path assimilate() const { return root / "assimilate"; }
  fs::path plots() const { return root / "plots"; }
};

/// One high-fidelity run of the configured town.
epi::SnapshotFile simulate_run(const ExperimentConfig& cfg, double r0_home, double r0_mobile);

struct MemberRecord {
  int index = 0;
  double r0_home = 0.0;
  double r0_mobile = 0.0;
  std::string file;  // relative to the ensemble directory
  std::string digest;
  bool ok = false;
  std::string error;
};

struct EnsembleManifest {
  std::string config_digest;
  std::uint64_t seed = 0;
  std::vector<MemberRecord> members;

  std::string digest() const;
  void save(const fs::path& path) const;
  static EnsembleManifest load(const fs::path& path);
};

/// The ensemble's (R0 home, R0 mobile) pairs, drawn from U(r0_min, r0_max)^2
/// with the config seed.
std::vector<std::array<double, 2>> sample_r0_pairs(const ExperimentConfig& cfg);

/// Samples R0 pairs with sample_r0_pairs and simulates every member,
/// `threads` members at a time. A failing member is recorded, not fatal.
EnsembleManifest generate_ensemble(const ExperimentConfig& cfg, const Layout& out, int threads = 1);

/// POD basis, coefficient normalizer and generator, plus the time layout of
/// the surrogate (one surrogate level = `stride` stored levels).
class Surrogate {
 public:
  Surrogate(rom::PodBasis basis, rom::Normalizer normalizer, gan::GanModel model,
            std::size_t stride);

  static Surrogate load(const Layout& in);

  const rom::PodBasis& basis() const { return basis_; }
  const rom::Normalizer& normalizer() const { return normalizer_; }
  gan::GanModel& model() { return model_; }
  std::size_t n_alpha() const { return basis_.n_pod(); }
  std::size_t window() const { return model_.config().rows; }
  std::size_t stride() const { return stride_; }

  /// Normalized POD coefficients of a physical state.
  std::vector<double> encode(std::span<const double> u) const;
  /// Physical state of normalized coefficients.
  std::vector<double> decode(std::span<const double> alpha) const;
  std::vector<double> encode_mu(std::span<const double> r0) const;
  std::vector<double> decode_mu(std::span<const double> mu) const;

  /// Stored levels start, start + stride, ... of a run, encoded.
  pred::Levels encode_run(const epi::SnapshotFile& run, std::size_t start = 0) const;

 private:
  rom::PodBasis basis_;
  rom::Normalizer normalizer_;
  gan::GanModel model_;
  std::size_t stride_;
};

struct TrainSummary {
  double captured_variance = 0.0;
  std::size_t snapshots = 0;
  std::size_t windows = 0;
  std::vector<std::string> warnings;
  std::vector<gan::EpochLoss> history;
};

/// Builds the POD basis from every stride-th level of every good member,
/// trains the GAN on the windows and writes the surrogate artifacts.
TrainSummary train_surrogate(const ExperimentConfig& cfg, const Layout& io,
                             const std::function<void(const gan::EpochLoss&)>& on_epoch = {});

struct Prediction {
  std::array<double, 2> r0{};
  std::size_t start_level = 0;              // stored level of surrogate level 0
  std::size_t stride = 1;
  pred::RolloutResult rollout;
  std::vector<std::vector<double>> states;  // physical, one per surrogate level
  std::vector<std::vector<double>> truth;   // reference states at the same levels
  std::vector<double> relative_error;       // per surrogate level; empty without truth
  double mean_relative_error = 0.0;         // over the predicted levels
};

/// Rolls the surrogate out from the first m - 1 surrogate levels of
/// `reference` (from cfg.predict.start_level) with the given R0 pair. When
/// `reference` is the ground truth, the relative L2 error of every level is
/// reported.
Prediction predict(const ExperimentConfig& cfg, Surrogate& surrogate,
                   const epi::SnapshotFile& reference, std::array<double, 2> r0, bool with_truth);

/// Writes trajectory.snap, truth.snap (when the reference is the truth),
/// report.csv and summary.json.
void write_prediction(const fs::path& dir, const ExperimentConfig& cfg, const Surrogate& surrogate,
                      const Prediction& p, const std::string& provenance);

/// Observation cells, fields and cadence on the surrogate's time axis.
da::ObservationPlan observation_plan(const ExperimentConfig& cfg, const epi::Grid& grid,
                                     std::size_t n_levels, std::size_t stride);

struct Assimilation {
  da::ObservationSet observations;
  da::AssimilationResult result;
  std::size_t n_levels = 0;
  pred::Levels truth_alpha;                      // encoded truth levels
  std::vector<std::vector<double>> truth_states;  // truth at the surrogate levels
};

/// Time average over the levels of a physical (R0 home, R0 mobile) history.
std::array<double, 2> time_average(const std::vector<std::vector<double>>& mu);

/// Twin experiment: simulates the truth, samples noisy observations, starts
/// from a run with the guessed R0 pair and assimilates. When `observations`
/// is given it replaces the sampled set (the truth run is still used for
/// reporting).
Assimilation assimilate(const ExperimentConfig& cfg, Surrogate& surrogate,
                        std::optional<da::ObservationSet> observations = std::nullopt);

/// Writes observations.csv, diagnostics.csv, mu_history.csv, initial.snap,
/// final.snap, truth.snap and summary.json.
void write_assimilation(const fs::path& dir, const ExperimentConfig& cfg, Surrogate& surrogate,
                        const Assimilation& a, const std::string& provenance);

/// Figure tables export_plots knows how to write.
const std::vector<std::string>& plot_names();

/// Long-format tables (figure, series, x, value) for the requested figures
/// (all of plot_names() when empty); the convergence table has one row per
/// outer iteration instead. Throws IoError naming the figure and the missing
/// artifact. Returns the files written.
std::vector<fs::path> export_plots(const ExperimentConfig& cfg, const Layout& io,
                                   std::size_t cell, std::vector<std::string> figures = {});

}  // namespace predgan::pipeline
