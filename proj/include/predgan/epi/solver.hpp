#pragma once

#include <vector>

#include "predgan/epi/grid.hpp"
#include "predgan/epi/model.hpp"
#include "predgan/epi/state.hpp"
#include "predgan/epi/transport.hpp"

namespace predgan::epi {

struct SolverConfig {
  double picard_tol = 1e-8;  // relative update norm
  int picard_max_iterations = 50;
  double fbgs_tol = 1e-10;   // relative residual of the linearised system
  int fbgs_max_sweeps = 200;
  int fbgs_inner_sweeps = 4; // forward+backward sweeps per variable per block sweep
  double negative_tolerance = 1e-9;
  /// Implicit sub-steps taken between two stored time levels.
  int substeps = 32;
};

struct StepReport {
  int picard_iterations = 0;
  std::vector<double> picard_updates;  // relative update norm per iteration
  int linear_sweeps = 0;
};

/// One backward-Euler step of the two-group spatial SEIRS system.
///
/// The infection term S*I/N is linearised by Picard iteration with I/N taken
/// from the latest iterate. Each linearised system is solved by block
/// forward-backward Gauss-Seidel over the eight group/compartment variables,
/// with forward-backward Gauss-Seidel sweeps over the cells inside each block.
/// Diffusion uses the five-point stencil with zero flux across the domain
/// boundary and into cells a group may not enter.
///
/// Throws ConvergenceError when Picard or the linear solver stalls, and Error
/// when a compartment ends below -negative_tolerance.
StateField ext_seirs_step(const StateField& field, const Grid& grid, const EpiParams& params,
                          const TransportParams& transport, double dt, const SolverConfig& cfg,
                          StepReport* report = nullptr);

struct SimulationStats {
  int max_picard_iterations = 0;
  /// Every step's last three Picard updates were strictly decreasing.
  bool picard_tail_monotone = true;
  long total_substeps = 0;
};

struct Trajectory {
  std::vector<StateField> levels;  // n_steps + 1 entries, initial level first
  double dt = 0.0;
  SimulationStats stats;
};

/// Advances `initial` by n_steps stored levels of size dt, each made of
/// cfg.substeps implicit sub-steps.
Trajectory run_simulation(const Grid& grid, const EpiParams& params,
                          const TransportParams& transport, const StateField& initial, double dt,
                          int n_steps, const SolverConfig& cfg);

}  // namespace predgan::epi
