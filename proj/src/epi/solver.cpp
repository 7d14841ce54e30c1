#include "predgan/epi/solver.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "predgan/util/error.hpp"

namespace predgan::epi {

namespace {

constexpr double kEmptyCell = 1e-12;

struct Neighbours {
  std::array<std::size_t, 4> cell{};
  int count = 0;
};

// Everything about one linearised backward-Euler system that does not change
// during the linear solve.
class LinearStep {
 public:
  LinearStep(const StateField& old_field, const Grid& grid, const EpiParams& params,
             const TransportParams& transport, double dt)
      : n_(grid.n_cells()), old_(old_field.values()), inv_dt_(1.0 / dt) {
    const auto rates_at = transport.exchange(old_field.time() + dt);
    for (int g = 0; g < kGroups; ++g) {
      rates_[g] = params.rates(static_cast<Group>(g));
      neighbours_[g].resize(n_);
      auto accessible = [&](std::size_t c) {
        return g == static_cast<int>(Group::Home) ? grid.is_home(c) : grid.is_travel(c);
      };
      for (std::size_t c = 0; c < n_; ++c) {
        if (!accessible(c)) continue;
        const std::size_t x = grid.x_of(c);
        const std::size_t y = grid.y_of(c);
        auto link = [&](std::size_t nb) {
          if (accessible(nb)) neighbours_[g][c].cell[neighbours_[g][c].count++] = nb;
        };
        if (x > 0) link(grid.index(x - 1, y));
        if (x + 1 < grid.nx) link(grid.index(x + 1, y));
        if (y > 0) link(grid.index(x, y - 1));
        if (y + 1 < grid.ny) link(grid.index(x, y + 1));
      }
      for (int k = 0; k < kCompartments; ++k) {
        diff_[g][k] = transport.diffusion[g][k] / (grid.cell_size * grid.cell_size);
      }
    }
    leave_.assign(kGroups * n_, 0.0);
    for (std::size_t c = 0; c < n_; ++c) {
      if (transport.exchange_in_home_region_only && !grid.is_home(c)) continue;
      leave_[static_cast<int>(Group::Home) * n_ + c] = rates_at.home_to_mobile;
      leave_[static_cast<int>(Group::Mobile) * n_ + c] = rates_at.mobile_to_home;
    }
    // Cells that can carry people of a group during this step.
    for (int g = 0; g < kGroups; ++g) {
      for (std::size_t c = 0; c < n_; ++c) {
        bool active = neighbours_[g][c].count > 0 || leave_[g * n_ + c] > 0.0 ||
                      leave_[(1 - g) * n_ + c] > 0.0;
        for (int k = 0; k < kCompartments && !active; ++k) active = old_[slot(g, k, c)] != 0.0;
        if (active) active_[g].push_back(c);
      }
    }
    infection_.assign(kGroups * n_, 0.0);
    double b2 = 0.0;
    for (double v : old_) b2 += v * inv_dt_ * v * inv_dt_;
    rhs_norm_ = std::sqrt(b2);
  }

  std::size_t slot(int g, int k, std::size_t c) const {
    return static_cast<std::size_t>(g * kCompartments + k) * n_ + c;
  }

  double rhs_norm() const { return rhs_norm_; }

  // Lags I/N at the given iterate.
  void linearise(const std::vector<double>& u) {
    for (int g = 0; g < kGroups; ++g) {
      for (std::size_t c : active_[g]) {
        double n = 0.0;
        for (int k = 0; k < kCompartments; ++k) n += u[slot(g, k, c)];
        infection_[g * n_ + c] =
            n > kEmptyCell ? rates_[g].beta * u[slot(g, 2, c)] / n : 0.0;
      }
    }
  }

  double diagonal(int g, int k, std::size_t c) const {
    const SeirsRates& r = rates_[g];
    double d = inv_dt_ + leave_[g * n_ + c] + diff_[g][k] * neighbours_[g][c].count;
    switch (k) {
      case 0: d += infection_[g * n_ + c] + r.nu - r.eta; break;
      case 1: d += r.sigma + r.nu; break;
      case 2: d += r.gamma + r.nu; break;
      default: d += r.xi + r.nu; break;
    }
    return d;
  }

  // Right-hand side of row (g, k, c) with all other unknowns at their
  // current values.
  double source(const std::vector<double>& u, int g, int k, std::size_t c) const {
    const SeirsRates& r = rates_[g];
    double s = old_[slot(g, k, c)] * inv_dt_;
    switch (k) {
      case 0:
        s += r.eta * (u[slot(g, 1, c)] + u[slot(g, 2, c)] + u[slot(g, 3, c)]) +
             r.xi * u[slot(g, 3, c)];
        break;
      case 1: s += infection_[g * n_ + c] * u[slot(g, 0, c)]; break;
      case 2: s += r.sigma * u[slot(g, 1, c)]; break;
      default: s += r.gamma * u[slot(g, 2, c)]; break;
    }
    s += leave_[(1 - g) * n_ + c] * u[slot(1 - g, k, c)];
    const double d = diff_[g][k];
    if (d != 0.0) {
      const Neighbours& nb = neighbours_[g][c];
      for (int i = 0; i < nb.count; ++i) s += d * u[slot(g, k, nb.cell[i])];
    }
    return s;
  }

  // Forward-backward Gauss-Seidel on one variable's spatial system.
  void relax_variable(std::vector<double>& u, int g, int k, int sweeps) const {
    const auto& cells = active_[g];
    const bool coupled_in_space = diff_[g][k] != 0.0;
    const int passes = coupled_in_space ? sweeps : 1;
    for (int s = 0; s < passes; ++s) {
      for (std::size_t c : cells) u[slot(g, k, c)] = source(u, g, k, c) / diagonal(g, k, c);
      if (!coupled_in_space) break;
      for (auto it = cells.rbegin(); it != cells.rend(); ++it) {
        u[slot(g, k, *it)] = source(u, g, k, *it) / diagonal(g, k, *it);
      }
    }
  }

  double residual_norm(const std::vector<double>& u) const {
    double r2 = 0.0;
    for (int g = 0; g < kGroups; ++g) {
      for (int k = 0; k < kCompartments; ++k) {
        for (std::size_t c : active_[g]) {
          const double r = diagonal(g, k, c) * u[slot(g, k, c)] - source(u, g, k, c);
          r2 += r * r;
        }
      }
    }
    return std::sqrt(r2);
  }

 private:
  std::size_t n_;
  const std::vector<double>& old_;
  double inv_dt_;
  std::array<SeirsRates, kGroups> rates_{};
  std::array<std::vector<Neighbours>, kGroups> neighbours_;
  std::array<std::array<double, kCompartments>, kGroups> diff_{};
  std::array<std::vector<std::size_t>, kGroups> active_;
  std::vector<double> leave_;
  std::vector<double> infection_;
  double rhs_norm_ = 0.0;
};

// Block forward-backward Gauss-Seidel over the eight variables.
int solve_linear(const LinearStep& step, std::vector<double>& u, const SolverConfig& cfg) {
  const double target = cfg.fbgs_tol * step.rhs_norm();
  for (int sweep = 1; sweep <= cfg.fbgs_max_sweeps; ++sweep) {
    for (int v = 0; v < kFieldsPerCell; ++v) {
      step.relax_variable(u, v / kCompartments, v % kCompartments, cfg.fbgs_inner_sweeps);
    }
    for (int v = kFieldsPerCell; v-- > 0;) {
      step.relax_variable(u, v / kCompartments, v % kCompartments, cfg.fbgs_inner_sweeps);
    }
    const double res = step.residual_norm(u);
    if (res <= target) return sweep;
    if (sweep == cfg.fbgs_max_sweeps) {
      throw ConvergenceError("block FBGS did not converge in " + std::to_string(sweep) +
                                 " sweeps",
                             res / std::max(step.rhs_norm(), kEmptyCell));
    }
  }
  return cfg.fbgs_max_sweeps;
}

double norm2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

StateField ext_seirs_step(const StateField& field, const Grid& grid, const EpiParams& params,
                          const TransportParams& transport, double dt, const SolverConfig& cfg,
                          StepReport* report) {
  if (!(dt > 0.0)) throw Error("ext_seirs_step: dt must be positive");
  if (field.n_cells() != grid.n_cells()) throw ShapeError("state field does not match grid");

  StateField next(field.n_cells(), field.time() + dt);
  StepReport local;
  StepReport& rep = report ? *report : local;
  rep = {};

  LinearStep step(field, grid, params, transport, dt);
  if (step.rhs_norm() == 0.0) return next;

  std::vector<double> prev = field.values();
  std::vector<double> u = prev;
  for (int it = 1;; ++it) {
    step.linearise(prev);
    rep.linear_sweeps += solve_linear(step, u, cfg);
    double diff2 = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) diff2 += (u[i] - prev[i]) * (u[i] - prev[i]);
    const double update = std::sqrt(diff2) / std::max(norm2(u), kEmptyCell);
    rep.picard_updates.push_back(update);
    rep.picard_iterations = it;
    if (update < cfg.picard_tol) break;
    if (it == cfg.picard_max_iterations) {
      throw ConvergenceError("Picard iteration did not converge in " + std::to_string(it) +
                                 " iterations",
                             update);
    }
    prev = u;
  }

  for (double& v : u) {
    if (v < -cfg.negative_tolerance) {
      throw Error("negative compartment value " + std::to_string(v) + " after implicit step");
    }
    if (v < 0.0) v = 0.0;
  }
  next.values() = std::move(u);
  return next;
}

Trajectory run_simulation(const Grid& grid, const EpiParams& params,
                          const TransportParams& transport, const StateField& initial, double dt,
                          int n_steps, const SolverConfig& cfg) {
  if (cfg.substeps < 1) throw Error("run_simulation: substeps must be >= 1");
  Trajectory traj;
  traj.dt = dt;
  traj.levels.reserve(static_cast<std::size_t>(n_steps) + 1);
  traj.levels.push_back(initial);
  const double h = dt / cfg.substeps;
  StepReport rep;
  for (int n = 0; n < n_steps; ++n) {
    StateField f = traj.levels.back();
    const double t_end = initial.time() + (n + 1) * dt;
    for (int s = 0; s < cfg.substeps; ++s) {
      f = ext_seirs_step(f, grid, params, transport, h, cfg, &rep);
      auto& st = traj.stats;
      st.total_substeps += 1;
      st.max_picard_iterations = std::max(st.max_picard_iterations, rep.picard_iterations);
      const auto& u = rep.picard_updates;
      if (u.size() >= 3) {
        const std::size_t k = u.size();
        if (!(u[k - 3] > u[k - 2] && u[k - 2] > u[k - 1])) st.picard_tail_monotone = false;
      }
    }
    f.set_time(t_end);
    traj.levels.push_back(std::move(f));
  }
  return traj;
}

}  // namespace predgan::epi
