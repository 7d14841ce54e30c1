#include "predgan/da/assimilate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "predgan/util/error.hpp"

namespace predgan::da {

namespace {

Levels slice(const Levels& v, std::size_t begin, std::size_t end) {
  return Levels(v.begin() + static_cast<std::ptrdiff_t>(begin),
                v.begin() + static_cast<std::ptrdiff_t>(end));
}

std::vector<double> row(const ad::Tensor& w, std::size_t r, std::size_t begin, std::size_t end) {
  const std::size_t cols = w.dim(1);
  return {w.data().begin() + static_cast<std::ptrdiff_t>(r * cols + begin),
          w.data().begin() + static_cast<std::ptrdiff_t>(r * cols + end)};
}

void check_window_fit(const pred::WindowGenerator& gen, const Levels& alpha) {
  if (alpha.size() + 1 != gen.rows()) {
    throw ShapeError("functional needs exactly m - 1 = " + std::to_string(gen.rows() - 1) +
                     " known levels, got " + std::to_string(alpha.size()));
  }
}

LossTerms& operator+=(LossTerms& a, const LossTerms& b) {
  a.alpha += b.alpha;
  a.mu += b.mu;
  a.obs += b.obs;
  return a;
}

LossTerms per_level(LossTerms t, std::size_t n) {
  if (n == 0) return t;
  const double s = 1.0 / static_cast<double>(n);
  return {t.alpha * s, t.mu * s, t.obs * s};
}

}  // namespace

double observation_loss(const Levels& alpha, std::size_t first_level,
                        const ObservationOperator& obs, double zeta_obs) {
  double total = 0.0;
  for (std::size_t k = 0; k < alpha.size(); ++k) {
    if (alpha[k].size() != obs.n_alpha()) throw ShapeError("level has wrong number of coefficients");
    for (std::size_t i : obs.at_level(first_level + k)) {
      const auto& r = obs.rows()[i];
      const double d = obs.predict(r, alpha[k]) - r.value;
      total += zeta_obs * r.weight * d * d;
    }
  }
  return total;
}

LossTerms da_window_loss(const ad::Tensor& window, std::size_t first_row, std::size_t first_level,
                         const Levels& alpha, const Levels& mu, const ObservationOperator* obs,
                         const pred::PredLossConfig& cfg, double zeta_obs, ad::Tensor* grad) {
  LossTerms t = pred::known_rows_loss(window, first_row, alpha, mu, cfg, grad);
  if (!obs || zeta_obs == 0.0) return t;
  const std::size_t cols = window.dim(1);
  const std::size_t na = obs->n_alpha();
  if (na > cols) throw ShapeError("observation operator has more coefficients than the window");
  for (std::size_t k = 0; k < alpha.size(); ++k) {
    const std::size_t r = first_row + k;
    const double* x = window.data().data() + r * cols;
    for (std::size_t i : obs->at_level(first_level + k)) {
      const auto& o = obs->rows()[i];
      const double d = obs->predict(o, std::span<const double>(x, na)) - o.value;
      t.obs += zeta_obs * o.weight * d * d;
      if (grad) {
        const double g = 2.0 * zeta_obs * o.weight * d;
        for (std::size_t c = 0; c < na; ++c) (*grad)[r * cols + c] += g * o.coeff[c];
      }
    }
  }
  return t;
}

double da_forward_loss(pred::WindowGenerator& gen, std::span<const double> z, const Levels& alpha,
                       const Levels& mu, std::size_t first_level, const ObservationOperator* obs,
                       const pred::PredLossConfig& cfg, double zeta_obs) {
  cfg.validate(gen.cols());
  check_window_fit(gen, alpha);
  return da_window_loss(gen.generate(z), 0, first_level, alpha, mu, obs, cfg, zeta_obs).total();
}

double da_backward_loss(pred::WindowGenerator& gen, std::span<const double> z, const Levels& alpha,
                        const Levels& mu, std::size_t first_level, const ObservationOperator* obs,
                        const pred::PredLossConfig& cfg, double zeta_obs) {
  cfg.validate(gen.cols());
  check_window_fit(gen, alpha);
  return da_window_loss(gen.generate(z), 1, first_level, alpha, mu, obs, cfg, zeta_obs).total();
}

double zeta_mu_hat(const WeightConfig& cfg, int j) {
  if (j < 1) throw Error("outer iterations are numbered from 1");
  return cfg.zeta_mu_start * std::pow(cfg.zeta_mu_growth, j - 1);
}

double DaWeights::zeta_obs(double window_weight_sum) const {
  if (window_weight_sum < 0.0) throw Error("negative observation weight sum");
  return window_weight_sum == 0.0 ? 0.0 : zeta_obs_numerator / window_weight_sum;
}

DaWeights compute_weights(const WeightConfig& cfg, const pred::PredLossConfig& loss,
                          const ObservationOperator& obs, std::size_t m) {
  if (m < 2) throw Error("window size must be at least 2");
  const double sum_alpha = std::accumulate(loss.w_alpha.begin(), loss.w_alpha.end(), 0.0);
  const double sum_mu = std::accumulate(loss.w_mu.begin(), loss.w_mu.end(), 0.0);
  if (!(cfg.delta_u > 0.0)) throw Error("state range delta_u must be positive");
  if (!(cfg.delta_mu > 0.0)) throw Error("parameter range delta_mu must be positive");
  if (!(sum_mu > 0.0)) throw Error("W_mu diagonal sums to zero");
  if (!(obs.total_weight() > 0.0)) {
    throw Error("observation weights sum to zero");
  }
  const double ra = cfg.delta_alpha / cfg.delta_u;
  const double rm = cfg.delta_alpha / cfg.delta_mu;
  DaWeights w;
  w.zeta_obs_numerator = cfg.zeta_obs_hat * ra * ra * static_cast<double>(m - 1) * sum_alpha;
  w.zeta_mu_factor = rm * rm * sum_alpha / sum_mu;
  return w;
}

bool RelaxationState::record(double mismatch, const RelaxationConfig& cfg) {
  ++iteration;
  if (reference && mismatch > *reference) {
    r *= cfg.shrink;
    return false;
  }
  r = std::min(1.0, r * cfg.growth);
  reference = mismatch;
  return true;
}

std::vector<double> relax(std::span<const double> z_prev, std::span<const double> z_hat, double r) {
  if (z_prev.size() != z_hat.size()) throw ShapeError("relaxation latents differ in length");
  std::vector<double> z(z_hat.size());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = (1.0 - r) * z_prev[i] + r * z_hat[i];
  return z;
}

MarchReport march(pred::WindowGenerator& gen, Trajectory& traj, const ObservationOperator* obs,
                  const DaWeights& weights, const pred::PredLossConfig& loss,
                  const MarchSettings& s, std::vector<double> z_start) {
  const std::size_t m = gen.rows();
  const std::size_t n_levels = traj.alpha.size();
  const std::size_t na = loss.w_alpha.size();
  loss.validate(gen.cols());
  if (n_levels < m) throw Error("trajectory shorter than one window");
  if (traj.mu_known.size() != n_levels || traj.mu_pred.size() != n_levels) {
    throw ShapeError("trajectory parameter levels do not match its coefficient levels");
  }
  traj.latents.resize(n_levels);
  if (s.anchors && s.anchors->size() != n_levels) throw ShapeError("anchor latents do not match the trajectory");

  pred::PredLossConfig cfg = loss;
  cfg.zeta_mu = s.zeta_mu;
  const bool forward = s.direction == Direction::Forward;
  const std::size_t free_row = forward ? m - 1 : 0;
  const std::size_t first_row = forward ? 0 : 1;

  MarchReport report;
  std::vector<double> z_warm = std::move(z_start);
  const std::vector<double>* previous_level = nullptr;
  const std::size_t steps = n_levels - (m - 1);
  for (std::size_t t = 0; t < steps; ++t) {
    const std::size_t n = forward ? m - 1 + t : n_levels - m - t;
    const std::size_t first = forward ? n - (m - 1) : n + 1;
    const Levels known = slice(traj.alpha, first, first + m - 1);
    const Levels known_mu = slice(traj.mu_known, first, first + m - 1);
    const ObservationOperator* o = s.with_observations ? obs : nullptr;
    const double zeta_obs = o ? weights.zeta_obs(o->weight_sum(first, first + m - 1)) : 0.0;

    pred::WindowLoss f = [&](const ad::Tensor& w, ad::Tensor& grad) {
      return da_window_loss(w, first_row, first, known, known_mu, o, cfg, zeta_obs, &grad).total();
    };
    pred::LatentResult res = pred::optimize_latent(gen, z_warm, f, cfg.opt);

    const std::vector<double>* anchor = nullptr;
    if (s.anchor_previous_level && previous_level) {
      anchor = previous_level;
    } else if (s.anchors && !(*s.anchors)[n].empty()) {
      anchor = &(*s.anchors)[n];
    }
    std::vector<double> z = res.z;
    ad::Tensor window = res.window;
    if (anchor && s.r != 1.0) {
      z = relax(*anchor, res.z, s.r);
      window = gen.generate(z);
    }

    traj.alpha[n] = row(window, free_row, 0, na);
    traj.mu_pred[n] = row(window, free_row, na, gen.cols());
    if (s.promote_mu) traj.mu_known[n] = traj.mu_pred[n];
    traj.latents[n] = z;
    report.terms += da_window_loss(window, first_row, first, known, known_mu, o, cfg, zeta_obs);
    report.levels.push_back({n, res.initial_loss, res.loss, res.iterations, res.converged});
    report.all_converged = report.all_converged && res.converged;
    previous_level = &traj.latents[n];
    z_warm = z;
  }
  return report;
}

namespace {

Trajectory prediction_march(pred::WindowGenerator& gen, const Levels& initial_alpha,
                            const Levels& schedule, const DaWeights& weights,
                            const AssimilationConfig& cfg) {
  pred::RolloutConfig rc;
  rc.loss = cfg.loss;
  rc.loss.zeta_mu = weights.zeta_mu(cfg.weights.zeta_mu_prediction);
  rc.first_level_restarts = cfg.first_level_restarts;
  rc.seed = cfg.seed;
  auto r = pred::rollout(gen, initial_alpha, schedule, schedule.size(), rc);
  Trajectory t;
  t.alpha = std::move(r.alpha);
  t.mu_known = schedule;
  t.mu_pred = std::move(r.mu);
  t.latents.assign(initial_alpha.size(), {});
  t.latents.insert(t.latents.end(), r.latents.begin(), r.latents.end());
  return t;
}

// Observation-weighted forward terms of a trajectory's accepted windows.
LossTerms forward_terms(pred::WindowGenerator& gen, const Trajectory& t,
                        const ObservationOperator& obs, const DaWeights& weights,
                        const pred::PredLossConfig& loss) {
  const std::size_t m = gen.rows();
  LossTerms total;
  for (std::size_t n = m - 1; n < t.alpha.size(); ++n) {
    const std::size_t first = n - (m - 1);
    total += da_window_loss(gen.generate(t.latents[n]), 0, first, slice(t.alpha, first, n),
                            slice(t.mu_known, first, n), &obs, loss,
                            weights.zeta_obs(obs.weight_sum(first, n)));
  }
  return total;
}

void adapt_mu_weights(const MuWeightAdaptation& a, const Levels& before, const Levels& after,
                      double delta_mu, std::vector<double>& w_mu) {
  for (std::size_t c = 0; c < w_mu.size(); ++c) {
    double change = 0.0;
    for (std::size_t k = 0; k < before.size(); ++k) change += std::abs(after[k][c] - before[k][c]);
    change /= static_cast<double>(before.size()) * delta_mu;
    if (change > a.raise_above) w_mu[c] = std::min(a.cap, w_mu[c] * a.factor);
    if (change < a.lower_below) w_mu[c] = std::max(a.floor, w_mu[c] / a.factor);
  }
}

}  // namespace

AssimilationResult assimilate(pred::WindowGenerator& gen, const Levels& initial_alpha,
                              const std::vector<double>& mu_guess, std::size_t n_levels,
                              const ObservationOperator& obs, const AssimilationConfig& cfg) {
  const std::size_t m = gen.rows();
  cfg.loss.validate(gen.cols());
  if (mu_guess.size() != cfg.loss.w_mu.size()) throw ShapeError("mu guess has wrong length");
  if (n_levels < m) throw Error("assimilation needs at least one full window of levels");
  if (!(obs.weight_sum(0, n_levels) > 0.0)) throw Error("no weighted observations inside the assimilated levels");
  if (cfg.relaxation.max_outer_iterations < 1) throw Error("max outer iterations must be at least 1");

  pred::PredLossConfig loss = cfg.loss;
  DaWeights weights = compute_weights(cfg.weights, loss, obs, m);
  AssimilationResult result;

  // Step 1: prediction march from the guess.
  result.initial = prediction_march(gen, initial_alpha, Levels(n_levels, mu_guess), weights, cfg);
  result.initial_mismatch = trajectory_mismatch(obs, result.initial.alpha).average();
  Trajectory traj = result.initial;
  Levels fwd_latents = traj.latents;

  // Step 2: first backward march; nothing to relax towards yet.
  RelaxationState relax_state;
  {
    OuterIteration it;
    it.j = 1;
    it.r = relax_state.r;
    it.zeta_mu_hat = zeta_mu_hat(cfg.weights, 1);
    it.forward_terms = per_level(forward_terms(gen, traj, obs, weights, loss), n_levels - (m - 1));
    Mismatch mm = trajectory_mismatch(obs, traj.alpha);
    MarchSettings bs;
    bs.direction = Direction::Backward;
    bs.zeta_mu = weights.zeta_mu(it.zeta_mu_hat);
    auto rep = march(gen, traj, &obs, weights, loss, bs, traj.latents[n_levels - 1]);
    it.backward_terms = per_level(rep.terms, rep.levels.size());
    mm += trajectory_mismatch(obs, traj.alpha);
    it.mismatch = mm.average();
    it.accepted = relax_state.record(it.mismatch, cfg.relaxation);
    result.history.push_back(it);
  }
  Levels bwd_latents = traj.latents;

  // Step 3: relaxed forward-backward pairs.
  for (int j = 2; j <= cfg.relaxation.max_outer_iterations; ++j) {
    if (relax_state.converged(cfg.relaxation)) break;
    const Trajectory saved = traj;
    OuterIteration it;
    it.j = j;
    it.r = relax_state.r;
    it.reference = relax_state.reference;
    it.zeta_mu_hat = zeta_mu_hat(cfg.weights, j);

    MarchSettings fs;
    fs.direction = Direction::Forward;
    fs.zeta_mu = weights.zeta_mu(it.zeta_mu_hat);
    fs.r = relax_state.r;
    fs.anchors = &fwd_latents;
    fs.anchor_previous_level = cfg.anchor_previous_level;
    auto frep = march(gen, traj, &obs, weights, loss, fs, traj.latents[0]);
    Mismatch mm = trajectory_mismatch(obs, traj.alpha);
    Levels new_fwd = traj.latents;

    MarchSettings bs = fs;
    bs.direction = Direction::Backward;
    bs.anchors = &bwd_latents;
    auto brep = march(gen, traj, &obs, weights, loss, bs, traj.latents[n_levels - 1]);
    mm += trajectory_mismatch(obs, traj.alpha);

    it.mismatch = mm.average();
    it.forward_terms = per_level(frep.terms, frep.levels.size());
    it.backward_terms = per_level(brep.terms, brep.levels.size());
    it.accepted = relax_state.record(it.mismatch, cfg.relaxation);
    if (it.accepted) {
      fwd_latents = std::move(new_fwd);
      bwd_latents = traj.latents;
      if (cfg.adaptation.enabled) {
        // Step 4: W_mu follows how quickly the known parameters still move.
        adapt_mu_weights(cfg.adaptation, saved.mu_known, traj.mu_known, cfg.weights.delta_mu, loss.w_mu);
        weights = compute_weights(cfg.weights, loss, obs, m);
      }
    } else {
      traj = saved;
    }
    result.history.push_back(it);
  }
  result.converged = relax_state.converged(cfg.relaxation);
  result.assimilated = traj;

  // Step 5: prediction march from the assimilated start with the assimilated mu.
  result.final = prediction_march(gen, slice(traj.alpha, 0, m - 1), traj.mu_known, weights, cfg);
  result.final_mismatch = trajectory_mismatch(obs, result.final.alpha).average();
  return result;
}

void write_diagnostics_csv(const std::filesystem::path& path, const AssimilationResult& result) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.precision(17);
  os << "outer_iteration,r,zeta_mu_hat,mismatch,reference_mismatch,accepted,"
        "forward_alpha,forward_mu,forward_obs,backward_alpha,backward_mu,backward_obs\n";
  for (const auto& it : result.history) {
    os << it.j << ',' << it.r << ',' << it.zeta_mu_hat << ',' << it.mismatch << ',';
    if (it.reference) os << *it.reference;
    os << ',' << (it.accepted ? 1 : 0) << ',' << it.forward_terms.alpha << ','
       << it.forward_terms.mu << ',' << it.forward_terms.obs << ',' << it.backward_terms.alpha
       << ',' << it.backward_terms.mu << ',' << it.backward_terms.obs << '\n';
  }
}

void write_mu_history_csv(const std::filesystem::path& path, const Levels& mu,
                          const std::vector<std::string>& names) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.precision(17);
  os << "level";
  for (const auto& n : names) os << ',' << n;
  os << '\n';
  for (std::size_t k = 0; k < mu.size(); ++k) {
    if (mu[k].size() != names.size()) throw ShapeError("mu level has wrong number of parameters");
    os << k;
    for (double v : mu[k]) os << ',' << v;
    os << '\n';
  }
}

}  // namespace predgan::da
