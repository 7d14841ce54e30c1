#include "predgan/pred/predgan.hpp"

#include <fstream>
#include <random>

#include "predgan/util/error.hpp"

namespace predgan::pred {

PredLossConfig PredLossConfig::identity(std::size_t n_alpha, std::size_t n_mu, double zeta_mu) {
  PredLossConfig cfg;
  cfg.w_alpha.assign(n_alpha, 1.0);
  cfg.w_mu.assign(n_mu, 1.0);
  cfg.zeta_mu = zeta_mu;
  return cfg;
}

void PredLossConfig::validate(std::size_t cols) const {
  if (w_alpha.size() + w_mu.size() != cols) {
    throw ShapeError("loss weights cover " + std::to_string(w_alpha.size() + w_mu.size()) +
                     " channels but windows have " + std::to_string(cols));
  }
  for (double w : w_alpha) {
    if (w < 0.0) throw Error("W_alpha diagonal must be non-negative");
  }
  for (double w : w_mu) {
    if (w < 0.0) throw Error("W_mu diagonal must be non-negative");
  }
  if (zeta_mu < 0.0) throw Error("zeta_mu must be non-negative");
}

LossTerms known_rows_loss(const ad::Tensor& window, std::size_t first_row, const Levels& alpha,
                          const Levels& mu, const PredLossConfig& cfg, ad::Tensor* grad) {
  const std::size_t cols = window.dim(1);
  const std::size_t na = cfg.w_alpha.size();
  const std::size_t nm = cfg.w_mu.size();
  if (alpha.size() != mu.size() || first_row + alpha.size() > window.dim(0)) {
    throw ShapeError("known levels do not fit the window");
  }
  LossTerms t;
  for (std::size_t k = 0; k < alpha.size(); ++k) {
    const std::size_t r = first_row + k;
    if (alpha[k].size() != na || mu[k].size() != nm) throw ShapeError("known level has wrong length");
    for (std::size_t i = 0; i < na; ++i) {
      const double d = window.at(r, i) - alpha[k][i];
      t.alpha += cfg.w_alpha[i] * d * d;
      if (grad) (*grad)[r * cols + i] += 2.0 * cfg.w_alpha[i] * d;
    }
    for (std::size_t i = 0; i < nm; ++i) {
      const double d = window.at(r, na + i) - mu[k][i];
      t.mu += cfg.zeta_mu * cfg.w_mu[i] * d * d;
      if (grad) (*grad)[r * cols + na + i] += 2.0 * cfg.zeta_mu * cfg.w_mu[i] * d;
    }
  }
  return t;
}

double prediction_loss(WindowGenerator& gen, std::span<const double> z, const Levels& alpha,
                       const Levels& mu, const PredLossConfig& cfg) {
  cfg.validate(gen.cols());
  if (alpha.size() + 1 != gen.rows()) {
    throw ShapeError("prediction loss needs exactly m - 1 = " + std::to_string(gen.rows() - 1) +
                     " known levels, got " + std::to_string(alpha.size()));
  }
  return known_rows_loss(gen.generate(z), 0, alpha, mu, cfg).total();
}

namespace {

Levels schedule_slice(const Levels& schedule, std::size_t begin, std::size_t count) {
  if (begin + count > schedule.size()) {
    throw ShapeError("mu schedule has " + std::to_string(schedule.size()) +
                     " levels; level " + std::to_string(begin + count - 1) + " requested");
  }
  return Levels(schedule.begin() + static_cast<std::ptrdiff_t>(begin),
                schedule.begin() + static_cast<std::ptrdiff_t>(begin + count));
}

std::vector<double> row(const ad::Tensor& w, std::size_t r, std::size_t begin, std::size_t end) {
  const std::size_t cols = w.dim(1);
  return {w.data().begin() + static_cast<std::ptrdiff_t>(r * cols + begin),
          w.data().begin() + static_cast<std::ptrdiff_t>(r * cols + end)};
}

}  // namespace

LevelResult predict_next(WindowGenerator& gen, PredictionState& state, const Levels& mu_schedule,
                         const PredLossConfig& cfg) {
  const std::size_t m = gen.rows();
  cfg.validate(gen.cols());
  if (state.alpha.size() != m - 1) {
    throw Error("prediction state holds " + std::to_string(state.alpha.size()) +
                " levels, expected " + std::to_string(m - 1));
  }
  if (state.next_level < m - 1) throw Error("prediction state level index precedes its history");
  const Levels known(state.alpha.begin(), state.alpha.end());
  const Levels known_mu = schedule_slice(mu_schedule, state.next_level - (m - 1), m - 1);
  WindowLoss loss = [&](const ad::Tensor& w, ad::Tensor& grad) {
    return known_rows_loss(w, 0, known, known_mu, cfg, &grad).total();
  };

  LevelResult out;
  out.z_start = state.z;
  out.latent = optimize_latent(gen, state.z, loss, cfg.opt);
  const std::size_t na = cfg.w_alpha.size();
  out.alpha = row(out.latent.window, m - 1, 0, na);
  out.mu = row(out.latent.window, m - 1, na, gen.cols());
  out.report = {state.next_level, out.latent.initial_loss, out.latent.loss, out.latent.iterations,
                out.latent.converged};

  state.z = out.latent.z;
  state.alpha.pop_front();
  state.alpha.push_back(out.alpha);
  ++state.next_level;
  return out;
}

RolloutResult rollout(WindowGenerator& gen, const Levels& initial_alpha, const Levels& mu_schedule,
                      std::size_t n_levels, const RolloutConfig& cfg) {
  const std::size_t m = gen.rows();
  if (initial_alpha.size() != m - 1) {
    throw Error("rollout needs m - 1 = " + std::to_string(m - 1) + " initial levels");
  }
  if (n_levels < m - 1) throw Error("rollout length is shorter than its initial levels");
  if (mu_schedule.size() < n_levels) throw ShapeError("mu schedule shorter than the rollout");

  RolloutResult result;
  result.alpha = initial_alpha;
  result.mu = schedule_slice(mu_schedule, 0, m - 1);

  PredictionState state;
  state.alpha.assign(initial_alpha.begin(), initial_alpha.end());
  state.next_level = m - 1;

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal;
  auto draw = [&] {
    std::vector<double> z(gen.latent_size());
    for (double& v : z) v = normal(rng);
    return z;
  };

  for (std::size_t n = m - 1; n < n_levels; ++n) {
    LevelResult level;
    if (n == m - 1) {
      // No warm start yet: keep the best of several random starting latents.
      const int restarts = std::max(1, cfg.first_level_restarts);
      PredictionState best;
      for (int r = 0; r < restarts; ++r) {
        PredictionState trial = state;
        trial.z = draw();
        LevelResult candidate = predict_next(gen, trial, mu_schedule, cfg.loss);
        if (r == 0 || candidate.latent.loss < level.latent.loss) {
          level = std::move(candidate);
          best = std::move(trial);
        }
      }
      state = std::move(best);
    } else {
      level = predict_next(gen, state, mu_schedule, cfg.loss);
    }
    result.alpha.push_back(level.alpha);
    result.mu.push_back(level.mu);
    result.latents.push_back(level.latent.z);
    result.all_converged = result.all_converged && level.report.converged;
    result.reports.push_back(level.report);
  }
  return result;
}

void write_rollout_report_csv(const std::filesystem::path& path, const RolloutResult& result) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.precision(17);
  os << "level,initial_loss,loss,iterations,converged\n";
  for (const auto& r : result.reports) {
    os << r.level << ',' << r.initial_loss << ',' << r.loss << ',' << r.iterations << ','
       << (r.converged ? 1 : 0) << '\n';
  }
}

}  // namespace predgan::pred
