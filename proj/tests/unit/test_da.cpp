#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "da_fixture.hpp"
#include "fd_oracle.hpp"
#include "predgan/da/assimilate.hpp"
#include "predgan/util/error.hpp"

using namespace predgan;
using namespace predgan::da;
using predgan::testing::LinearDaProblem;

namespace {

std::vector<double> normal_vector(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal;
  std::vector<double> v(n);
  for (double& x : v) x = scale * normal(rng);
  return v;
}

epi::Grid tiny_grid() {
  epi::Grid g;
  g.nx = 2;
  g.ny = 2;
  g.cell_size = 1.0;
  g.region.assign(4, 2);
  return g;
}

// Observations of random slots at every level in [0, n_levels).
ObservationSet random_observations(std::size_t n_levels, std::mt19937_64& rng) {
  std::vector<Observation> entries;
  std::uniform_int_distribution<int> cell(0, 3);
  std::uniform_real_distribution<double> value(0.0, 12.0);
  std::uniform_real_distribution<double> weight(0.2, 2.0);
  for (std::size_t k = 0; k < n_levels; ++k) {
    const std::size_t c = static_cast<std::size_t>(cell(rng));
    entries.push_back({k, c, epi::Group::Home, epi::Compartment::I, value(rng), weight(rng)});
    entries.push_back({k, c, std::nullopt, epi::Compartment::S, value(rng), weight(rng)});
    if (k % 3 == 0) entries.push_back({k, c, epi::Group::Mobile, epi::Compartment::R, value(rng), 0.0});
  }
  return ObservationSet(std::move(entries), LinearDaProblem::kCells);
}

pred::Levels rows_of(const ad::Tensor& w, std::size_t begin, std::size_t end, std::size_t c0, std::size_t c1) {
  pred::Levels out;
  for (std::size_t r = begin; r < end; ++r) {
    std::vector<double> v;
    for (std::size_t c = c0; c < c1; ++c) v.push_back(w.at(r, c));
    out.push_back(v);
  }
  return out;
}

// Naive re-evaluation of the three sums: full state reconstruction, then one
// loop over rows and one over observations.
double brute_force_loss(const LinearDaProblem& p, const ad::Tensor& w, std::size_t first_row,
                        std::size_t first_level, const pred::Levels& alpha, const pred::Levels& mu,
                        const ObservationSet& obs, const pred::PredLossConfig& cfg, double zeta_obs) {
  double total = 0.0;
  for (std::size_t k = 0; k < alpha.size(); ++k) {
    const std::size_t r = first_row + k;
    std::vector<double> g_alpha;
    for (std::size_t i = 0; i < 3; ++i) {
      g_alpha.push_back(w.at(r, i));
      total += cfg.w_alpha[i] * (w.at(r, i) - alpha[k][i]) * (w.at(r, i) - alpha[k][i]);
    }
    for (std::size_t i = 0; i < 2; ++i) {
      total += cfg.zeta_mu * cfg.w_mu[i] * (w.at(r, 3 + i) - mu[k][i]) * (w.at(r, 3 + i) - mu[k][i]);
    }
    const auto u = p.state(g_alpha);
    for (const auto& o : obs.entries()) {
      if (o.level != first_level + k) continue;
      double pred = 0.0;
      for (std::size_t s : obs.slots(o)) pred += u[s];
      total += zeta_obs * o.weight * (pred - o.value) * (pred - o.value);
    }
  }
  return total;
}

}  // namespace

TEST(Observations, RejectsInvalidSets) {
  EXPECT_THROW(ObservationSet({}, 4), Error);
  EXPECT_THROW(ObservationSet({{0, 0, epi::Group::Home, epi::Compartment::I, 1.0, -1.0}}, 4), Error);
  EXPECT_THROW(ObservationSet({{0, 7, epi::Group::Home, epi::Compartment::I, 1.0, 1.0}}, 4), Error);
  Observation o{3, 1, epi::Group::Home, epi::Compartment::I, 1.0, 1.0};
  EXPECT_THROW(ObservationSet({o, o}, 4), Error);
  Observation summed = o;
  summed.group.reset();
  EXPECT_NO_THROW(ObservationSet({o, summed}, 4));
}

TEST(Observations, SlotsFollowSnapshotOrdering) {
  ObservationSet set({{0, 2, epi::Group::Mobile, epi::Compartment::E, 1.0, 1.0}}, 4);
  EXPECT_EQ(set.slots(set.entries()[0]), (std::vector<std::size_t>{(4 + 1) * 4 + 2}));
  Observation all{0, 2, std::nullopt, epi::Compartment::I, 1.0, 1.0};
  EXPECT_EQ(set.slots(all), (std::vector<std::size_t>{2 * 4 + 2, 6 * 4 + 2}));
}

TEST(Observations, CsvRoundTrip) {
  std::mt19937_64 rng(1);
  auto set = random_observations(6, rng);
  const auto path = std::filesystem::temp_directory_path() / "predgan_obs_roundtrip.csv";
  set.write_csv(path, tiny_grid());
  auto back = ObservationSet::read_csv(path, tiny_grid());
  ASSERT_EQ(back.size(), set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& a = set.entries()[i];
    const auto& b = back.entries()[i];
    EXPECT_EQ(a.level, b.level);
    EXPECT_EQ(a.cell, b.cell);
    EXPECT_EQ(a.group, b.group);
    EXPECT_EQ(a.compartment, b.compartment);
    EXPECT_EQ(a.value, b.value);
    EXPECT_EQ(a.weight, b.weight);
  }
  std::filesystem::remove(path);
}

TEST(Observations, CsvErrorsNameTheLine) {
  const auto path = std::filesystem::temp_directory_path() / "predgan_obs_bad.csv";
  {
    std::ofstream os(path);
    os << "time_level,cell_x,cell_y,group,compartment,value,weight\n0,0,0,home,I,1,1\n1,0,0,visitors,I,1,1\n";
  }
  try {
    ObservationSet::read_csv(path, tiny_grid());
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos) << e.what();
  }
  std::filesystem::remove(path);
}

TEST(Observations, SamplingWithoutNoiseReadsTheState) {
  std::vector<std::vector<double>> states(3, std::vector<double>(32));
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t i = 0; i < 32; ++i) states[k][i] = 100.0 * k + i;
  ObservationPlan plan{{0, 2}, {1}, {epi::Group::Home, std::nullopt}, {epi::Compartment::I}, 1.0};
  std::mt19937_64 rng(3);
  auto set = sample_observations(states, 4, plan, 0.0, rng);
  ASSERT_EQ(set.size(), 4u);
  EXPECT_EQ(set.entries()[0].value, 9.0);                 // home I, cell 1
  EXPECT_EQ(set.entries()[1].value, 9.0 + 25.0);          // + mobile I, cell 1
  EXPECT_EQ(set.entries()[2].value, 209.0);
}

TEST(Observations, MultiplicativeNoiseIsClampedAndScaled) {
  std::vector<std::vector<double>> states(200, std::vector<double>(32, 50.0));
  ObservationPlan plan{{}, {0, 1, 2, 3}, {epi::Group::Home}, {epi::Compartment::S}, 1.0};
  for (std::size_t k = 0; k < 200; ++k) plan.levels.push_back(k);
  std::mt19937_64 rng(5);
  auto set = sample_observations(states, 4, plan, 0.05, rng);
  double sum = 0.0, sum2 = 0.0;
  for (const auto& o : set.entries()) {
    const double rel = o.value / 50.0 - 1.0;
    sum += rel;
    sum2 += rel * rel;
  }
  const double n = static_cast<double>(set.size());
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(std::sqrt(sum2 / n), 0.05, 0.005);
  auto wild = sample_observations(states, 4, plan, 5.0, rng);
  for (const auto& o : wild.entries()) EXPECT_GE(o.value, 0.0);
}

TEST(ObservationLoss, EmptyWindowIsZero) {
  LinearDaProblem p(5);
  ObservationSet set({{7, 0, epi::Group::Home, epi::Compartment::I, 3.0, 1.0}}, 4);
  ObservationOperator op(set, p.basis, p.normalizer);
  pred::Levels alpha(3, std::vector<double>{0.1, 0.2, 0.3});
  EXPECT_EQ(observation_loss(alpha, 0, op, 10.0), 0.0);
}

TEST(ObservationLoss, MatchingStateIsZeroAndResidualTwoGivesForty) {
  LinearDaProblem p(5);
  const std::vector<double> alpha{0.3, -0.2, 0.5};
  const auto u = p.state(alpha);
  const Observation exact{0, 1, epi::Group::Home, epi::Compartment::E, u[1 * 4 + 1], 1.0};
  ObservationOperator op(ObservationSet({exact}, 4), p.basis, p.normalizer);
  EXPECT_NEAR(observation_loss({alpha}, 0, op, 10.0), 0.0, 1e-20);
  Observation off = exact;
  off.value -= 2.0;
  ObservationOperator op2(ObservationSet({off}, 4), p.basis, p.normalizer);
  EXPECT_NEAR(observation_loss({alpha}, 0, op2, 10.0), 40.0, 1e-10);
}

TEST(DaLoss, ZeroObservationWeightReducesToPredictionLossBitwise) {
  LinearDaProblem p(6);
  auto gen = p.generator();
  std::mt19937_64 rng(7);
  auto obs = random_observations(20, rng);
  ObservationOperator op(obs, p.basis, p.normalizer);
  auto cfg = p.loss();
  cfg.zeta_mu = 0.3;
  for (int trial = 0; trial < 5; ++trial) {
    auto z = normal_vector(5, rng);
    pred::Levels alpha, mu;
    for (int k = 0; k < 5; ++k) {
      alpha.push_back(normal_vector(3, rng));
      mu.push_back(normal_vector(2, rng));
    }
    const double expected = pred::prediction_loss(gen, z, alpha, mu, cfg);
    EXPECT_EQ(da_forward_loss(gen, z, alpha, mu, 4, &op, cfg, 0.0), expected);
    EXPECT_EQ(da_forward_loss(gen, z, alpha, mu, 4, nullptr, cfg, 25.0), expected);
  }
}

TEST(DaLoss, PerfectMatchIsZero) {
  LinearDaProblem p(6);
  auto gen = p.generator();
  std::vector<double> z{0.2, -0.1, 0.4, 0.3, -0.5};
  auto w = gen.generate(z);
  std::vector<Observation> entries;
  for (std::size_t r = 0; r < 6; ++r) {
    const auto u = p.state({w.at(r, 0), w.at(r, 1), w.at(r, 2)});
    entries.push_back({10 + r, 3, epi::Group::Mobile, epi::Compartment::S, u[4 * 4 + 3], 1.0});
  }
  ObservationOperator op(ObservationSet(entries, 4), p.basis, p.normalizer);
  auto cfg = p.loss();
  cfg.zeta_mu = 0.5;
  EXPECT_NEAR(da_forward_loss(gen, z, rows_of(w, 0, 5, 0, 3), rows_of(w, 0, 5, 3, 5), 10, &op, cfg, 7.0), 0.0, 1e-18);
  EXPECT_NEAR(da_backward_loss(gen, z, rows_of(w, 1, 6, 0, 3), rows_of(w, 1, 6, 3, 5), 11, &op, cfg, 7.0), 0.0, 1e-18);
}

TEST(DaLoss, MatchesBruteForceOracle) {
  LinearDaProblem p(6);
  auto gen = p.generator();
  std::mt19937_64 rng(9);
  auto obs = random_observations(30, rng);
  ObservationOperator op(obs, p.basis, p.normalizer);
  auto cfg = p.loss();
  cfg.zeta_mu = 0.2;
  for (double& w : cfg.w_alpha) w = 0.5 + std::abs(normal_vector(1, rng)[0]);
  cfg.w_mu = {1.5, 0.25};
  for (int trial = 0; trial < 10; ++trial) {
    auto z = normal_vector(5, rng);
    auto w = gen.generate(z);
    pred::Levels alpha, mu;
    for (int k = 0; k < 5; ++k) {
      alpha.push_back(normal_vector(3, rng));
      mu.push_back(normal_vector(2, rng));
    }
    const std::size_t first = 3 + static_cast<std::size_t>(trial);
    const double fwd = da_forward_loss(gen, z, alpha, mu, first, &op, cfg, 0.7);
    const double fwd_ref = brute_force_loss(p, w, 0, first, alpha, mu, obs, cfg, 0.7);
    EXPECT_NEAR(fwd, fwd_ref, 1e-10 * std::max(1.0, std::abs(fwd_ref)));
    const double bwd = da_backward_loss(gen, z, alpha, mu, first, &op, cfg, 0.7);
    const double bwd_ref = brute_force_loss(p, w, 1, first, alpha, mu, obs, cfg, 0.7);
    EXPECT_NEAR(bwd, bwd_ref, 1e-10 * std::max(1.0, std::abs(bwd_ref)));
    EXPECT_NE(fwd, bwd);
  }
}

TEST(DaLoss, ZeroWeightObservationsNeverInfluenceTheLoss) {
  LinearDaProblem p(6);
  auto gen = p.generator();
  std::mt19937_64 rng(10);
  auto obs = random_observations(12, rng);
  auto entries = obs.entries();
  for (auto& o : entries) {
    if (o.weight == 0.0) o.value += 1e3;
  }
  ObservationOperator a(obs, p.basis, p.normalizer);
  ObservationOperator b(ObservationSet(entries, 4), p.basis, p.normalizer);
  auto cfg = p.loss();
  cfg.zeta_mu = 0.1;
  auto z = normal_vector(5, rng);
  pred::Levels alpha(5, normal_vector(3, rng)), mu(5, normal_vector(2, rng));
  for (std::size_t first : {0u, 3u, 6u}) {
    EXPECT_EQ(da_forward_loss(gen, z, alpha, mu, first, &a, cfg, 2.0),
              da_forward_loss(gen, z, alpha, mu, first, &b, cfg, 2.0));
    EXPECT_EQ(da_backward_loss(gen, z, alpha, mu, first, &a, cfg, 2.0),
              da_backward_loss(gen, z, alpha, mu, first, &b, cfg, 2.0));
  }
  Trajectory t;
  t.alpha.assign(12, normal_vector(3, rng));
  auto ma = trajectory_mismatch(a, t.alpha);
  auto mb = trajectory_mismatch(b, t.alpha);
  EXPECT_EQ(ma.sum, mb.sum);
  EXPECT_EQ(ma.count, mb.count);
}

TEST(DaLoss, GradientsThroughGeneratorMatchFiniteDifferences) {
  LinearDaProblem p(10);
  gan::NetworkConfig net;
  net.n_z = 12;
  net.rows = 10;
  net.cols = 5;
  net.generator_hidden = {32, 48};
  net.discriminator_hidden = {16, 8};
  gan::GanModel model(net, 41);
  pred::GanGenerator gen(model);
  std::mt19937_64 rng(12);
  auto obs = random_observations(30, rng);
  ObservationOperator op(obs, p.basis, p.normalizer);
  auto cfg = p.loss();
  cfg.zeta_mu = 0.3;
  pred::Levels alpha, mu;
  for (int k = 0; k < 9; ++k) {
    alpha.push_back(normal_vector(3, rng, 0.5));
    mu.push_back(normal_vector(2, rng, 0.5));
  }
  for (int dir = 0; dir < 2; ++dir) {
    for (int trial = 0; trial < 3; ++trial) {
      auto z = normal_vector(12, rng);
      const std::size_t first = 4 + static_cast<std::size_t>(trial);
      auto w = gen.generate(z);
      ad::Tensor gw(w.shape());
      da_window_loss(w, dir == 0 ? 0 : 1, first, alpha, mu, &op, cfg, 0.05, &gw);
      auto grad = gen.pullback(gw);
      auto f = [&](const std::vector<double>& x) {
        return dir == 0 ? da_forward_loss(gen, x, alpha, mu, first, &op, cfg, 0.05)
                        : da_backward_loss(gen, x, alpha, mu, first, &op, cfg, 0.05);
      };
      auto fd = predgan::testing::central_differences(f, z, 1e-6);
      EXPECT_LT(predgan::testing::max_relative_error(grad, fd, 1e-6), 1e-4) << "direction " << dir;
    }
  }
}

TEST(Weights, WorkedExamples) {
  LinearDaProblem p(10);
  std::vector<Observation> entries;
  for (std::size_t k = 0; k < 9; ++k) entries.push_back({k, 0, epi::Group::Home, epi::Compartment::I, 1.0, 1.0});
  ObservationOperator op(ObservationSet(entries, 4), p.basis, p.normalizer);
  auto loss = pred::PredLossConfig::identity(15, 2, 0.0);
  WeightConfig wc;
  wc.delta_alpha = 1.0;
  wc.delta_u = 1.0;
  wc.delta_mu = 1.0;
  auto w = compute_weights(wc, loss, op, 10);
  EXPECT_DOUBLE_EQ(w.zeta_obs(op.weight_sum(0, 9)), 150.0);
  EXPECT_DOUBLE_EQ(w.zeta_mu(1e-2), 0.075);
  EXPECT_EQ(w.zeta_obs(0.0), 0.0);
}

TEST(Weights, ScheduleGrowsByTwentyPercentPerOuterIteration) {
  WeightConfig wc;
  EXPECT_DOUBLE_EQ(zeta_mu_hat(wc, 1), 1e-4);
  for (int j = 1; j < 40; ++j) EXPECT_NEAR(zeta_mu_hat(wc, j + 1) / zeta_mu_hat(wc, j), 1.2, 1e-12);
  EXPECT_NEAR(zeta_mu_hat(wc, 11), 1e-4 * std::pow(1.2, 10), 1e-18);
  EXPECT_THROW(zeta_mu_hat(wc, 0), Error);
}

TEST(Weights, ZeroDenominatorsThrow) {
  LinearDaProblem p(10);
  ObservationOperator op(ObservationSet({{0, 0, epi::Group::Home, epi::Compartment::I, 1.0, 1.0}}, 4),
                         p.basis, p.normalizer);
  ObservationOperator unweighted(ObservationSet({{0, 0, epi::Group::Home, epi::Compartment::I, 1.0, 0.0}}, 4),
                                 p.basis, p.normalizer);
  auto loss = pred::PredLossConfig::identity(3, 2, 0.0);
  WeightConfig wc;
  wc.delta_u = 12.0;
  EXPECT_NO_THROW(compute_weights(wc, loss, op, 10));
  EXPECT_THROW(compute_weights(wc, loss, unweighted, 10), Error);
  auto no_mu = loss;
  no_mu.w_mu = {0.0, 0.0};
  EXPECT_THROW(compute_weights(wc, no_mu, op, 10), Error);
  wc.delta_u = 0.0;
  EXPECT_THROW(compute_weights(wc, loss, op, 10), Error);
}

TEST(Relaxation, LimitsOfTheLatentBlend) {
  std::vector<double> prev{1.0, -2.0, 3.0}, hat{0.5, 0.5, -1.0};
  EXPECT_EQ(relax(prev, hat, 1.0), hat);
  auto tiny = relax(prev, hat, 1e-12);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(tiny[i], prev[i], 1e-11);
  auto half = relax(prev, hat, 0.5);
  EXPECT_DOUBLE_EQ(half[0], 0.75);
}

TEST(Relaxation, HalvesOnIncreaseAndGrowsCappedOnDecrease) {
  RelaxationConfig cfg;
  RelaxationState s;
  EXPECT_TRUE(s.record(10.0, cfg));
  EXPECT_EQ(s.r, 1.0);
  EXPECT_FALSE(s.record(11.0, cfg));
  EXPECT_EQ(s.r, 0.5);
  EXPECT_EQ(*s.reference, 10.0);
  EXPECT_TRUE(s.record(9.0, cfg));
  EXPECT_EQ(s.r, 0.75);
  EXPECT_TRUE(s.record(9.0, cfg));
  EXPECT_EQ(s.r, 1.0);
  for (int i = 0; i < 6; ++i) s.record(100.0, cfg);
  EXPECT_FALSE(s.converged(cfg));
  s.record(100.0, cfg);
  EXPECT_EQ(s.r, 1.0 / 128.0);
  EXPECT_TRUE(s.converged(cfg));
  EXPECT_EQ(s.iteration, 11);
}

namespace {

// Truth levels, a trajectory holding them, and the generator.
struct MarchSetup {
  LinearDaProblem p{6};
  pred::LinearGenerator gen = p.generator();
  std::vector<double> mu{0.4, -0.3};
  pred::Levels truth;
  ObservationOperator op{ObservationSet({{0, 0, epi::Group::Home, epi::Compartment::I, 1.0, 1.0}}, 4),
                         p.basis, p.normalizer};

  MarchSetup() : truth(p.trajectory({0.8, -0.3, 0.5}, mu, 24)) {}

  pred::PredLossConfig tight_loss() const {
    auto cfg = p.loss();
    cfg.zeta_mu = 1.0;
    cfg.opt.max_iterations = 20000;
    cfg.opt.rel_tol = 1e-14;
    return cfg;
  }
};

}  // namespace

TEST(Marching, BackwardMarchReproducesForwardRolloutOfLinearGenerator) {
  MarchSetup s;
  auto loss = s.tight_loss();
  pred::RolloutConfig rc{loss, 4, 3};
  pred::Levels schedule(24, s.mu);
  pred::Levels init(s.truth.begin(), s.truth.begin() + 5);
  auto fwd = pred::rollout(s.gen, init, schedule, 24, rc);

  Trajectory t;
  t.alpha = fwd.alpha;
  for (std::size_t k = 0; k + 5 < 24; ++k) t.alpha[k] = {9.0, 9.0, 9.0};
  t.mu_known = schedule;
  t.mu_pred = schedule;
  MarchSettings ms;
  ms.direction = Direction::Backward;
  ms.zeta_mu = 1.0;
  ms.with_observations = false;
  ms.promote_mu = false;
  DaWeights w;
  auto rep = march(s.gen, t, &s.op, w, loss, ms, std::vector<double>(5, 0.0));
  ASSERT_EQ(rep.levels.size(), 19u);
  for (std::size_t k = 0; k < 24; ++k)
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(t.alpha[k][i], fwd.alpha[k][i], 1e-6) << "level " << k;
  EXPECT_EQ(t.mu_known, schedule);
}

TEST(Marching, BackwardLevelIndexBookkeeping) {
  MarchSetup s;
  Trajectory t;
  t.alpha = s.truth;
  t.mu_known.assign(24, s.mu);
  t.mu_pred = t.mu_known;
  MarchSettings ms;
  ms.direction = Direction::Backward;
  auto loss = s.p.loss();
  loss.opt.max_iterations = 5;
  auto rep = march(s.gen, t, &s.op, DaWeights{}, loss, ms, std::vector<double>(5, 0.0));
  const std::size_t n_final = 23;
  ASSERT_EQ(rep.levels.size(), n_final - 5 + 1);
  for (std::size_t step = 0; step < rep.levels.size(); ++step) {
    EXPECT_EQ(rep.levels[step].level, n_final - 5 - step);
  }
  ms.direction = Direction::Forward;
  rep = march(s.gen, t, &s.op, DaWeights{}, loss, ms, std::vector<double>(5, 0.0));
  for (std::size_t step = 0; step < rep.levels.size(); ++step) EXPECT_EQ(rep.levels[step].level, 5 + step);
}

TEST(Marching, PredictedParametersArePromotedToKnown) {
  MarchSetup s;
  Trajectory t;
  t.alpha = s.truth;
  const std::vector<double> wrong{-0.6, 0.9};
  t.mu_known.assign(24, wrong);
  t.mu_pred = t.mu_known;
  MarchSettings ms;
  ms.direction = Direction::Backward;
  ms.zeta_mu = 1e-3;
  ms.with_observations = false;
  auto loss = s.p.loss();
  march(s.gen, t, &s.op, DaWeights{}, loss, ms, std::vector<double>(5, 0.0));
  for (std::size_t k = 0; k < 24; ++k) {
    if (k + 5 < 24) {
      EXPECT_NE(t.mu_known[k], wrong) << "level " << k;
      EXPECT_EQ(t.mu_known[k], t.mu_pred[k]);
    } else {
      EXPECT_EQ(t.mu_known[k], wrong);
    }
  }
}

TEST(Marching, RelaxationWithRZeroKeepsTheAnchors) {
  MarchSetup s;
  Trajectory t;
  t.alpha = s.truth;
  t.mu_known.assign(24, s.mu);
  t.mu_pred = t.mu_known;
  std::mt19937_64 rng(4);
  pred::Levels anchors(24);
  for (std::size_t k = 5; k < 24; ++k) anchors[k] = normal_vector(5, rng);
  MarchSettings ms;
  ms.with_observations = false;
  ms.r = 0.0;
  ms.anchors = &anchors;
  auto loss = s.p.loss();
  loss.opt.max_iterations = 10;
  march(s.gen, t, &s.op, DaWeights{}, loss, ms, std::vector<double>(5, 0.0));
  for (std::size_t k = 5; k < 24; ++k) EXPECT_EQ(t.latents[k], anchors[k]);
}

namespace {

struct InverseCrime {
  LinearDaProblem p{6};
  pred::LinearGenerator gen = p.generator();
  std::vector<double> mu_true{0.4, -0.3};
  std::vector<double> mu_guess{-0.2, 0.3};
  std::size_t n_levels = 40;
  pred::Levels truth;
  std::optional<ObservationSet> obs;

  explicit InverseCrime(double noise = 0.0, std::uint64_t seed = 5) {
    truth = p.trajectory({0.8, -0.3, 0.5}, mu_true, n_levels);
    std::vector<std::vector<double>> states;
    for (const auto& a : truth) states.push_back(p.state(a));
    ObservationPlan plan;
    for (std::size_t k = 0; k < n_levels; ++k) plan.levels.push_back(k);
    plan.cells = {0, 3};
    plan.groups = {epi::Group::Home};
    plan.compartments = {epi::Compartment::S, epi::Compartment::E, epi::Compartment::I};
    std::mt19937_64 rng(seed);
    obs = sample_observations(states, LinearDaProblem::kCells, plan, noise, rng);
  }

  AssimilationConfig config() const {
    AssimilationConfig cfg;
    cfg.loss = p.loss();
    cfg.weights.delta_u = p.basis.state_max - p.basis.state_min;
    cfg.seed = 17;
    return cfg;
  }

  pred::Levels initial() const { return pred::Levels(truth.begin(), truth.begin() + 5); }
};

std::vector<double> time_average(const pred::Levels& mu) {
  std::vector<double> avg(mu.front().size(), 0.0);
  for (const auto& m : mu)
    for (std::size_t i = 0; i < avg.size(); ++i) avg[i] += m[i] / static_cast<double>(mu.size());
  return avg;
}

}  // namespace

TEST(Assimilation, InverseCrimeRecoversParameters) {
  InverseCrime ic;
  ObservationOperator op(*ic.obs, ic.p.basis, ic.p.normalizer);
  auto res = assimilate(ic.gen, ic.initial(), ic.mu_guess, ic.n_levels, op, ic.config());
  const auto avg = time_average(res.final.mu_pred);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(avg[i], ic.mu_true[i], 1e-2) << "parameter " << i;
  EXPECT_LT(res.final_mismatch, res.initial_mismatch);
}

namespace {

// Replays the relaxation rules against the recorded mismatches.
void expect_recurrence(const AssimilationResult& res, const RelaxationConfig& cfg) {
  ASSERT_FALSE(res.history.empty());
  double r = 1.0;
  std::optional<double> reference;
  for (const auto& it : res.history) {
    EXPECT_EQ(it.r, r) << "iteration " << it.j;
    EXPECT_EQ(it.reference, reference) << "iteration " << it.j;
    const bool accept = !reference || it.mismatch <= *reference;
    EXPECT_EQ(it.accepted, accept) << "iteration " << it.j;
    if (accept) {
      r = std::min(1.0, r * cfg.growth);
      reference = it.mismatch;
    } else {
      r *= cfg.shrink;
    }
  }
  EXPECT_EQ(res.converged, r < cfg.converged_below);
  if (!res.converged) EXPECT_EQ(static_cast<int>(res.history.size()), cfg.max_outer_iterations);
}

}  // namespace

TEST(Assimilation, RelaxationFactorFollowsTheMismatchHistory) {
  InverseCrime ic(0.05);
  ObservationOperator op(*ic.obs, ic.p.basis, ic.p.normalizer);
  auto cfg = ic.config();
  auto res = assimilate(ic.gen, ic.initial(), ic.mu_guess, ic.n_levels, op, cfg);
  expect_recurrence(res, cfg.relaxation);
  double best = res.history.front().mismatch;
  for (const auto& it : res.history) best = std::min(best, it.mismatch);
  EXPECT_LE(best, res.history.front().mismatch);
  EXPECT_TRUE(res.history.front().accepted);
  EXPECT_EQ(res.history.front().zeta_mu_hat, 1e-4);
}

TEST(Assimilation, OuterIterationBudgetEndsUnconverged) {
  InverseCrime ic;
  ObservationOperator op(*ic.obs, ic.p.basis, ic.p.normalizer);
  auto cfg = ic.config();
  cfg.relaxation.max_outer_iterations = 3;
  auto res = assimilate(ic.gen, ic.initial(), ic.mu_guess, ic.n_levels, op, cfg);
  EXPECT_FALSE(res.converged);
  EXPECT_EQ(res.history.size(), 3u);
  expect_recurrence(res, cfg.relaxation);
  // The returned state is the last accepted pair, which has the best mismatch.
  double best = res.history.front().mismatch;
  for (const auto& it : res.history) {
    if (it.accepted) best = std::min(best, it.mismatch);
  }
  EXPECT_EQ(std::min_element(res.history.begin(), res.history.end(),
                              [](const auto& a, const auto& b) { return a.mismatch < b.mismatch; })
               ->mismatch,
            best);
}

TEST(Assimilation, SeededRunsAreIdentical) {
  InverseCrime ic(0.05);
  ObservationOperator op(*ic.obs, ic.p.basis, ic.p.normalizer);
  auto cfg = ic.config();
  cfg.relaxation.max_outer_iterations = 4;
  auto a = assimilate(ic.gen, ic.initial(), ic.mu_guess, ic.n_levels, op, cfg);
  auto b = assimilate(ic.gen, ic.initial(), ic.mu_guess, ic.n_levels, op, cfg);
  EXPECT_EQ(a.final.alpha, b.final.alpha);
  EXPECT_EQ(a.assimilated.mu_known, b.assimilated.mu_known);
}

TEST(Assimilation, AnchoringToThePreviousLevelIsSelectable) {
  InverseCrime ic;
  ObservationOperator op(*ic.obs, ic.p.basis, ic.p.normalizer);
  auto cfg = ic.config();
  cfg.relaxation.max_outer_iterations = 6;
  cfg.anchor_previous_level = true;
  auto res = assimilate(ic.gen, ic.initial(), ic.mu_guess, ic.n_levels, op, cfg);
  expect_recurrence(res, cfg.relaxation);
  EXPECT_LT(res.final_mismatch, res.initial_mismatch);
}

TEST(Assimilation, ParameterWeightAdaptationRuns) {
  InverseCrime ic;
  ObservationOperator op(*ic.obs, ic.p.basis, ic.p.normalizer);
  auto cfg = ic.config();
  cfg.relaxation.max_outer_iterations = 6;
  cfg.adaptation.enabled = true;
  auto res = assimilate(ic.gen, ic.initial(), ic.mu_guess, ic.n_levels, op, cfg);
  expect_recurrence(res, cfg.relaxation);
  EXPECT_LT(res.final_mismatch, res.initial_mismatch);
}

TEST(Assimilation, RejectsObservationsOutsideTheRun) {
  InverseCrime ic;
  ObservationOperator op(ObservationSet({{100, 0, epi::Group::Home, epi::Compartment::I, 1.0, 1.0}}, 4),
                         ic.p.basis, ic.p.normalizer);
  EXPECT_THROW(assimilate(ic.gen, ic.initial(), ic.mu_guess, ic.n_levels, op, ic.config()), Error);
}

TEST(Assimilation, DiagnosticsAndParameterHistoryFiles) {
  InverseCrime ic;
  ObservationOperator op(*ic.obs, ic.p.basis, ic.p.normalizer);
  auto cfg = ic.config();
  cfg.relaxation.max_outer_iterations = 3;
  auto res = assimilate(ic.gen, ic.initial(), ic.mu_guess, ic.n_levels, op, cfg);
  const auto dir = std::filesystem::temp_directory_path();
  write_diagnostics_csv(dir / "predgan_da_diag.csv", res);
  write_mu_history_csv(dir / "predgan_da_mu.csv", res.final.mu_pred, {"R0_home", "R0_mobile"});
  std::ifstream diag(dir / "predgan_da_diag.csv");
  std::string line;
  std::size_t rows = 0;
  std::getline(diag, line);
  EXPECT_EQ(line.rfind("outer_iteration,r,", 0), 0u);
  while (std::getline(diag, line)) ++rows;
  EXPECT_EQ(rows, res.history.size());
  std::ifstream mu(dir / "predgan_da_mu.csv");
  std::getline(mu, line);
  EXPECT_EQ(line, "level,R0_home,R0_mobile");
  rows = 0;
  while (std::getline(mu, line)) ++rows;
  EXPECT_EQ(rows, ic.n_levels);
}
