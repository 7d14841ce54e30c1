#include "predgan/pipeline/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "predgan/gan/window.hpp"
#include "predgan/util/digest.hpp"
#include "predgan/util/error.hpp"

namespace predgan::pipeline {

using nlohmann::json;

namespace {

const std::vector<std::string> kMuNames{"R0_home", "R0_mobile"};

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.precision(17);
  return os;
}

void write_json(const fs::path& path, const json& j) { open_out(path) << j.dump(2) << '\n'; }

json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

std::string run_digest(const epi::SnapshotFile& f) {
  Digest d;
  for (const auto& level : f.levels) d.update(std::span<const double>(level));
  return d.hex();
}

std::string basis_digest(const rom::PodBasis& b) {
  Digest d;
  d.update(std::span<const double>(b.modes.data(), static_cast<std::size_t>(b.modes.size())));
  d.update(std::span<const double>(b.mean.data(), static_cast<std::size_t>(b.mean.size())));
  return d.hex();
}

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double relative_l2(std::span<const double> u, std::span<const double> truth) {
  double num = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) num += (u[i] - truth[i]) * (u[i] - truth[i]);
  const double den = norm2(truth);
  return den > 0.0 ? std::sqrt(num) / den : std::sqrt(num);
}

epi::SnapshotHeader town_header(const ExperimentConfig& cfg, double r0_home, double r0_mobile) {
  const auto grid = epi::Grid::idealised_town();
  epi::SnapshotHeader h;
  h.nx = grid.nx;
  h.ny = grid.ny;
  h.cell_size = grid.cell_size;
  h.dt = cfg.epi.dt;
  h.substeps = static_cast<std::uint64_t>(cfg.epi.substeps);
  h.params = cfg.epi.params(r0_home, r0_mobile);
  h.transport_digest = cfg.epi.transport().digest();
  h.seed = cfg.seed;
  h.config_digest = cfg.digest();
  return h;
}

// Physical states at surrogate levels, stored as a snapshot whose time step is
// one surrogate level.
void save_states(const fs::path& path, const ExperimentConfig& cfg, std::array<double, 2> r0,
                 std::size_t stride, const std::vector<std::vector<double>>& states) {
  epi::SnapshotFile f;
  f.header = town_header(cfg, r0[0], r0[1]);
  f.header.dt = cfg.epi.dt * static_cast<double>(stride);
  f.header.n_steps = states.empty() ? 0 : states.size() - 1;
  f.levels = states;
  f.save(path);
}

std::vector<std::vector<double>> decode_all(const Surrogate& s, const pred::Levels& alpha) {
  std::vector<std::vector<double>> out;
  out.reserve(alpha.size());
  for (const auto& a : alpha) out.push_back(s.decode(a));
  return out;
}

std::vector<std::vector<double>> decode_mu_all(const Surrogate& s, const pred::Levels& mu) {
  std::vector<std::vector<double>> out;
  out.reserve(mu.size());
  for (const auto& m : mu) out.push_back(s.decode_mu(m));
  return out;
}

pred::Levels head(const pred::Levels& v, std::size_t n) {
  return pred::Levels(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n));
}

std::pair<std::optional<epi::Group>, epi::Compartment> parse_field(const std::string& field) {
  const auto colon = field.find(':');
  if (colon == std::string::npos) {
    throw Error("observation field '" + field + "' is not group:compartment");
  }
  const std::string g = field.substr(0, colon);
  const std::string c = field.substr(colon + 1);
  std::optional<epi::Group> group;
  if (g == "home") {
    group = epi::Group::Home;
  } else if (g == "mobile") {
    group = epi::Group::Mobile;
  } else if (g != "all") {
    throw Error("observation field '" + field + "': unknown group '" + g + "'");
  }
  static const std::map<std::string, epi::Compartment> comps{{"S", epi::Compartment::S},
                                                             {"E", epi::Compartment::E},
                                                             {"I", epi::Compartment::I},
                                                             {"R", epi::Compartment::R}};
  const auto it = comps.find(c);
  if (it == comps.end()) {
    throw Error("observation field '" + field + "': unknown compartment '" + c + "'");
  }
  return {group, it->second};
}

std::string group_label(const std::optional<epi::Group>& g) {
  return g ? epi::group_name(*g) : "all";
}

}  // namespace

epi::SnapshotFile simulate_run(const ExperimentConfig& cfg, double r0_home, double r0_mobile) {
  const auto grid = epi::Grid::idealised_town();
  const auto& e = cfg.epi;
  const auto init = epi::make_initial_field(grid, e.population_per_home_cell, e.exposed_fraction);
  const auto traj = epi::run_simulation(grid, e.params(r0_home, r0_mobile), e.transport(), init,
                                        e.dt, e.n_steps, e.solver());
  return epi::SnapshotFile::from_trajectory(traj, town_header(cfg, r0_home, r0_mobile));
}

std::string EnsembleManifest::digest() const {
  Digest d;
  d.update(config_digest).update(seed);
  for (const auto& m : members) {
    d.update(static_cast<std::uint64_t>(m.index)).update(m.r0_home).update(m.r0_mobile);
    d.update(m.file).update(m.digest).update(static_cast<std::uint64_t>(m.ok));
  }
  return d.hex();
}

void EnsembleManifest::save(const fs::path& path) const {
  json j;
  j["config_digest"] = config_digest;
  j["seed"] = seed;
  j["digest"] = digest();
  j["members"] = json::array();
  for (const auto& m : members) {
    j["members"].push_back({{"index", m.index},
                            {"r0_home", m.r0_home},
                            {"r0_mobile", m.r0_mobile},
                            {"file", m.file},
                            {"digest", m.digest},
                            {"ok", m.ok},
                            {"error", m.error}});
  }
  write_json(path, j);
}

EnsembleManifest EnsembleManifest::load(const fs::path& path) {
  const json j = read_json(path);
  EnsembleManifest m;
  try {
    m.config_digest = j.at("config_digest").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& e : j.at("members")) {
      MemberRecord r;
      r.index = e.at("index").get<int>();
      r.r0_home = e.at("r0_home").get<double>();
      r.r0_mobile = e.at("r0_mobile").get<double>();
      r.file = e.at("file").get<std::string>();
      r.digest = e.at("digest").get<std::string>();
      r.ok = e.at("ok").get<bool>();
      r.error = e.at("error").get<std::string>();
      m.members.push_back(std::move(r));
    }
    if (j.at("digest").get<std::string>() != m.digest()) {
      throw IoError(path.string() + ": manifest digest does not match its contents");
    }
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return m;
}

std::vector<std::array<double, 2>> sample_r0_pairs(const ExperimentConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> r0(cfg.epi.r0_min, cfg.epi.r0_max);
  std::vector<std::array<double, 2>> pairs(static_cast<std::size_t>(cfg.ensemble.members));
  for (auto& p : pairs) {
    p[0] = r0(rng);
    p[1] = r0(rng);
  }
  return pairs;
}

EnsembleManifest generate_ensemble(const ExperimentConfig& cfg, const Layout& out, int threads) {
  cfg.validate();
  fs::create_directories(out.ensemble());
  EnsembleManifest manifest;
  manifest.config_digest = cfg.digest();
  manifest.seed = cfg.seed;

  const auto pairs = sample_r0_pairs(cfg);
  for (int i = 0; i < cfg.ensemble.members; ++i) {
    MemberRecord m;
    m.index = i;
    m.r0_home = pairs[static_cast<std::size_t>(i)][0];
    m.r0_mobile = pairs[static_cast<std::size_t>(i)][1];
    std::ostringstream name;
    name << "member_" << std::setw(3) << std::setfill('0') << i << ".snap";
    m.file = name.str();
    manifest.members.push_back(std::move(m));
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < manifest.members.size(); i = next++) {
      auto& m = manifest.members[i];
      try {
        const auto run = simulate_run(cfg, m.r0_home, m.r0_mobile);
        run.save(out.ensemble() / m.file);
        m.digest = run_digest(run);
        m.ok = true;
      } catch (const std::exception& e) {
        m.ok = false;
        m.error = e.what();
      }
    }
  };
  const int n_threads = std::clamp(threads, 1, std::max(1, cfg.ensemble.members));
  std::vector<std::thread> pool;
  for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  manifest.save(out.ensemble_manifest());
  save_config(out.ensemble() / "config.json", cfg);
  if (std::none_of(manifest.members.begin(), manifest.members.end(),
                   [](const MemberRecord& m) { return m.ok; })) {
    throw Error("every ensemble member failed; first error: " + manifest.members.front().error);
  }
  return manifest;
}

Surrogate::Surrogate(rom::PodBasis basis, rom::Normalizer normalizer, gan::GanModel model,
                     std::size_t stride)
    : basis_(std::move(basis)),
      normalizer_(std::move(normalizer)),
      model_(std::move(model)),
      stride_(stride) {
  if (normalizer_.n_channels() != basis_.n_pod() + 2) {
    throw ShapeError("normalizer does not cover the POD coefficients and two R0 values");
  }
  if (model_.config().cols != normalizer_.n_channels()) {
    throw ShapeError("generator window width does not match the normalizer");
  }
  if (stride_ < 1) throw Error("surrogate stride must be at least 1");
}

Surrogate Surrogate::load(const Layout& in) {
  auto basis = rom::PodBasis::load(in.train() / "pod.bin");
  const auto ckpt = ad::Checkpoint::load(in.train() / "generator.ckpt");
  auto meta = [&](const std::string& key) {
    const auto it = ckpt.metadata.find(key);
    if (it == ckpt.metadata.end()) {
      throw IoError((in.train() / "generator.ckpt").string() + ": missing metadata " + key);
    }
    return it->second;
  };
  if (meta("surrogate.pod_digest") != basis_digest(basis)) {
    throw IoError("generator.ckpt was trained on a different POD basis than pod.bin");
  }
  const json norm = json::parse(meta("surrogate.normalizer"));
  rom::Normalizer normalizer(norm.at("lo").get<std::vector<double>>(),
                             norm.at("hi").get<std::vector<double>>());
  const auto stride = static_cast<std::size_t>(std::stoul(meta("surrogate.stride")));
  return Surrogate(std::move(basis), std::move(normalizer), gan::GanModel::from_checkpoint(ckpt),
                   stride);
}

std::vector<double> Surrogate::encode(std::span<const double> u) const {
  auto a = basis_.project(u);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = normalizer_.normalize(a[i], i);
  return a;
}

std::vector<double> Surrogate::decode(std::span<const double> alpha) const {
  if (alpha.size() != n_alpha()) throw ShapeError("decode: wrong number of coefficients");
  std::vector<double> a(alpha.begin(), alpha.end());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = normalizer_.denormalize(a[i], i);
  return basis_.reconstruct(a);
}

std::vector<double> Surrogate::encode_mu(std::span<const double> r0) const {
  if (r0.size() != 2) throw ShapeError("encode_mu: expected two R0 values");
  return {normalizer_.normalize(r0[0], n_alpha()), normalizer_.normalize(r0[1], n_alpha() + 1)};
}

std::vector<double> Surrogate::decode_mu(std::span<const double> mu) const {
  if (mu.size() != 2) throw ShapeError("decode_mu: expected two values");
  return {normalizer_.denormalize(mu[0], n_alpha()),
          normalizer_.denormalize(mu[1], n_alpha() + 1)};
}

pred::Levels Surrogate::encode_run(const epi::SnapshotFile& run, std::size_t start) const {
  pred::Levels out;
  for (std::size_t k = start; k < run.levels.size(); k += stride_) out.push_back(encode(run.levels[k]));
  return out;
}

TrainSummary train_surrogate(const ExperimentConfig& cfg, const Layout& io,
                             const std::function<void(const gan::EpochLoss&)>& on_epoch) {
  cfg.validate();
  const auto manifest = EnsembleManifest::load(io.ensemble_manifest());
  const auto& sc = cfg.surrogate;
  TrainSummary summary;

  std::vector<epi::SnapshotFile> runs;
  std::vector<const MemberRecord*> used;
  for (const auto& m : manifest.members) {
    if (!m.ok) {
      summary.warnings.push_back("member " + std::to_string(m.index) + " skipped: " + m.error);
      continue;
    }
    auto run = epi::SnapshotFile::load(io.ensemble() / m.file);
    if (run_digest(run) != m.digest) {
      throw IoError(m.file + ": contents do not match the manifest digest");
    }
    runs.push_back(std::move(run));
    used.push_back(&m);
  }
  if (runs.empty()) throw Error("train: the ensemble has no usable members");

  const std::size_t n_state = runs.front().levels.front().size();
  std::size_t n_rows = 0;
  for (const auto& r : runs) n_rows += (r.levels.size() + sc.stride - 1) / sc.stride;
  Eigen::MatrixXd snaps(static_cast<Eigen::Index>(n_rows), static_cast<Eigen::Index>(n_state));
  Eigen::Index row = 0;
  for (const auto& r : runs) {
    for (std::size_t k = 0; k < r.levels.size(); k += sc.stride) {
      if (r.levels[k].size() != n_state) throw ShapeError("ensemble members differ in state size");
      snaps.row(row++) = Eigen::Map<const Eigen::RowVectorXd>(r.levels[k].data(),
                                                              static_cast<Eigen::Index>(n_state));
    }
  }
  auto basis = rom::build_basis(snaps, sc.n_pod);
  basis.ensemble_digest = manifest.digest();
  summary.snapshots = n_rows;
  summary.captured_variance = basis.captured_variance();

  std::vector<gan::CoefficientSequence> seqs;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    gan::CoefficientSequence s;
    s.mu = {used[i]->r0_home, used[i]->r0_mobile};
    for (const auto& u : runs[i].levels) s.alpha.push_back(basis.project(u));
    seqs.push_back(std::move(s));
  }
  runs.clear();
  const auto normalizer = gan::fit_window_normalizer(seqs);
  auto ws = gan::make_training_windows(seqs, sc.window, sc.stride, normalizer);
  for (auto& w : ws.warnings) summary.warnings.push_back(std::move(w));
  std::vector<gan::Window> windows;
  for (std::size_t i = 0; i < ws.windows.size(); i += sc.window_subsample) {
    windows.push_back(std::move(ws.windows[i]));
  }
  if (windows.empty()) throw Error("train: no training windows");
  summary.windows = windows.size();

  gan::NetworkConfig net = sc.network;
  net.rows = sc.window;
  net.cols = sc.n_pod + 2;
  gan::GanModel model(net, cfg.seed);
  gan::TrainConfig tc = sc.training;
  tc.seed = cfg.seed;
  fs::create_directories(io.train());
  if (tc.checkpoint_interval > 0) tc.checkpoint_dir = io.train() / "checkpoints";
  summary.history = gan::train(model, windows, tc, on_epoch).history;

  basis.save(io.train() / "pod.bin");
  auto ckpt = model.to_checkpoint();
  ckpt.metadata["surrogate.stride"] = std::to_string(sc.stride);
  ckpt.metadata["surrogate.normalizer"] =
      json{{"lo", normalizer.lo()}, {"hi", normalizer.hi()}}.dump();
  ckpt.metadata["surrogate.pod_digest"] = basis_digest(basis);
  ckpt.metadata["surrogate.ensemble_digest"] = manifest.digest();
  ckpt.metadata["surrogate.config_digest"] = cfg.digest();
  ckpt.save(io.train() / "generator.ckpt");
  gan::write_history_csv(io.train() / "history.csv", summary.history);

  {
    auto os = open_out(io.train() / "variance.csv");
    os << "mode,singular_value,variance_fraction,cumulative\n";
    const auto frac = basis.variance_fractions();
    double cum = 0.0;
    for (std::size_t i = 0; i < frac.size(); ++i) {
      cum += frac[i];
      os << i + 1 << ',' << basis.singular_values[static_cast<Eigen::Index>(i)] << ','
         << frac[i] << ',' << cum << '\n';
    }
  }
  write_json(io.train() / "summary.json",
             {{"config_digest", cfg.digest()},
              {"ensemble_digest", manifest.digest()},
              {"pod_digest", basis_digest(basis)},
              {"members_used", used.size()},
              {"snapshots", summary.snapshots},
              {"windows", summary.windows},
              {"captured_variance", summary.captured_variance},
              {"normalizer_out_of_range", ws.out_of_range},
              {"warnings", summary.warnings}});
  return summary;
}

Prediction predict(const ExperimentConfig& cfg, Surrogate& surrogate,
                   const epi::SnapshotFile& reference, std::array<double, 2> r0, bool with_truth) {
  const auto& pc = cfg.predict;
  const auto levels = surrogate.encode_run(reference, pc.start_level);
  const std::size_t m = surrogate.window();
  if (levels.size() < m) {
    throw Error("predict: the reference run has " + std::to_string(levels.size()) +
                " surrogate levels after start_level, fewer than the window");
  }
  const std::size_t n_alpha = surrogate.n_alpha();
  const pred::Levels schedule(levels.size(), surrogate.encode_mu(r0));

  // Normalized units: both coefficient and parameter ranges are 2.
  pred::RolloutConfig rc{pred::PredLossConfig::identity(n_alpha, 2, pc.zeta_mu_hat * n_alpha / 2.0),
                         pc.first_level_restarts, cfg.seed};
  rc.loss.opt = pc.optimizer;

  Prediction p;
  p.r0 = r0;
  p.start_level = pc.start_level;
  p.stride = surrogate.stride();
  pred::GanGenerator gen(surrogate.model());
  p.rollout = pred::rollout(gen, head(levels, m - 1), schedule, levels.size(), rc);
  p.states = decode_all(surrogate, p.rollout.alpha);
  if (with_truth) {
    double sum = 0.0;
    for (std::size_t k = 0; k < p.states.size(); ++k) {
      p.truth.push_back(reference.levels[pc.start_level + k * p.stride]);
      p.relative_error.push_back(relative_l2(p.states[k], p.truth.back()));
      if (k >= m - 1) sum += p.relative_error.back();
    }
    p.mean_relative_error = sum / static_cast<double>(p.states.size() - (m - 1));
  }
  return p;
}

void write_prediction(const fs::path& dir, const ExperimentConfig& cfg, const Surrogate& surrogate,
                      const Prediction& p, const std::string& provenance) {
  fs::create_directories(dir);
  save_states(dir / "trajectory.snap", cfg, p.r0, p.stride, p.states);
  if (!p.truth.empty()) save_states(dir / "truth.snap", cfg, p.r0, p.stride, p.truth);

  const std::size_t m = surrogate.window();
  auto os = open_out(dir / "report.csv");
  const bool with_truth = !p.relative_error.empty();
  os << "level,step,day," << (with_truth ? "relative_l2_error," : "")
     << "initial_loss,loss,iterations,converged\n";
  for (std::size_t k = 0; k < p.states.size(); ++k) {
    const std::size_t step = p.start_level + k * p.stride;
    os << k << ',' << step << ',' << static_cast<double>(step) * cfg.epi.dt / epi::kSecondsPerDay;
    if (with_truth) os << ',' << p.relative_error[k];
    if (k + 1 >= m) {
      const auto& r = p.rollout.reports[k - (m - 1)];
      os << ',' << r.initial_loss << ',' << r.loss << ',' << r.iterations << ','
         << (r.converged ? 1 : 0);
    } else {
      os << ",,,,";
    }
    os << '\n';
  }

  json j{{"provenance", provenance},
         {"config_digest", cfg.digest()},
         {"r0", p.r0},
         {"start_level", p.start_level},
         {"levels", p.states.size()},
         {"all_converged", p.rollout.all_converged}};
  if (!p.relative_error.empty()) j["mean_relative_l2_error"] = p.mean_relative_error;
  write_json(dir / "summary.json", j);
}

da::ObservationPlan observation_plan(const ExperimentConfig& cfg, const epi::Grid& grid,
                                     std::size_t n_levels, std::size_t stride) {
  const auto& oc = cfg.assimilate.observations;
  da::ObservationPlan plan;
  plan.weight = oc.weight;
  for (int region : oc.regions) plan.cells.push_back(grid.bottom_left_cell(region));

  std::vector<std::pair<std::optional<epi::Group>, epi::Compartment>> fields;
  for (const auto& f : oc.fields) {
    const auto gc = parse_field(f);
    if (std::find(fields.begin(), fields.end(), gc) != fields.end()) {
      throw Error("observation field '" + f + "' is listed twice");
    }
    fields.push_back(gc);
    if (std::find(plan.groups.begin(), plan.groups.end(), gc.first) == plan.groups.end()) {
      plan.groups.push_back(gc.first);
    }
    if (std::find(plan.compartments.begin(), plan.compartments.end(), gc.second) ==
        plan.compartments.end()) {
      plan.compartments.push_back(gc.second);
    }
  }
  if (fields.size() != plan.groups.size() * plan.compartments.size()) {
    throw Error("observation fields must list every group with every compartment they use");
  }

  std::size_t every = 1;
  if (oc.every_days > 0.0) {
    const double level_days = cfg.epi.dt * static_cast<double>(stride) / epi::kSecondsPerDay;
    every = static_cast<std::size_t>(std::max(1.0, std::round(oc.every_days / level_days)));
  }
  for (std::size_t k = 0; k < n_levels; k += every) plan.levels.push_back(k);
  return plan;
}

std::array<double, 2> time_average(const std::vector<std::vector<double>>& mu) {
  std::array<double, 2> avg{0.0, 0.0};
  if (mu.empty()) return avg;
  for (const auto& m : mu) {
    avg[0] += m.at(0);
    avg[1] += m.at(1);
  }
  avg[0] /= static_cast<double>(mu.size());
  avg[1] /= static_cast<double>(mu.size());
  return avg;
}

Assimilation assimilate(const ExperimentConfig& cfg, Surrogate& surrogate,
                        std::optional<da::ObservationSet> observations) {
  const auto& ac = cfg.assimilate;
  const std::size_t m = surrogate.window();
  const std::size_t stride = surrogate.stride();
  const auto grid = epi::Grid::idealised_town();

  Assimilation out;
  const auto truth = simulate_run(cfg, ac.truth_r0[0], ac.truth_r0[1]);
  out.truth_alpha = surrogate.encode_run(truth);
  out.n_levels = out.truth_alpha.size();
  if (ac.levels > 0) out.n_levels = std::min(out.n_levels, ac.levels);
  if (out.n_levels < m) throw Error("assimilate: fewer surrogate levels than the window");
  out.truth_alpha.resize(out.n_levels);
  for (std::size_t k = 0; k < out.n_levels; ++k) out.truth_states.push_back(truth.levels[k * stride]);

  if (observations) {
    out.observations = std::move(*observations);
  } else {
    std::mt19937_64 rng(cfg.seed + 0x0b5e7u);
    out.observations = da::sample_observations(
        out.truth_states, grid.n_cells(), observation_plan(cfg, grid, out.n_levels, stride),
        ac.observations.noise, rng);
  }
  const da::ObservationOperator op(out.observations, surrogate.basis(), surrogate.normalizer());

  const auto guess = simulate_run(cfg, ac.guess_r0[0], ac.guess_r0[1]);
  const auto initial = head(surrogate.encode_run(guess), m - 1);

  da::AssimilationConfig dc;
  dc.loss = pred::PredLossConfig::identity(surrogate.n_alpha(), 2, 0.0);
  dc.loss.opt = cfg.predict.optimizer;
  dc.weights = ac.weights;
  dc.weights.delta_u = surrogate.basis().state_max - surrogate.basis().state_min;
  dc.relaxation = ac.relaxation;
  dc.adaptation = ac.adaptation;
  dc.first_level_restarts = cfg.predict.first_level_restarts;
  dc.anchor_previous_level = ac.anchor_previous_level;
  dc.seed = cfg.seed;

  pred::GanGenerator gen(surrogate.model());
  out.result = da::assimilate(gen, initial, surrogate.encode_mu(ac.guess_r0), out.n_levels, op, dc);
  return out;
}

void write_assimilation(const fs::path& dir, const ExperimentConfig& cfg, Surrogate& surrogate,
                        const Assimilation& a, const std::string& provenance) {
  fs::create_directories(dir);
  const auto& ac = cfg.assimilate;
  const auto& r = a.result;
  const std::size_t stride = surrogate.stride();
  a.observations.write_csv(dir / "observations.csv", epi::Grid::idealised_town());
  da::write_diagnostics_csv(dir / "diagnostics.csv", r);

  const auto mu = decode_mu_all(surrogate, r.assimilated.mu_known);
  da::write_mu_history_csv(dir / "mu_history.csv", mu, kMuNames);
  const auto final_mu = decode_mu_all(surrogate, r.final.mu_known);

  save_states(dir / "initial.snap", cfg, ac.guess_r0, stride, decode_all(surrogate, r.initial.alpha));
  const auto avg = time_average(final_mu);
  save_states(dir / "final.snap", cfg, avg, stride, decode_all(surrogate, r.final.alpha));
  save_states(dir / "truth.snap", cfg, ac.truth_r0, stride, a.truth_states);

  write_json(dir / "summary.json",
             {{"provenance", provenance},
              {"config_digest", cfg.digest()},
              {"converged", r.converged},
              {"outer_iterations", r.history.size()},
              {"final_r", r.history.empty() ? 1.0 : r.history.back().r},
              {"levels", a.n_levels},
              {"observations", a.observations.size()},
              {"initial_mismatch", r.initial_mismatch},
              {"final_mismatch", r.final_mismatch},
              {"mismatch_ratio",
               r.initial_mismatch > 0.0 ? r.final_mismatch / r.initial_mismatch : 0.0},
              {"truth_r0", ac.truth_r0},
              {"guess_r0", ac.guess_r0},
              {"r0_time_average", avg}});
}

// ---------------------------------------------------------------------------
// Plot tables

namespace {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name, const fs::path& path) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw IoError(path.string() + ": no column " + name);
    return static_cast<std::size_t>(it - header.begin());
  }
};

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

Table read_table(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  Table t;
  std::string line;
  if (!std::getline(is, line)) throw IoError(path.string() + ": empty file");
  t.header = split(line);
  while (std::getline(is, line)) {
    if (!line.empty()) t.rows.push_back(split(line));
  }
  return t;
}

class LongTable {
 public:
  LongTable(const fs::path& path, std::string figure) : os_(open_out(path)), figure_(std::move(figure)) {
    os_ << "figure,series,x,value\n";
  }
  void add(const std::string& series, double x, double value) {
    os_ << figure_ << ',' << series << ',' << x << ',' << value << '\n';
  }

 private:
  std::ofstream os_;
  std::string figure_;
};

const std::vector<std::pair<int, int>>& all_fields() {
  static const std::vector<std::pair<int, int>> f = [] {
    std::vector<std::pair<int, int>> v;
    for (int g = 0; g < epi::kGroups; ++g) {
      for (int c = 0; c < epi::kCompartments; ++c) v.emplace_back(g, c);
    }
    return v;
  }();
  return f;
}

std::string field_label(int g, int c) {
  return std::string(epi::group_name(static_cast<epi::Group>(g))) + ":" +
         epi::compartment_name(static_cast<epi::Compartment>(c));
}

double cell_value(const std::vector<double>& u, std::size_t n_cells, int g, int c,
                  std::size_t cell) {
  return u.at(static_cast<std::size_t>(g * epi::kCompartments + c) * n_cells + cell);
}

}  // namespace

const std::vector<std::string>& plot_names() {
  static const std::vector<std::string> names{"fig05_pod_variance", "fig09_high_fidelity",
                                              "fig11_prediction", "fig15_convergence",
                                              "fig16_r0_history", "fig18_observation_fit"};
  return names;
}

std::vector<fs::path> export_plots(const ExperimentConfig& cfg, const Layout& io,
                                   std::size_t cell, std::vector<std::string> figures) {
  if (figures.empty()) figures = plot_names();
  const auto grid = epi::Grid::idealised_town();
  if (cell >= grid.n_cells()) throw Error("export-plots: cell " + std::to_string(cell) + " is outside the grid");
  const std::size_t n_cells = grid.n_cells();

  auto need = [](const std::string& fig, const fs::path& p) {
    if (!fs::exists(p)) throw IoError(fig + ": missing artifact " + p.string());
    return p;
  };
  auto day_of_step = [&](double step) { return step * cfg.epi.dt / epi::kSecondsPerDay; };

  fs::create_directories(io.plots());
  std::vector<fs::path> written;
  for (const auto& fig : figures) {
    const fs::path out = io.plots() / (fig + ".csv");
    if (fig == "fig05_pod_variance") {
      const auto path = need(fig, io.train() / "variance.csv");
      const auto t = read_table(path);
      const auto mode = t.column("mode", path);
      const auto frac = t.column("variance_fraction", path);
      const auto cum = t.column("cumulative", path);
      LongTable lt(out, fig);
      for (const auto& r : t.rows) {
        lt.add("variance_fraction", std::stod(r.at(mode)), std::stod(r.at(frac)));
        lt.add("cumulative", std::stod(r.at(mode)), std::stod(r.at(cum)));
      }
    } else if (fig == "fig09_high_fidelity") {
      const auto truth = epi::SnapshotFile::load(need(fig, io.assimilate() / "truth.snap"));
      LongTable lt(out, fig);
      for (const auto& [g, c] : all_fields()) {
        for (std::size_t k = 0; k < truth.levels.size(); ++k) {
          lt.add(field_label(g, c), static_cast<double>(k) * truth.header.dt / epi::kSecondsPerDay,
                 cell_value(truth.levels[k], n_cells, g, c, cell));
        }
      }
    } else if (fig == "fig11_prediction") {
      const auto pred_run = epi::SnapshotFile::load(need(fig, io.predict() / "trajectory.snap"));
      const auto truth = epi::SnapshotFile::load(need(fig, io.predict() / "truth.snap"));
      const auto rpath = need(fig, io.predict() / "report.csv");
      const auto report = read_table(rpath);
      const auto step_col = report.column("step", rpath);
      const auto err_col = report.column("relative_l2_error", rpath);
      LongTable lt(out, fig);
      const std::size_t n = std::min({pred_run.levels.size(), truth.levels.size(), report.rows.size()});
      for (const auto& [g, c] : all_fields()) {
        for (std::size_t k = 0; k < n; ++k) {
          const double day = day_of_step(std::stod(report.rows[k].at(step_col)));
          lt.add("predicted " + field_label(g, c), day, cell_value(pred_run.levels[k], n_cells, g, c, cell));
          lt.add("truth " + field_label(g, c), day, cell_value(truth.levels[k], n_cells, g, c, cell));
        }
      }
      for (std::size_t k = 0; k < n; ++k) {
        const double day = day_of_step(std::stod(report.rows[k].at(step_col)));
        lt.add("relative_l2_error", day, std::stod(report.rows[k].at(err_col)));
      }
    } else if (fig == "fig15_convergence") {
      const auto path = need(fig, io.assimilate() / "diagnostics.csv");
      const auto t = read_table(path);
      auto os = open_out(out);
      os << "figure";
      for (const auto& h : t.header) os << ',' << h;
      os << '\n';
      for (const auto& r : t.rows) {
        os << fig;
        for (const auto& v : r) os << ',' << v;
        os << '\n';
      }
    } else if (fig == "fig16_r0_history") {
      const auto path = need(fig, io.assimilate() / "mu_history.csv");
      const auto summary = read_json(need(fig, io.assimilate() / "summary.json"));
      const auto stride = static_cast<double>(cfg.surrogate.stride);
      const auto t = read_table(path);
      const auto level = t.column("level", path);
      LongTable lt(out, fig);
      for (std::size_t i = 0; i < kMuNames.size(); ++i) {
        const auto col = t.column(kMuNames[i], path);
        const double truth = summary.at("truth_r0").at(i).get<double>();
        const double guess = summary.at("guess_r0").at(i).get<double>();
        for (const auto& r : t.rows) {
          const double day = day_of_step(std::stod(r.at(level)) * stride);
          lt.add(kMuNames[i] + " assimilated", day, std::stod(r.at(col)));
          lt.add(kMuNames[i] + " truth", day, truth);
          lt.add(kMuNames[i] + " guess", day, guess);
        }
      }
    } else if (fig == "fig18_observation_fit") {
      const auto obs = da::ObservationSet::read_csv(need(fig, io.assimilate() / "observations.csv"), grid);
      const auto initial = epi::SnapshotFile::load(need(fig, io.assimilate() / "initial.snap"));
      const auto final_run = epi::SnapshotFile::load(need(fig, io.assimilate() / "final.snap"));
      const auto stride = static_cast<double>(cfg.surrogate.stride);
      LongTable lt(out, fig);
      for (const auto& o : obs.entries()) {
        const std::string key = "c" + std::to_string(o.cell) + " " + group_label(o.group) + ":" +
                                epi::compartment_name(o.compartment);
        const double day = day_of_step(static_cast<double>(o.level) * stride);
        auto modelled = [&](const epi::SnapshotFile& f) {
          double v = 0.0;
          for (std::size_t s : obs.slots(o)) v += f.levels.at(o.level).at(s);
          return v;
        };
        lt.add(key + " observed", day, o.value);
        if (o.level < initial.levels.size()) lt.add(key + " initial", day, modelled(initial));
        if (o.level < final_run.levels.size()) lt.add(key + " final", day, modelled(final_run));
      }
    } else {
      throw Error("export-plots: unknown figure '" + fig + "'");
    }
    written.push_back(out);
  }
  return written;
}

}  // namespace predgan::pipeline
