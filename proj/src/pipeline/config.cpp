#include "predgan/pipeline/config.hpp"

#include <fstream>
#include <set>

#include "predgan/util/digest.hpp"
#include "predgan/util/error.hpp"

namespace predgan::pipeline {

using nlohmann::json;

epi::EpiParams EpiConfig::params(double r0_home, double r0_mobile) const {
  epi::EpiParams p;
  p.eta = 1.0 / (lifespan_years * 365.0 * epi::kSecondsPerDay);
  p.nu = p.eta;
  p.xi = 1.0 / (immunity_days * epi::kSecondsPerDay);
  p.sigma = 1.0 / (latency_days * epi::kSecondsPerDay);
  p.gamma = 1.0 / (infectious_days * epi::kSecondsPerDay);
  p.r0_home = r0_home;
  p.r0_mobile = r0_mobile;
  return p;
}

epi::TransportParams EpiConfig::transport() const {
  epi::TransportParams t;
  for (auto& k : t.diffusion[static_cast<int>(epi::Group::Home)]) k = home_diffusion;
  for (auto& k : t.diffusion[static_cast<int>(epi::Group::Mobile)]) k = mobile_diffusion;
  t.lambda0 = exchange_rate_per_day / epi::kSecondsPerDay;
  t.exchange_in_home_region_only = exchange_in_home_region_only;
  return t;
}

epi::SolverConfig EpiConfig::solver() const {
  epi::SolverConfig s;
  s.substeps = substeps;
  return s;
}

namespace {

// Reads the keys of one JSON object, remembering which were consumed so that
// leftovers (typos) can be reported.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw Error("config: " + path_ + " must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    used_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw Error("config: " + path_ + "." + key + ": " + e.what());
    }
  }

  Section sub(const char* key) {
    used_.insert(key);
    static const json empty = json::object();
    return Section(j_.contains(key) ? j_.at(key) : empty, path_ + "." + key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!used_.count(k)) throw Error("config: unknown key " + path_ + "." + k);
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

json adam_json(const ad::AdamConfig& a) {
  return {{"lr", a.lr}, {"beta1", a.beta1}, {"beta2", a.beta2}, {"eps", a.eps}};
}

void read_adam(Section s, ad::AdamConfig& a) {
  s.get("lr", a.lr);
  s.get("beta1", a.beta1);
  s.get("beta2", a.beta2);
  s.get("eps", a.eps);
  s.finish();
}

}  // namespace

json to_json(const ExperimentConfig& c) {
  const auto& e = c.epi;
  const auto& s = c.surrogate;
  const auto& t = s.training;
  const auto& p = c.predict;
  const auto& a = c.assimilate;
  json j;
  j["seed"] = c.seed;
  j["epi"] = {{"population_per_home_cell", e.population_per_home_cell},
              {"exposed_fraction", e.exposed_fraction},
              {"latency_days", e.latency_days},
              {"infectious_days", e.infectious_days},
              {"immunity_days", e.immunity_days},
              {"lifespan_years", e.lifespan_years},
              {"r0_min", e.r0_min},
              {"r0_max", e.r0_max},
              {"mobile_diffusion", e.mobile_diffusion},
              {"home_diffusion", e.home_diffusion},
              {"exchange_rate_per_day", e.exchange_rate_per_day},
              {"exchange_in_home_region_only", e.exchange_in_home_region_only},
              {"dt", e.dt},
              {"n_steps", e.n_steps},
              {"substeps", e.substeps}};
  j["ensemble"] = {{"members", c.ensemble.members}};
  j["surrogate"] = {
      {"n_pod", s.n_pod},
      {"window", s.window},
      {"stride", s.stride},
      {"window_subsample", s.window_subsample},
      {"network",
       {{"n_z", s.network.n_z},
        {"generator_hidden", s.network.generator_hidden},
        {"discriminator_hidden", s.network.discriminator_hidden},
        {"leaky_slope", s.network.leaky_slope}}},
      {"training",
       {{"epochs", t.epochs},
        {"batch_size", t.batch_size},
        {"generator_adam", adam_json(t.generator_adam)},
        {"discriminator_adam", adam_json(t.discriminator_adam)},
        {"saturating_generator_loss", t.saturating_generator_loss},
        {"final_lr_fraction", t.final_lr_fraction},
        {"instance_noise", t.instance_noise},
        {"r1_penalty", t.r1_penalty},
        {"checkpoint_interval", t.checkpoint_interval}}}};
  j["predict"] = {{"zeta_mu_hat", p.zeta_mu_hat},
                  {"max_iterations", p.optimizer.max_iterations},
                  {"stop_window", p.optimizer.window},
                  {"rel_tol", p.optimizer.rel_tol},
                  {"adam", adam_json(p.optimizer.adam)},
                  {"first_level_restarts", p.first_level_restarts},
                  {"start_level", p.start_level},
                  {"r0", p.r0}};
  j["assimilate"] = {
      {"truth_r0", a.truth_r0},
      {"guess_r0", a.guess_r0},
      {"levels", a.levels},
      {"zeta_obs_hat", a.weights.zeta_obs_hat},
      {"zeta_mu_prediction", a.weights.zeta_mu_prediction},
      {"zeta_mu_start", a.weights.zeta_mu_start},
      {"zeta_mu_growth", a.weights.zeta_mu_growth},
      {"max_outer_iterations", a.relaxation.max_outer_iterations},
      {"r_shrink", a.relaxation.shrink},
      {"r_growth", a.relaxation.growth},
      {"r_converged_below", a.relaxation.converged_below},
      {"anchor_previous_level", a.anchor_previous_level},
      {"adapt_mu_weights", a.adaptation.enabled},
      {"observations",
       {{"regions", a.observations.regions},
        {"fields", a.observations.fields},
        {"every_days", a.observations.every_days},
        {"noise", a.observations.noise},
        {"weight", a.observations.weight}}}};
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  Section root(j, "config");
  root.get("seed", c.seed);
  {
    auto s = root.sub("epi");
    auto& e = c.epi;
    s.get("population_per_home_cell", e.population_per_home_cell);
    s.get("exposed_fraction", e.exposed_fraction);
    s.get("latency_days", e.latency_days);
    s.get("infectious_days", e.infectious_days);
    s.get("immunity_days", e.immunity_days);
    s.get("lifespan_years", e.lifespan_years);
    s.get("r0_min", e.r0_min);
    s.get("r0_max", e.r0_max);
    s.get("mobile_diffusion", e.mobile_diffusion);
    s.get("home_diffusion", e.home_diffusion);
    s.get("exchange_rate_per_day", e.exchange_rate_per_day);
    s.get("exchange_in_home_region_only", e.exchange_in_home_region_only);
    s.get("dt", e.dt);
    s.get("n_steps", e.n_steps);
    s.get("substeps", e.substeps);
    s.finish();
  }
  {
    auto s = root.sub("ensemble");
    s.get("members", c.ensemble.members);
    s.finish();
  }
  {
    auto s = root.sub("surrogate");
    auto& g = c.surrogate;
    s.get("n_pod", g.n_pod);
    s.get("window", g.window);
    s.get("stride", g.stride);
    s.get("window_subsample", g.window_subsample);
    auto n = s.sub("network");
    n.get("n_z", g.network.n_z);
    n.get("generator_hidden", g.network.generator_hidden);
    n.get("discriminator_hidden", g.network.discriminator_hidden);
    n.get("leaky_slope", g.network.leaky_slope);
    n.finish();
    auto t = s.sub("training");
    t.get("epochs", g.training.epochs);
    t.get("batch_size", g.training.batch_size);
    read_adam(t.sub("generator_adam"), g.training.generator_adam);
    read_adam(t.sub("discriminator_adam"), g.training.discriminator_adam);
    t.get("saturating_generator_loss", g.training.saturating_generator_loss);
    t.get("final_lr_fraction", g.training.final_lr_fraction);
    t.get("instance_noise", g.training.instance_noise);
    t.get("r1_penalty", g.training.r1_penalty);
    t.get("checkpoint_interval", g.training.checkpoint_interval);
    t.finish();
    s.finish();
  }
  {
    auto s = root.sub("predict");
    auto& p = c.predict;
    s.get("zeta_mu_hat", p.zeta_mu_hat);
    s.get("max_iterations", p.optimizer.max_iterations);
    s.get("stop_window", p.optimizer.window);
    s.get("rel_tol", p.optimizer.rel_tol);
    read_adam(s.sub("adam"), p.optimizer.adam);
    s.get("first_level_restarts", p.first_level_restarts);
    s.get("start_level", p.start_level);
    s.get("r0", p.r0);
    s.finish();
  }
  {
    auto s = root.sub("assimilate");
    auto& a = c.assimilate;
    s.get("truth_r0", a.truth_r0);
    s.get("guess_r0", a.guess_r0);
    s.get("levels", a.levels);
    s.get("zeta_obs_hat", a.weights.zeta_obs_hat);
    s.get("zeta_mu_prediction", a.weights.zeta_mu_prediction);
    s.get("zeta_mu_start", a.weights.zeta_mu_start);
    s.get("zeta_mu_growth", a.weights.zeta_mu_growth);
    s.get("max_outer_iterations", a.relaxation.max_outer_iterations);
    s.get("r_shrink", a.relaxation.shrink);
    s.get("r_growth", a.relaxation.growth);
    s.get("r_converged_below", a.relaxation.converged_below);
    s.get("anchor_previous_level", a.anchor_previous_level);
    s.get("adapt_mu_weights", a.adaptation.enabled);
    auto o = s.sub("observations");
    o.get("regions", a.observations.regions);
    o.get("fields", a.observations.fields);
    o.get("every_days", a.observations.every_days);
    o.get("noise", a.observations.noise);
    o.get("weight", a.observations.weight);
    o.finish();
    s.finish();
  }
  root.finish();
  c.validate();
  return c;
}

void ExperimentConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw Error("config: " + what);
  };
  require(epi.dt > 0.0, "epi.dt must be positive");
  require(epi.n_steps >= 1, "epi.n_steps must be at least 1");
  require(epi.substeps >= 1, "epi.substeps must be at least 1");
  require(epi.r0_min >= 0.0 && epi.r0_max > epi.r0_min, "epi.r0_min < epi.r0_max required");
  require(epi.exposed_fraction >= 0.0 && epi.exposed_fraction <= 1.0, "epi.exposed_fraction must lie in [0, 1]");
  require(ensemble.members >= 1, "ensemble.members must be at least 1");
  require(surrogate.n_pod >= 1, "surrogate.n_pod must be at least 1");
  require(surrogate.window >= 2, "surrogate.window must be at least 2");
  require(surrogate.stride >= 1, "surrogate.stride must be at least 1");
  require(surrogate.window_subsample >= 1, "surrogate.window_subsample must be at least 1");
  require(surrogate.training.batch_size >= 1, "surrogate.training.batch_size must be at least 1");
  require(predict.optimizer.max_iterations >= 0, "predict.max_iterations must be non-negative");
  require(assimilate.relaxation.max_outer_iterations >= 1, "assimilate.max_outer_iterations must be at least 1");
  require(!assimilate.observations.fields.empty(), "assimilate.observations.fields is empty");
  require(!assimilate.observations.regions.empty(), "assimilate.observations.regions is empty");
  require(assimilate.observations.noise >= 0.0, "assimilate.observations.noise must be non-negative");
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"default", "smoke", "desk"};
  return names;
}

ExperimentConfig preset(const std::string& name) {
  ExperimentConfig c;
  if (name == "default") return c;
  if (name == "smoke") {
    c.epi.n_steps = 60;
    c.epi.substeps = 4;
    c.ensemble.members = 4;
    c.surrogate.n_pod = 5;
    c.surrogate.network.n_z = 8;
    c.surrogate.network.generator_hidden = {32, 64};
    c.surrogate.network.discriminator_hidden = {64, 32};
    c.surrogate.training.epochs = 200;
    c.predict.optimizer.max_iterations = 50;
    c.predict.first_level_restarts = 2;
    c.assimilate.levels = 20;
    c.assimilate.relaxation.max_outer_iterations = 3;
    return c;
  }
  if (name == "desk") {
    c.epi.substeps = 8;
    c.surrogate.window_subsample = 2;
    c.surrogate.training.epochs = 300;
    c.surrogate.training.final_lr_fraction = 0.1;
    c.predict.optimizer.max_iterations = 300;
    c.assimilate.levels = 120;
    return c;
  }
  throw Error("unknown preset '" + name + "'");
}

std::string ExperimentConfig::digest() const { return digest_hex(to_json(*this).dump()); }

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw Error("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void save_config(const std::filesystem::path& path, const ExperimentConfig& cfg) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << to_json(cfg).dump(2) << '\n';
}

}  // namespace predgan::pipeline
