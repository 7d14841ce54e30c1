#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "predgan/pipeline/config.hpp"
#include "predgan/pipeline/pipeline.hpp"
#include "predgan/util/error.hpp"

using namespace predgan;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kFailure = 1, kUsage = 2, kIo = 3, kNotConverged = 4 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::string out_dir = "run";

  void add_to(CLI::App* app, bool needs_threads = false) {
    app->add_option("--config", config, "Experiment config (JSON); defaults when omitted");
    app->add_option("--seed", seed, "Override the config seed");
    app->add_option("--out-dir", out_dir, "Artifact directory")->capture_default_str();
    if (needs_threads) {
      app->add_option("--threads", threads, "Members simulated concurrently")
          ->check(CLI::PositiveNumber)
          ->capture_default_str();
    }
  }

  pipeline::ExperimentConfig load() const {
    auto cfg = config.empty() ? pipeline::ExperimentConfig{} : pipeline::load_config(config);
    if (seed) cfg.seed = *seed;
    cfg.validate();
    return cfg;
  }
};

void status(const json& j) { std::cout << j.dump() << std::endl; }

int fail(const char* kind, const std::string& message, int code) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << std::endl;
  return code;
}

void progress(const std::string& line) { std::cerr << line << std::endl; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale PredGAN and DA-PredGAN experiments on an idealised town"};
  app.require_subcommand(1);

  auto* config_cmd = app.add_subcommand("config", "Config file helpers");
  config_cmd->require_subcommand(1);
  auto* init = config_cmd->add_subcommand("init", "Print or write a config with every default");
  std::string init_preset = "default";
  std::string init_out;
  init->add_option("--preset", init_preset, "default, smoke or desk")->capture_default_str();
  init->add_option("--out", init_out, "Write to this file instead of stdout");

  Common gen_opts, train_opts, predict_opts, da_opts, plot_opts;
  auto* gen = app.add_subcommand("generate-ensemble", "Simulate the high-fidelity ensemble");
  gen_opts.add_to(gen, true);

  auto* train = app.add_subcommand("train", "Build the POD basis and train the GAN");
  train_opts.add_to(train);

  auto* predict = app.add_subcommand("predict", "Roll the surrogate out in time");
  predict_opts.add_to(predict);
  std::vector<double> predict_r0;
  std::string reference;
  std::optional<std::size_t> start_level;
  predict->add_option("--start-level", start_level,
                      "Stored level of the reference the initial levels start at");
  predict->add_option("--r0", predict_r0, "R0 home and mobile (defaults to the config)")
      ->expected(2);
  predict->add_option("--reference", reference,
                      "High-fidelity snapshot providing the initial levels; simulated at --r0 "
                      "when omitted");

  auto* da = app.add_subcommand("assimilate", "Twin-experiment data assimilation");
  da_opts.add_to(da);
  std::string observations;
  da->add_option("--observations", observations, "Observation CSV replacing the sampled set");

  auto* plots = app.add_subcommand("export-plots", "Write figure tables from the artifacts");
  plot_opts.add_to(plots);
  int cell = -1;
  std::vector<std::string> figures;
  plots->add_option("--cell", cell, "Cell index for the time-series figures");
  plots->add_option("--figures", figures, "Subset of figure tables")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), kUsage);
  }

  try {
    if (init->parsed()) {
      const auto cfg = pipeline::preset(init_preset);
      if (init_out.empty()) {
        std::cout << pipeline::to_json(cfg).dump(2) << std::endl;
      } else {
        pipeline::save_config(init_out, cfg);
        status({{"command", "config init"}, {"status", "ok"}, {"path", init_out}});
      }
      return kOk;
    }

    if (gen->parsed()) {
      const auto cfg = gen_opts.load();
      const pipeline::Layout io{gen_opts.out_dir};
      const auto m = pipeline::generate_ensemble(cfg, io, gen_opts.threads);
      int ok = 0;
      for (const auto& r : m.members) ok += r.ok ? 1 : 0;
      status({{"command", "generate-ensemble"},
              {"status", "ok"},
              {"members", m.members.size()},
              {"succeeded", ok},
              {"manifest", io.ensemble_manifest().string()},
              {"digest", m.digest()}});
      return kOk;
    }

    if (train->parsed()) {
      const auto cfg = train_opts.load();
      const pipeline::Layout io{train_opts.out_dir};
      const int every = std::max(1, cfg.surrogate.training.epochs / 20);
      const auto s = pipeline::train_surrogate(cfg, io, [&](const gan::EpochLoss& e) {
        if (e.epoch % every == 0 || e.epoch == cfg.surrogate.training.epochs) {
          progress(json{{"epoch", e.epoch}, {"d_loss", e.discriminator}, {"g_loss", e.generator}}
                       .dump());
        }
      });
      status({{"command", "train"},
              {"status", "ok"},
              {"captured_variance", s.captured_variance},
              {"windows", s.windows},
              {"warnings", s.warnings}});
      return kOk;
    }

    if (predict->parsed()) {
      auto cfg = predict_opts.load();
      if (start_level) cfg.predict.start_level = *start_level;
      const pipeline::Layout io{predict_opts.out_dir};
      auto surrogate = pipeline::Surrogate::load(io);
      std::array<double, 2> r0 = cfg.predict.r0;
      if (!predict_r0.empty()) r0 = {predict_r0[0], predict_r0[1]};
      epi::SnapshotFile ref;
      bool truth = true;
      if (reference.empty()) {
        ref = pipeline::simulate_run(cfg, r0[0], r0[1]);
      } else {
        ref = epi::SnapshotFile::load(reference);
        truth = ref.header.params.r0_home == r0[0] && ref.header.params.r0_mobile == r0[1];
      }
      const auto p = pipeline::predict(cfg, surrogate, ref, r0, truth);
      pipeline::write_prediction(io.predict(), cfg, surrogate, p, cfg.digest());
      json j{{"command", "predict"},
             {"status", "ok"},
             {"levels", p.states.size()},
             {"converged", p.rollout.all_converged}};
      if (truth) j["mean_relative_l2_error"] = p.mean_relative_error;
      status(j);
      return kOk;
    }

    if (da->parsed()) {
      const auto cfg = da_opts.load();
      const pipeline::Layout io{da_opts.out_dir};
      auto surrogate = pipeline::Surrogate::load(io);
      std::optional<da::ObservationSet> obs;
      if (!observations.empty()) {
        obs = da::ObservationSet::read_csv(observations, epi::Grid::idealised_town());
      }
      const auto a = pipeline::assimilate(cfg, surrogate, obs);
      pipeline::write_assimilation(io.assimilate(), cfg, surrogate, a, cfg.digest());
      const auto& r = a.result;
      status({{"command", "assimilate"},
              {"status", r.converged ? "ok" : "not_converged"},
              {"converged", r.converged},
              {"outer_iterations", r.history.size()},
              {"initial_mismatch", r.initial_mismatch},
              {"final_mismatch", r.final_mismatch}});
      return r.converged ? kOk : kNotConverged;
    }

    if (plots->parsed()) {
      const auto cfg = plot_opts.load();
      const pipeline::Layout io{plot_opts.out_dir};
      const auto grid = epi::Grid::idealised_town();
      const std::size_t c =
          cell >= 0 ? static_cast<std::size_t>(cell) : grid.bottom_left_cell(epi::Grid::kHomeRegion);
      const auto files = pipeline::export_plots(cfg, io, c, figures);
      json list = json::array();
      for (const auto& f : files) list.push_back(f.string());
      status({{"command", "export-plots"}, {"status", "ok"}, {"cell", c}, {"files", list}});
      return kOk;
    }
  } catch (const ConvergenceError& e) {
    return fail("convergence", e.what(), kNotConverged);
  } catch (const IoError& e) {
    return fail("io", e.what(), kIo);
  } catch (const std::exception& e) {
    return fail("error", e.what(), kFailure);
  }
  return kOk;
}
