// Command line driver: train mean-field ReLU networks, solve the Gibbs fixed
// point, report cluster sets and extracted knots, and rebuild the built-in
// figure experiments.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "mfpl/experiment.hpp"
#include "mfpl/figures.hpp"
#include "mfpl/verify.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kValidationError = 2;
constexpr int kNumericalError = 3;

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw mfpl::ConfigError("cannot open " + path);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file(const std::string& dir, const std::string& name, const std::string& text) {
  std::filesystem::create_directories(dir);
  std::ofstream out(std::filesystem::path(dir) / name, std::ios::binary);
  out << text;
}

mfpl::ExperimentConfig load_config(const std::string& path, std::uint64_t seed,
                                   bool seed_set) {
  mfpl::ExperimentConfig cfg = mfpl::ExperimentConfig::from_file(path);
  if (seed_set) cfg.train.seed = seed;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mean-field piecewise-linear laboratory"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", checkpoint_path, figure_id, mode = "noiseless";
  std::uint64_t seed = 0;
  bool seed_set = false;
  double lambda = 0.5;

  const auto add_common = [&](CLI::App* cmd, bool config_required) {
    auto* copt = cmd->add_option("--config", config_path, "experiment config (JSON)");
    if (config_required) copt->required();
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_option("--seed", seed, "RNG seed override")->each([&](const std::string&) {
      seed_set = true;
    });
  };

  auto* cmd_train = app.add_subcommand("train", "train a particle network and emit artifacts");
  add_common(cmd_train, true);

  auto* cmd_gibbs = app.add_subcommand("gibbs", "solve the Gibbs fixed point for a config");
  add_common(cmd_gibbs, true);

  auto* cmd_cluster = app.add_subcommand("cluster", "cluster set from a trained checkpoint");
  add_common(cmd_cluster, true);
  cmd_cluster->add_option("--checkpoint", checkpoint_path, "ensemble checkpoint JSON")
      ->required();

  auto* cmd_knots = app.add_subcommand("knots", "extract knots from a trained checkpoint");
  add_common(cmd_knots, true);
  cmd_knots->add_option("--checkpoint", checkpoint_path, "ensemble checkpoint JSON")
      ->required();

  auto* cmd_fe = app.add_subcommand("free-energy", "free-energy report for a checkpoint");
  add_common(cmd_fe, true);
  cmd_fe->add_option("--checkpoint", checkpoint_path, "ensemble checkpoint JSON")->required();

  auto* cmd_verify =
      app.add_subcommand("verify-counterexample", "analytic two-point counterexample checks");
  add_common(cmd_verify, false);
  cmd_verify->add_option("--lambda", lambda, "regularization in (0, 1]");
  cmd_verify->add_option("--mode", mode, "noiseless | lowtemp");

  auto* cmd_repro = app.add_subcommand("reproduce", "rebuild a figure experiment");
  add_common(cmd_repro, false);
  cmd_repro->add_option("--figure", figure_id, "fig1a..fig1c, fig5b, fig6a..c, fig7a..d")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_train->parsed()) {
      const auto rep = mfpl::run_experiment(load_config(config_path, seed, seed_set), out_dir);
      std::cout << rep.to_json() << '\n';
      return kOk;
    }
    if (cmd_gibbs->parsed()) {
      const auto cfg = load_config(config_path, seed, seed_set);
      mfpl::FixedPointOptions fp;
      fp.eta = cfg.gibbs.eta;
      fp.tol = cfg.gibbs.tol;
      fp.max_iters = cfg.gibbs.max_iters;
      fp.backend = cfg.gibbs.backend;
      const auto res = mfpl::solve_fixed_point(cfg.dataset, cfg.activation, cfg.train.lambda,
                                               cfg.gibbs.beta, fp);
      write_file(out_dir, "gibbs_state.json", res.state.to_json());
      res.trace_to_csv((std::filesystem::path(out_dir) / "gibbs_trace.csv").string());
      const auto fe = mfpl::free_energy_of_gibbs(res.state, cfg.dataset, res.expectations);
      nlohmann::json j;
      j["risk"] = fe.risk;
      j["second_moment"] = fe.second_moment;
      j["entropy"] = *fe.entropy;
      j["free_energy"] = *fe.free_energy;
      j["log_z"] = res.state.log_z;
      j["iterations"] = res.trace.size();
      write_file(out_dir, "free_energy.json", j.dump(2));
      std::cout << j.dump(2) << '\n';
      return kOk;
    }
    if (cmd_cluster->parsed()) {
      const auto cfg = load_config(config_path, seed, seed_set);
      const auto ens = mfpl::ParticleEnsemble::from_json(slurp(checkpoint_path));
      const auto rv = mfpl::residuals(ens, cfg.dataset);
      const double L = cfg.L ? *cfg.L : mfpl::default_padding(cfg.dataset);
      const double cl = cfg.cluster_lambda ? *cfg.cluster_lambda : cfg.train.lambda;
      const auto rep =
          mfpl::cluster_report(rv, cfg.dataset, mfpl::make_intervals(cfg.dataset, L), cl);
      write_file(out_dir, "cluster.json", rep.to_json());
      std::cout << rep.to_json() << '\n';
      return kOk;
    }
    if (cmd_knots->parsed()) {
      const auto cfg = load_config(config_path, seed, seed_set);
      const auto ens = mfpl::ParticleEnsemble::from_json(slurp(checkpoint_path));
      const double lo = cfg.dataset.x.front(), hi = cfg.dataset.x.back();
      const auto pwl = mfpl::extract_pwl([&](double x) { return mfpl::predict(ens, x); },
                                         [&](double x) { return mfpl::predict_slope(ens, x); },
                                         lo, hi, cfg.extract);
      const double L = cfg.L ? *cfg.L : mfpl::default_padding(cfg.dataset);
      const double step = (hi - lo) / static_cast<double>(cfg.extract.grid_n - 1);
      const auto verdict =
          mfpl::check_admissible(pwl, mfpl::make_intervals(cfg.dataset, L), 2.0 * step);
      write_file(out_dir, "pwl.json", pwl.to_json());
      write_file(out_dir, "verdict.json", verdict.to_json());
      std::cout << verdict.to_json() << '\n';
      return kOk;
    }
    if (cmd_fe->parsed()) {
      const auto cfg = load_config(config_path, seed, seed_set);
      const auto ens = mfpl::ParticleEnsemble::from_json(slurp(checkpoint_path));
      const auto fe = mfpl::free_energy_of_ensemble(ens, cfg.dataset, cfg.train.lambda);
      nlohmann::json j;
      j["risk"] = fe.risk;
      j["second_moment"] = fe.second_moment;
      j["entropy"] = nullptr;  // unavailable for particle ensembles
      write_file(out_dir, "free_energy.json", j.dump(2));
      std::cout << j.dump(2) << '\n';
      return kOk;
    }
    if (cmd_verify->parsed()) {
      if (mode == "noiseless") {
        const auto rep = mfpl::verify_counterexample_noiseless(lambda);
        write_file(out_dir, "counterexample_noiseless.json", rep.to_json());
        std::cout << rep.to_json() << '\n';
        return rep.argmin_ok && rep.min_ok && rep.noiseless_chain_strict &&
                       rep.lowtemp_chain_strict
                   ? kOk
                   : kNumericalError;
      }
      if (mode == "lowtemp") {
        const auto rep = mfpl::verify_counterexample_lowtemp({1e2, 1e3, 1e4}, 20000,
                                                             seed_set ? seed : 20240901);
        write_file(out_dir, "counterexample_lowtemp.json", rep.to_json());
        std::cout << rep.to_json() << '\n';
        return rep.gap_decreasing && rep.risk_vanishing ? kOk : kNumericalError;
      }
      std::cerr << "unknown mode " << mode << '\n';
      return kValidationError;
    }
    if (cmd_repro->parsed()) {
      const auto rep = mfpl::reproduce(
          figure_id, out_dir, seed_set ? std::optional<std::uint64_t>(seed) : std::nullopt);
      std::cout << rep.to_json() << '\n';
      return kOk;
    }
  } catch (const mfpl::NotConverged& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumericalError;
  } catch (const mfpl::NonFinite& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumericalError;
  } catch (const mfpl::QuadratureNotConverged& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumericalError;
  } catch (const mfpl::ChainNotMixed& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumericalError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidationError;
  }
  return kValidationError;
}
