#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "mfpl/experiment.hpp"
#include "mfpl/figures.hpp"
#include "mfpl/verify.hpp"

using namespace mfpl;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.name = "tiny";
  cfg.dataset = Dataset::from_points({{-10.0, 2.0}, {10.0, 2.0}});
  cfg.activation = ActivationSpec::relu_exact();
  cfg.n_particles = 60;
  cfg.train.eps = 0.005;
  cfg.train.steps = 4000;
  cfg.train.seed = 11;
  cfg.L = 15.0;
  cfg.extract.grid_n = 801;
  return cfg;
}

}  // namespace

TEST_CASE("noiseless counterexample checks") {
  for (double lambda : {0.1, 0.5, 1.0}) {
    const auto rep = verify_counterexample_noiseless(lambda);
    CHECK(rep.two_atom_risk <= 1e-20);
    // direct-sum oracle gives 4/5 per unit of ybar/xbar scale here
    CHECK(rep.two_atom_second_moment == doctest::Approx(0.8).epsilon(1e-14));
    CHECK(std::abs(rep.argmin - (-lambda)) <= 1e-4 + 1e-12);
    CHECK(std::abs(rep.min_value - (2 * lambda - 0.5 * lambda * lambda)) <= 1e-6);
    CHECK(rep.argmin_ok);
    CHECK(rep.min_ok);
    CHECK(rep.noiseless_chain_strict);
    CHECK(rep.lowtemp_chain_strict);
  }
  CHECK_THROWS_AS(verify_counterexample_noiseless(0.0), LambdaOutOfRange);
  CHECK_THROWS_AS(verify_counterexample_noiseless(1.5), LambdaOutOfRange);
}

TEST_CASE("lambda=1 inequality margins quoted against the oracle moment") {
  const auto rep = verify_counterexample_noiseless(1.0);
  // linear candidates: >= 2 - 1/2 = 3/2; low-temperature chain: >= 7/8
  CHECK(rep.linear_lower_bound == doctest::Approx(1.5));
  CHECK(rep.lowtemp_linear_lower_bound == doctest::Approx(0.875));
  // two-atom free energy with the oracle moment 4/5: lambda/2 * 4/5 = 2/5
  CHECK(rep.free_energy_two_atom == doctest::Approx(0.4));
  CHECK(rep.linear_lower_bound > rep.free_energy_two_atom);
  CHECK(rep.lowtemp_linear_lower_bound > rep.free_energy_two_atom);
}

TEST_CASE("low-temperature mixture counterexample") {
  const auto rep = verify_counterexample_lowtemp({1e2, 1e3, 1e4}, 20000, 99);
  REQUIRE(rep.sup_gap.size() == 3);
  CHECK(rep.gap_decreasing);
  CHECK(rep.risk_vanishing);
  CHECK(rep.sup_gap.back() <= 0.05);
  CHECK(rep.oracle_second_moment == doctest::Approx(0.8).epsilon(1e-14));
  // M(rho*_beta) approaches the oracle moment
  CHECK(std::abs(rep.second_moment.back() - 0.8) <= 0.02);
}

TEST_CASE("experiment config json round trip") {
  ExperimentConfig cfg = tiny_config();
  cfg.train.lambda = 0.25;
  cfg.gibbs.enabled = false;
  cfg.cluster_lambda = 0.3;
  const ExperimentConfig back = ExperimentConfig::from_json(cfg.to_json());
  CHECK(back.name == "tiny");
  CHECK(back.dataset.x == cfg.dataset.x);
  CHECK(back.n_particles == 60);
  CHECK(back.train.lambda == 0.25);
  CHECK(back.train.steps == 4000);
  CHECK(*back.cluster_lambda == 0.3);
  CHECK(*back.L == 15.0);
  CHECK_THROWS_AS(ExperimentConfig::from_json("{}"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json("not json"), ConfigError);
}

TEST_CASE("run_experiment emits a complete, deterministic artifact set") {
  const fs::path base = fs::temp_directory_path() / "mfpl_harness_test";
  fs::remove_all(base);
  const ExperimentConfig cfg = tiny_config();
  const ExperimentReport rep1 = run_experiment(cfg, (base / "run1").string());
  const ExperimentReport rep2 = run_experiment(cfg, (base / "run2").string());

  for (const char* f : {"report.json", "predictor.csv", "pwl.json", "trace.csv",
                        "checkpoint.json", "verdict.json", "plot.svg", "config.json"})
    CHECK(fs::exists(base / "run1" / f));

  // byte-identical outputs for the same seed
  for (const char* f : {"predictor.csv", "trace.csv", "checkpoint.json", "pwl.json"})
    CHECK(slurp(base / "run1" / f) == slurp(base / "run2" / f));
  CHECK(rep1.final_risk == rep2.final_risk);

  // report numerics recomputable from the checkpoint
  const ParticleEnsemble ens =
      ParticleEnsemble::from_json(slurp(base / "run1" / "checkpoint.json"));
  CHECK(empirical_risk(ens, cfg.dataset) == doctest::Approx(rep1.final_risk).epsilon(1e-12));
  const ResidualVector rv = residuals(ens, cfg.dataset);
  for (std::size_t i = 0; i < rv.size(); ++i)
    CHECK(rv.r[i] == doctest::Approx(rep1.residuals[i]).epsilon(1e-12));

  fs::remove_all(base);
}

TEST_CASE("curvature profile splits inside and outside the dilated cluster set") {
  const Dataset ds = Dataset::from_points({{-1.0, 0.3}, {1.0, 0.3}});
  const auto spec = ActivationSpec::smooth_truncated(4.0, 2.5);
  TrainConfig tc;
  tc.eps = 0.02;
  tc.steps = 20000;
  tc.seed = 3;
  tc.lambda = 0.05;
  const TrainResult tr = train(ds, tc, 100, spec);
  const PredictionIntervals intervals = make_intervals(ds, default_padding(ds));
  const ResidualVector rv = residuals(tr.ensemble, ds);
  const ClusterReport cluster = cluster_report(rv, ds, intervals, 0.05);
  const CurvatureProfile prof = curvature_profile(tr.ensemble, ds, intervals, cluster, 401, 0.05);
  CHECK(prof.x.size() == 401);
  CHECK(prof.max_outside >= 0.0);
  CHECK(prof.max_inside >= 0.0);
  const double grand = *std::max_element(
      prof.curvature.begin(), prof.curvature.end(),
      [](double p, double q) { return std::abs(p) < std::abs(q); });
  CHECK(std::max(prof.max_inside, prof.max_outside) ==
        doctest::Approx(std::abs(grand)).epsilon(1e-12));
}

TEST_CASE("gibbs r=0 state has near-zero curvature everywhere") {
  const Dataset ds = Dataset::from_points({{-1.0, 0.3}, {1.0, 0.3}});
  GibbsState st;
  st.spec = ActivationSpec::smooth_truncated(4.0, 2.5);
  st.lambda = 1.0;
  st.beta = 4.0;
  st.residuals.r = {0.0, 0.0};
  const PredictionIntervals intervals = make_intervals(ds, 2.0);
  const ClusterReport cluster = cluster_report(st.residuals, ds, intervals, 1.0);
  const CurvatureProfile prof = curvature_profile(st, ds, intervals, cluster, 51, 0.05);
  for (double c : prof.curvature) CHECK(std::abs(c) <= 1e-8);
}

TEST_CASE("figure registry") {
  CHECK(figure_ids().size() == 11);
  CHECK_THROWS_AS(figure_config("fig9z"), UnknownFigure);
  for (const std::string& id : figure_ids()) {
    const ExperimentConfig cfg = figure_config(id);
    CHECK(cfg.dataset.size() >= 2);
    CHECK(cfg.n_particles == 500);
  }
  // beta^-1 = 0 runs in the registry
  CHECK(figure_config("fig6c").train.beta_inv == 0.0);
  CHECK(figure_config("fig7c").train.lambda == doctest::Approx(0.003));
}
