#ifndef MFPL_EXPERIMENT_HPP
#define MFPL_EXPERIMENT_HPP

#include <optional>
#include <string>
#include <vector>

#include "mfpl/clusterset.hpp"
#include "mfpl/data.hpp"
#include "mfpl/gibbs.hpp"
#include "mfpl/particle.hpp"
#include "mfpl/pwl.hpp"

namespace mfpl {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct GibbsToggles {
  bool enabled = false;
  double beta = 50.0;
  double eta = 0.5;
  double tol = 1e-6;
  std::size_t max_iters = 500;
  GibbsBackend backend = GibbsBackend::TensorQuadrature;
};

struct ExperimentConfig {
  std::string name = "experiment";
  Dataset dataset;
  ActivationSpec activation = ActivationSpec::relu_exact();
  std::size_t n_particles = 500;
  TrainConfig train;
  GibbsToggles gibbs;
  ExtractOptions extract;
  bool extract_padded_domain = false;  // default: knots over [x_1, x_M]
  std::optional<double> L;             // padding; default_padding(ds) if unset
  std::optional<double> cluster_lambda;  // defaults to train.lambda when > 0

  std::string to_json() const;
  static ExperimentConfig from_json(const std::string& text);
  static ExperimentConfig from_file(const std::string& path);
};

struct ExperimentReport {
  std::string name;
  double final_risk = 0;
  std::vector<double> residuals;
  std::size_t knot_count = 0;
  std::vector<double> knots;
  bool admissible = true;
  double cluster_measure = 0;
  double second_moment = 0;
  std::optional<double> gibbs_risk;
  std::vector<std::string> manifest;

  std::string to_json() const;
};

// train -> residuals -> cluster -> knots -> verdict, flushing artifacts into
// out_dir (report.json, predictor.csv, cluster.json, pwl.json, trace.csv,
// checkpoint.json, plot.svg)
ExperimentReport run_experiment(const ExperimentConfig& cfg, const std::string& out_dir);

struct CurvatureProfile {
  std::vector<double> x;
  std::vector<double> curvature;
  IntervalSet dilated_cluster;
  double max_outside = 0;
  double max_inside = 0;
};

// |d^2/dx^2 yhat| over a grid with the delta-dilated cluster bands marked
CurvatureProfile curvature_profile(const ParticleEnsemble& ens, const Dataset& ds,
                                   const PredictionIntervals& intervals,
                                   const ClusterReport& cluster, std::size_t grid_n,
                                   double delta);

// same profile for a Gibbs state; curvature from the quadrature backend
CurvatureProfile curvature_profile(const GibbsState& state, const Dataset& ds,
                                   const PredictionIntervals& intervals,
                                   const ClusterReport& cluster, std::size_t grid_n,
                                   double delta);

}  // namespace mfpl

#endif
