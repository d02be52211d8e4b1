#ifndef MFPL_GIBBS_HPP
#define MFPL_GIBBS_HPP

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfpl/activation.hpp"
#include "mfpl/data.hpp"
#include "mfpl/particle.hpp"

namespace mfpl {

struct QuadratureNotConverged : std::runtime_error {
  explicit QuadratureNotConverged(const std::string& what) : std::runtime_error(what) {}
};
struct ChainNotMixed : std::runtime_error {
  explicit ChainNotMixed(const std::string& what) : std::runtime_error(what) {}
};

struct SolverTraceRow {
  std::size_t iter = 0;
  double gap = 0;
  double risk = 0;
};

struct NotConverged : std::runtime_error {
  std::vector<SolverTraceRow> trace;
  NotConverged(const std::string& what, std::vector<SolverTraceRow> t)
      : std::runtime_error(what), trace(std::move(t)) {}
};

enum class GibbsBackend { TensorQuadrature, Mala };

// Self-consistent Gibbs density rho ~ exp(-beta Psi_lambda(theta, r)) / Z with
// Psi_lambda = sum_i r_i sigma*(x_i, theta) + (lambda/2) ||theta||^2.
struct GibbsState {
  ResidualVector residuals;
  ActivationSpec spec;
  double lambda = 0;
  double beta = 0;
  double log_z = 0;
  GibbsBackend backend = GibbsBackend::TensorQuadrature;

  std::string to_json() const;
  static GibbsState from_json(const std::string& text);
};

double potential(const Theta& theta, const ResidualVector& r, const Dataset& ds,
                 const ActivationSpec& spec, double lambda);
Theta potential_grad(const Theta& theta, const ResidualVector& r, const Dataset& ds,
                     const ActivationSpec& spec, double lambda);

struct QuadratureOptions {
  double tol_rel = 1e-6;          // relative change between refinements
  double headroom = 30.0;         // log-density drop treated as negligible
  std::size_t scan_nodes = 41;    // coarse box-localization grid per axis
  std::size_t min_axis_nodes = 32;
  std::size_t max_axis_nodes = 352;
  double nodes_per_sigma = 2.25;  // starting resolution, refined by the ladder
};

struct MalaOptions {
  std::size_t chains = 8;
  std::size_t steps_per_chain = 20000;  // burn-in is the first half
  std::uint64_t seed = 20240901;
  double target_accept = 0.55;
  double psrf_limit = 1.05;
  std::size_t logz_rungs = 24;          // stepping-stone temperature ladder
  std::size_t logz_steps_per_rung = 4000;
};

struct GibbsExpectations {
  std::vector<double> predictions;      // E[sigma*(x_j, .)]
  std::vector<double> prediction_err;
  double second_moment = 0, second_moment_err = 0;
  double mean_potential = 0, mean_potential_err = 0;
  double log_z = 0, log_z_err = 0;
};

GibbsExpectations gibbs_expectations_quadrature(const GibbsState& state, const Dataset& ds,
                                                const QuadratureOptions& opts = {});
GibbsExpectations gibbs_expectations_mala(const GibbsState& state, const Dataset& ds,
                                          const MalaOptions& opts = {});
GibbsExpectations gibbs_expectations(const GibbsState& state, const Dataset& ds);

struct FixedPointOptions {
  double eta = 0.5;  // damping in (0, 1]
  double tol = 1e-6;
  std::size_t max_iters = 500;
  GibbsBackend backend = GibbsBackend::TensorQuadrature;
  QuadratureOptions quad;
  MalaOptions mala;
  // looser quadrature tolerance while far from the fixed point
  double coarse_tol_rel = 1e-4;
};

struct FixedPointResult {
  GibbsState state;
  GibbsExpectations expectations;  // evaluated at the returned state
  std::vector<SolverTraceRow> trace;
  void trace_to_csv(const std::string& path) const;
};

// Damped iteration r <- (1 - eta) r + eta r_new with
// r_new,i = -(1/M)(y_i - prediction_i(r)).
FixedPointResult solve_fixed_point(const Dataset& ds, const ActivationSpec& spec,
                                   double lambda, double beta,
                                   const FixedPointOptions& opts = {});

struct FreeEnergyReport {
  double risk = 0;
  double second_moment = 0;
  std::optional<double> entropy;
  std::optional<double> free_energy;
};

FreeEnergyReport free_energy_of_gibbs(const GibbsState& state, const Dataset& ds,
                                      const GibbsExpectations& exp);
FreeEnergyReport free_energy_of_gibbs(const GibbsState& state, const Dataset& ds);
FreeEnergyReport free_energy_of_ensemble(const ParticleEnsemble& ens, const Dataset& ds,
                                         double lambda);

// Theorem-1 delta-representation of the predictor curvature:
//   integral of a^m (w^m)^2 rho_m(a, w, -w^m x) da dw
// evaluated with the hard-truncated ReLU density sharing the state's
// residuals; used as an independent curvature estimate at large tau.
double curvature_delta_estimate(const GibbsState& state, const Dataset& ds, double x,
                                const QuadratureOptions& opts = {});

// predictor value/slope/curvature of the Gibbs state on a grid of inputs,
// one quadrature pass (SmoothTruncated spec required for the curvature)
struct GibbsCurve {
  std::vector<double> value, slope, curvature;
};
GibbsCurve gibbs_predictor_curve(const GibbsState& state, const Dataset& ds,
                                 const std::vector<double>& xs,
                                 const QuadratureOptions& opts = {});

}  // namespace mfpl

#endif
