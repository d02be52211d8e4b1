#ifndef MFPL_PARTICLE_HPP
#define MFPL_PARTICLE_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfpl/activation.hpp"
#include "mfpl/data.hpp"

namespace mfpl {

struct StepTooLarge : std::runtime_error {
  explicit StepTooLarge(const std::string& what) : std::runtime_error(what) {}
};
struct NonFinite : std::runtime_error {
  explicit NonFinite(const std::string& what) : std::runtime_error(what) {}
};
struct WidthTooLarge : std::runtime_error {
  explicit WidthTooLarge(const std::string& what) : std::runtime_error(what) {}
};

// The 1/M-scaled signed errors R_i; shared with the gibbs module.
struct ResidualVector {
  std::vector<double> r;
  std::size_t size() const { return r.size(); }
  double risk() const;  // M * sum r_i^2
};

// Finite-N network: uniform-weight particles (a_i, w_i, b_i).
struct ParticleEnsemble {
  std::vector<Theta> thetas;
  ActivationSpec spec;

  std::size_t size() const { return thetas.size(); }
  double second_moment() const;  // (1/N) sum ||theta_i||^2
  bool finite() const;

  std::string to_json() const;
  static ParticleEnsemble from_json(const std::string& text);
};

double predict(const ParticleEnsemble& ens, double x);
double predict_slope(const ParticleEnsemble& ens, double x);

struct PredictDerivs {
  double value = 0, slope = 0, curvature = 0;
};
// throws CurvatureUndefined outside SmoothTruncated mode
PredictDerivs predict_derivatives(const ParticleEnsemble& ens, double x);

double empirical_risk(const ParticleEnsemble& ens, const Dataset& ds);
ResidualVector residuals(const ParticleEnsemble& ens, const Dataset& ds);

struct InitDistribution {
  std::string name = "gaussian";  // centered Gaussian on (a, w, b)
  double scale = 1.0;             // shared scale
  // optional per-coordinate multipliers on top of `scale`
  double a_scale = 1.0, w_scale = 1.0, b_scale = 1.0;
  Theta sample(std::mt19937_64& rng) const;
};

struct TrainConfig {
  double lambda = 0.0;
  double beta_inv = 0.0;  // temperature; 0 disables the Gaussian noise
  double eps = 0.01;      // base step
  std::function<double(double)> xi;  // step profile, s_k = eps * xi(eps k); default 1
  std::uint64_t steps = 0;
  std::uint64_t seed = 0;
  InitDistribution init;

  double step_size(std::uint64_t k) const {
    return xi ? eps * xi(eps * static_cast<double>(k)) : eps;
  }
};

// One Eq.-5 step: theta_i <- (1-2 lambda s_k) theta_i
//                           + 2 s_k (y~ - yhat_N) grad_theta sigma*
//                           + sqrt(2 s_k / beta) g_i,
// with yhat_N evaluated before any particle moves.
void sgd_step(ParticleEnsemble& ens, double sample_x, double sample_y,
              const TrainConfig& cfg, std::uint64_t k, std::mt19937_64& rng);

struct TrainingTrace {
  std::vector<double> epoch;
  std::vector<double> risk;
  std::vector<double> second_moment;
  void to_csv(const std::string& path) const;
};

struct TrainResult {
  ParticleEnsemble ensemble;
  TrainingTrace trace;
};

// Callback invoked at every recorded epoch with the current ensemble; used for
// tail-averaged observables. May be null.
using SnapshotHook = std::function<void(std::uint64_t step, const ParticleEnsemble&)>;

TrainResult train(const Dataset& ds, const TrainConfig& cfg, std::size_t n_particles,
                  const ActivationSpec& spec, const SnapshotHook& hook = nullptr);

// analytic fixtures
ParticleEnsemble build_two_atom(const Dataset& ds, const ActivationSpec& spec);
ParticleEnsemble build_sawtooth(const Dataset& ds, double eps, const ActivationSpec& spec);
ParticleEnsemble build_gaussian_mixture(const std::vector<Theta>& centers, double var,
                                        std::size_t n_per, std::mt19937_64& rng,
                                        const ActivationSpec& spec);

}  // namespace mfpl

#endif
