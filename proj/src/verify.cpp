#include "mfpl/verify.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "json.hpp"
#include "mfpl/particle.hpp"

namespace mfpl {

namespace {

Dataset counterexample_dataset() {
  return Dataset::from_points({{-10.0, 2.0}, {10.0, 2.0}});
}

}  // namespace

NoiselessCounterexampleReport verify_counterexample_noiseless(double lambda) {
  if (!(lambda > 0.0) || lambda > 1.0)
    throw LambdaOutOfRange("verify_counterexample_noiseless: need 0 < lambda <= 1");
  NoiselessCounterexampleReport rep;
  rep.lambda = lambda;

  const Dataset ds = counterexample_dataset();
  const ParticleEnsemble atoms = build_two_atom(ds, ActivationSpec::relu_exact());
  rep.two_atom_risk = empirical_risk(atoms, ds);
  rep.two_atom_second_moment = atoms.second_moment();
  rep.free_energy_two_atom = 0.5 * lambda * rep.two_atom_second_moment;

  // grid minimization of eps -> eps^2/2 + lambda |2 + eps| on [-3, 1]
  const double step = 1e-4;
  double best_eps = -3.0, best_val = std::numeric_limits<double>::infinity();
  for (double e = -3.0; e <= 1.0 + 1e-12; e += step) {
    const double v = 0.5 * e * e + lambda * std::abs(2.0 + e);
    if (v < best_val) {
      best_val = v;
      best_eps = e;
    }
  }
  rep.argmin = best_eps;
  rep.argmin_expected = -lambda;
  rep.min_value = best_val;
  rep.min_value_expected = 2.0 * lambda - 0.5 * lambda * lambda;
  rep.argmin_ok = std::abs(rep.argmin - rep.argmin_expected) <= 1e-4 + 1e-12;
  rep.min_ok = std::abs(rep.min_value - rep.min_value_expected) <= 1e-6;

  // linear candidates: f(0) = 0 branch is bounded below by ybar^2/2 = 2,
  // the f(0) != 0 branch by the grid minimum above
  rep.linear_lower_bound = std::min(2.0, rep.min_value_expected);
  rep.lowtemp_linear_lower_bound = std::min(2.0, lambda - lambda * lambda / 8.0);
  rep.noiseless_chain_strict = rep.linear_lower_bound > rep.free_energy_two_atom;
  rep.lowtemp_chain_strict = rep.lowtemp_linear_lower_bound > rep.free_energy_two_atom;
  return rep;
}

std::string NoiselessCounterexampleReport::to_json() const {
  nlohmann::json j;
  j["lambda"] = lambda;
  j["two_atom_risk"] = two_atom_risk;
  j["two_atom_second_moment"] = two_atom_second_moment;
  j["free_energy_two_atom"] = free_energy_two_atom;
  j["argmin"] = argmin;
  j["argmin_expected"] = argmin_expected;
  j["min_value"] = min_value;
  j["min_value_expected"] = min_value_expected;
  j["linear_lower_bound"] = linear_lower_bound;
  j["lowtemp_linear_lower_bound"] = lowtemp_linear_lower_bound;
  j["argmin_ok"] = argmin_ok;
  j["min_ok"] = min_ok;
  j["noiseless_chain_strict"] = noiseless_chain_strict;
  j["lowtemp_chain_strict"] = lowtemp_chain_strict;
  return j.dump(2);
}

LowTempCounterexampleReport verify_counterexample_lowtemp(const std::vector<double>& betas,
                                                          std::size_t n_per,
                                                          std::uint64_t seed) {
  LowTempCounterexampleReport rep;
  rep.betas = betas;
  const Dataset ds = counterexample_dataset();
  const ActivationSpec relu = ActivationSpec::relu_exact();
  const ParticleEnsemble atoms = build_two_atom(ds, relu);
  rep.oracle_second_moment = atoms.second_moment();
  const double c = std::sqrt(2.0 * ds.y[1] / ds.x[1]);
  const std::vector<Theta> centers = {{c, -c, 0.0}, {c, c, 0.0}};

  std::mt19937_64 rng(seed);
  for (double beta : betas) {
    const ParticleEnsemble mix =
        build_gaussian_mixture(centers, 1.0 / beta, n_per, rng, relu);
    double gap = 0;
    for (int i = 0; i <= 400; ++i) {
      const double x = -10.0 + 20.0 * i / 400.0;
      gap = std::max(gap, std::abs(predict(mix, x) - 0.2 * std::abs(x)));
    }
    rep.sup_gap.push_back(gap);
    rep.abs_risk.push_back(empirical_risk(mix, ds));
    rep.second_moment.push_back(mix.second_moment());
  }
  rep.gap_decreasing = true;
  rep.risk_vanishing = true;
  for (std::size_t i = 0; i + 1 < betas.size(); ++i) {
    if (!(rep.sup_gap[i + 1] < rep.sup_gap[i])) rep.gap_decreasing = false;
    if (!(rep.abs_risk[i + 1] < rep.abs_risk[i])) rep.risk_vanishing = false;
  }
  return rep;
}

std::string LowTempCounterexampleReport::to_json() const {
  nlohmann::json j;
  j["betas"] = betas;
  j["sup_gap"] = sup_gap;
  j["abs_risk"] = abs_risk;
  j["second_moment"] = second_moment;
  j["oracle_second_moment"] = oracle_second_moment;
  j["gap_decreasing"] = gap_decreasing;
  j["risk_vanishing"] = risk_vanishing;
  return j.dump(2);
}

}  // namespace mfpl
