#ifndef MFPL_VERIFY_HPP
#define MFPL_VERIFY_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfpl {

struct LambdaOutOfRange : std::runtime_error {
  explicit LambdaOutOfRange(const std::string& what) : std::runtime_error(what) {}
};

// Analytic checks for the two-point counterexample {(-10, 2), (10, 2)} in the
// noiseless regime: direct risk/second-moment of the two-atom ensemble, grid
// minimization of eps -> eps^2/2 + lambda |2 + eps|, and the strict
// free-energy inequality separating linear candidates from the kinked one.
struct NoiselessCounterexampleReport {
  double lambda = 0;
  double two_atom_risk = 0;
  double two_atom_second_moment = 0;  // direct-sum oracle value
  double free_energy_two_atom = 0;    // (lambda/2) * second moment
  double argmin = 0, argmin_expected = 0;
  double min_value = 0, min_value_expected = 0;
  double linear_lower_bound = 0;         // min over the f(0) cases
  double lowtemp_linear_lower_bound = 0; // lambda-halved variant
  bool argmin_ok = false, min_ok = false;
  bool noiseless_chain_strict = false, lowtemp_chain_strict = false;

  std::string to_json() const;
};

NoiselessCounterexampleReport verify_counterexample_noiseless(double lambda);

// Gaussian-mixture approximants rho*_beta with variance 1/beta: sup-norm gap
// to 0.2|x| on [-10, 10], risk and second moment along an increasing beta list.
struct LowTempCounterexampleReport {
  std::vector<double> betas;
  std::vector<double> sup_gap;
  std::vector<double> abs_risk;
  std::vector<double> second_moment;
  double oracle_second_moment = 0;
  bool gap_decreasing = false;
  bool risk_vanishing = false;

  std::string to_json() const;
};

LowTempCounterexampleReport verify_counterexample_lowtemp(const std::vector<double>& betas,
                                                          std::size_t n_per,
                                                          std::uint64_t seed);

}  // namespace mfpl

#endif
