#ifndef MFPL_CLUSTERSET_HPP
#define MFPL_CLUSTERSET_HPP

#include <stdexcept>
#include <string>
#include <vector>

#include "mfpl/data.hpp"
#include "mfpl/particle.hpp"

namespace mfpl {

struct LambdaZero : std::runtime_error {
  explicit LambdaZero(const std::string& what) : std::runtime_error(what) {}
};
struct PointInsideOmega : std::runtime_error {
  explicit PointInsideOmega(const std::string& what) : std::runtime_error(what) {}
};
struct PointNotPositive : std::runtime_error {
  explicit PointNotPositive(const std::string& what) : std::runtime_error(what) {}
};
struct PositiveSetTooSmall : std::runtime_error {
  explicit PositiveSetTooSmall(const std::string& what) : std::runtime_error(what) {}
};

struct Interval {
  double lo = 0, hi = 0;
  double length() const { return hi - lo; }
  bool contains(double x) const { return lo <= x && x <= hi; }
};

// union of disjoint closed intervals, kept sorted
using IntervalSet = std::vector<Interval>;

double total_length(const IntervalSet& s);
// coalesce overlapping or touching intervals
IntervalSet merge_interval_sets(const IntervalSet& a, const IntervalSet& b);
bool interval_set_contains(const IntervalSet& s, double x);
double distance_to_set(const IntervalSet& s, double x);

enum class PolyKind { Upper, Lower };  // f^j vs f_j

// f(x) = 1 + x^2 - (A x - B)^2, expanded as c2 x^2 + c1 x + c0
struct IntervalPoly {
  std::size_t j = 0;
  PolyKind kind = PolyKind::Upper;
  double A = 0, B = 0;
  double c2 = 1, c1 = 0, c0 = 1;

  static IntervalPoly make(std::size_t j, PolyKind kind, double A, double B);
  double eval(double x) const { return (c2 * x + c1) * x + c0; }
  double deriv(double x) const { return 2 * c2 * x + c1; }
};

struct CoefficientRow {
  double A_sup = 0, B_sup = 0;  // A^j, B^j (suffix sums, i > j)
  double A_sub = 0, B_sub = 0;  // A_j, B_j (prefix sums, i <= j)
};

// coefficient rows for j = 0..M; throws LambdaZero
std::vector<CoefficientRow> coefficients(const ResidualVector& r, const Dataset& ds,
                                         double lambda);

// {x in I : f(x) <= 0}, exact roots, all sign cases; at most two intervals
IntervalSet nonpositive_set(const IntervalPoly& poly, const Interval& I);

enum class CriticalBranch { NoRootsMinimizer, DegenerateFlatConvention, NearestRootClamped };

struct CriticalPointInfo {
  double x_c = 0;
  CriticalBranch branch = CriticalBranch::NoRootsMinimizer;
  // certified per-x bound f(x) >= gamma_q (x - x_c)^2 + gamma_c on the branch of
  // the positive set containing x
  double gamma_q = 0, gamma_c = 0;
  // raw Taylor-form coefficients (alpha_2, alpha_1, alpha_0) before folding the
  // linear term via the interval length
  double alpha2 = 0, alpha1 = 0, alpha0 = 0;
};

// critical point for x with f(x) > 0 on I; throws PointInsideOmega otherwise
CriticalPointInfo critical_point(const IntervalPoly& poly, double x,
                                 const IntervalSet& omega, const Interval& I);

// Appendix lower bound for P2(x) = (1-a^2)x^2 + 2ab x + (1-b^2); returns the
// raw (alpha2, alpha1, alpha0, x_c). min_positive_measure guards the
// admissible-coefficient condition |Omega_+| >= C_Omega.
struct GenericLowerBound {
  double alpha2 = 0, alpha1 = 0, alpha0 = 0, x_c = 0;
};
GenericLowerBound generic_poly_lower_bound(double a, double b, const Interval& I, double x,
                                           double min_positive_measure);

struct IntervalClusterEntry {
  std::size_t j = 0;
  Interval interval;
  IntervalPoly upper, lower;
  IntervalSet omega_upper, omega_lower;
  IntervalSet omega_bar;  // merged union, at most 3 intervals
};

struct ClusterReport {
  std::vector<IntervalClusterEntry> entries;
  double total_measure = 0;

  std::string to_json() const;
  void to_csv(const std::string& path) const;
};

ClusterReport cluster_report(const ResidualVector& r, const Dataset& ds,
                             const PredictionIntervals& intervals, double lambda);

}  // namespace mfpl

#endif
