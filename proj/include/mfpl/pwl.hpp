#ifndef MFPL_PWL_HPP
#define MFPL_PWL_HPP

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfpl/data.hpp"

namespace mfpl {

struct TooManyKnots : std::runtime_error {
  explicit TooManyKnots(const std::string& what) : std::runtime_error(what) {}
};

// Continuous piecewise-linear function on [lo, hi]: K knots split the domain
// into K+1 segments y = u x + v.
struct PiecewiseLinear {
  double lo = 0, hi = 0;
  std::vector<double> knots;  // strictly increasing, inside (lo, hi)
  struct Segment {
    double u = 0, v = 0;
  };
  std::vector<Segment> segments;  // knots.size() + 1 entries

  double eval(double x) const;
  double slope_at(double x) const;

  std::string to_json() const;
  static PiecewiseLinear from_json(const std::string& text);
};

struct ExtractOptions {
  std::size_t grid_n = 4001;
  double slope_tol_rel = 0.02;    // threshold = rel * max|slope| over the grid
  std::size_t merge_radius = 3;   // grid steps
};

using RealFn = std::function<double(double)>;

// Knot extraction by slope-jump detection on a uniform grid. `slope` may be
// null, in which case central differences of `predict` are used.
PiecewiseLinear extract_pwl(const RealFn& predict, const RealFn& slope, double lo, double hi,
                            const ExtractOptions& opts = {});

struct IntervalVerdict {
  std::size_t j = 0;
  std::size_t knot_count = 0;
  bool config_ok = true;  // for 3 knots: end + end + strict interior
};

struct AdmissibilityVerdict {
  bool admissible = true;
  std::vector<IntervalVerdict> per_interval;
  std::string violation;

  std::string to_json() const;
};

AdmissibilityVerdict check_admissible(const PiecewiseLinear& pwl,
                                      const PredictionIntervals& intervals,
                                      double endpoint_tol);

double pwl_distance(const PiecewiseLinear& pwl, const RealFn& predict, double lo, double hi,
                    std::size_t grid_n);

}  // namespace mfpl

#endif
