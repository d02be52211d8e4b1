#include "mfpl/clusterset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

namespace mfpl {

namespace {

// roots of c2 x^2 + c1 x + c0 = 0, stable form; returns count (0, 1 or 2),
// roots sorted ascending
int quadratic_roots(double c2, double c1, double c0, double& r1, double& r2) {
  if (c2 == 0.0) {
    if (c1 == 0.0) return 0;
    r1 = r2 = -c0 / c1;
    return 1;
  }
  const double disc = c1 * c1 - 4.0 * c2 * c0;
  if (disc < 0.0) return 0;
  const double sq = std::sqrt(disc);
  const double q = -0.5 * (c1 + std::copysign(sq, c1 == 0 ? 1.0 : c1));
  double a = q / c2;
  double bb = (q == 0.0) ? a : c0 / q;
  if (a > bb) std::swap(a, bb);
  r1 = a;
  r2 = bb;
  return disc == 0.0 ? 1 : 2;
}

Interval clip(double lo, double hi, const Interval& I) {
  return {std::max(lo, I.lo), std::min(hi, I.hi)};
}

void push_if_nonempty(IntervalSet& out, Interval v) {
  if (v.lo <= v.hi) out.push_back(v);
}

}  // namespace

double total_length(const IntervalSet& s) {
  double t = 0;
  for (const Interval& v : s) t += v.length();
  return t;
}

IntervalSet merge_interval_sets(const IntervalSet& a, const IntervalSet& b) {
  IntervalSet all = a;
  all.insert(all.end(), b.begin(), b.end());
  std::sort(all.begin(), all.end(),
            [](const Interval& p, const Interval& q) { return p.lo < q.lo; });
  IntervalSet out;
  for (const Interval& v : all) {
    if (!out.empty() && v.lo <= out.back().hi) {
      out.back().hi = std::max(out.back().hi, v.hi);
    } else {
      out.push_back(v);
    }
  }
  return out;
}

bool interval_set_contains(const IntervalSet& s, double x) {
  for (const Interval& v : s)
    if (v.contains(x)) return true;
  return false;
}

double distance_to_set(const IntervalSet& s, double x) {
  double d = std::numeric_limits<double>::infinity();
  for (const Interval& v : s) {
    if (v.contains(x)) return 0.0;
    d = std::min(d, std::min(std::abs(x - v.lo), std::abs(x - v.hi)));
  }
  return d;
}

IntervalPoly IntervalPoly::make(std::size_t j, PolyKind kind, double A, double B) {
  IntervalPoly p;
  p.j = j;
  p.kind = kind;
  p.A = A;
  p.B = B;
  p.c2 = 1.0 - A * A;
  p.c1 = 2.0 * A * B;
  p.c0 = 1.0 - B * B;
  return p;
}

std::vector<CoefficientRow> coefficients(const ResidualVector& r, const Dataset& ds,
                                         double lambda) {
  if (!(lambda > 0)) throw LambdaZero("coefficients: lambda must be positive");
  const std::size_t M = ds.size();
  if (r.size() != M) throw std::invalid_argument("coefficients: residual/dataset size mismatch");
  std::vector<CoefficientRow> rows(M + 1);
  double sa = 0, sb = 0;
  for (std::size_t j = 0; j < M + 1; ++j) {
    rows[j].A_sub = sa / lambda;
    rows[j].B_sub = sb / lambda;
    if (j < M) {
      sa += r.r[j];
      sb += r.r[j] * ds.x[j];
    }
  }
  double ta = 0, tb = 0;
  for (std::size_t jj = M + 1; jj-- > 0;) {
    rows[jj].A_sup = ta / lambda;
    rows[jj].B_sup = tb / lambda;
    if (jj > 0) {
      ta += r.r[jj - 1];
      tb += r.r[jj - 1] * ds.x[jj - 1];
    }
  }
  return rows;
}

IntervalSet nonpositive_set(const IntervalPoly& poly, const Interval& I) {
  IntervalSet out;
  double r1 = 0, r2 = 0;
  const int nroots = quadratic_roots(poly.c2, poly.c1, poly.c0, r1, r2);
  if (poly.c2 == 0.0) {
    if (poly.c1 == 0.0) {
      if (poly.c0 <= 0.0) out.push_back(I);
      return out;
    }
    // linear: half-line
    if (poly.c1 > 0)
      push_if_nonempty(out, clip(-std::numeric_limits<double>::infinity(), r1, I));
    else
      push_if_nonempty(out, clip(r1, std::numeric_limits<double>::infinity(), I));
    return out;
  }
  if (poly.c2 > 0.0) {
    if (nroots == 0) return out;  // positive everywhere
    push_if_nonempty(out, clip(r1, r2, I));
    return out;
  }
  // concave: nonpositive outside the roots
  if (nroots == 0) {
    out.push_back(I);  // negative everywhere
    return out;
  }
  push_if_nonempty(out, clip(-std::numeric_limits<double>::infinity(), r1, I));
  push_if_nonempty(out, clip(r2, std::numeric_limits<double>::infinity(), I));
  return merge_interval_sets(out, {});  // double root: the two rays touch
}

namespace {

// shared analysis for f^j/f_j and the appendix P2 polynomial
CriticalPointInfo critical_point_impl(const IntervalPoly& poly, double x, const Interval& I) {
  CriticalPointInfo info;
  double r1 = 0, r2 = 0;
  const int nroots = quadratic_roots(poly.c2, poly.c1, poly.c0, r1, r2);

  if (nroots == 0) {
    if (poly.c2 == 0.0 && poly.c1 == 0.0) {
      // constant positive polynomial: all of I minimizes; Definition-1
      // convention picks the right endpoint
      info.branch = CriticalBranch::DegenerateFlatConvention;
      info.x_c = I.hi;
    } else if (poly.c2 > 0.0) {
      info.branch = CriticalBranch::NoRootsMinimizer;
      info.x_c = std::clamp(-poly.c1 / (2.0 * poly.c2), I.lo, I.hi);
    } else if (poly.c2 == 0.0) {
      // strictly monotone linear with no root can't happen; a rootless linear
      // polynomial is constant, handled above. Monotone linear positive on I
      // has its minimizer at an endpoint.
      info.branch = CriticalBranch::NoRootsMinimizer;
      info.x_c = poly.c1 > 0 ? I.lo : I.hi;
    } else {
      // concave with no real roots is negative everywhere, excluded by pre
      throw PointInsideOmega("critical_point: polynomial non-positive at x");
    }
  } else {
    info.branch = CriticalBranch::NearestRootClamped;
    const double nearest = (std::abs(x - r1) <= std::abs(x - r2)) ? r1 : r2;
    info.x_c = std::clamp(nearest, I.lo, I.hi);
  }

  // Taylor form around x_c: f(x) = c2 (x-x_c)^2 + f'(x_c) (x-x_c) + f(x_c).
  const double fp = poly.deriv(info.x_c);
  const double f0 = std::max(0.0, poly.eval(info.x_c));
  if (poly.c2 >= 0.0) {
    info.alpha2 = poly.c2;
    info.alpha1 = std::abs(fp);
    info.alpha0 = f0;
  } else {
    // concave branch: chord from (x_c, f(x_c)) toward the vertex has slope
    // f'(x_c)/2 and stays below the parabola between them
    info.alpha2 = 0.0;
    info.alpha1 = std::abs(fp) / 2.0;
    info.alpha0 = f0;
  }

  // fold the linear term using |x - x_c| <= |I|
  const double len = I.length();
  if (info.alpha2 >= info.alpha1) {
    info.gamma_q = info.alpha2;
  } else {
    info.gamma_q = len > 0 ? info.alpha1 / len : 0.0;
  }
  info.gamma_c = info.alpha0;
  return info;
}

}  // namespace

CriticalPointInfo critical_point(const IntervalPoly& poly, double x,
                                 const IntervalSet& omega, const Interval& I) {
  if (!I.contains(x)) throw std::invalid_argument("critical_point: x outside interval");
  if (interval_set_contains(omega, x) || !(poly.eval(x) > 0.0))
    throw PointInsideOmega("critical_point: f(x) <= 0");
  return critical_point_impl(poly, x, I);
}

GenericLowerBound generic_poly_lower_bound(double a, double b, const Interval& I, double x,
                                           double min_positive_measure) {
  const IntervalPoly p = IntervalPoly::make(0, PolyKind::Upper, a, b);
  if (!(p.eval(x) > 0.0)) throw PointNotPositive("generic_poly_lower_bound: P2(x) <= 0");
  const IntervalSet omega = nonpositive_set(p, I);
  const double positive = I.length() - total_length(omega);
  if (positive < min_positive_measure)
    throw PositiveSetTooSmall("generic_poly_lower_bound: |Omega_+| = " +
                              std::to_string(positive));
  const CriticalPointInfo info = critical_point_impl(p, x, I);
  return {info.alpha2, info.alpha1, info.alpha0, info.x_c};
}

ClusterReport cluster_report(const ResidualVector& r, const Dataset& ds,
                             const PredictionIntervals& intervals, double lambda) {
  const auto rows = coefficients(r, ds, lambda);
  ClusterReport rep;
  rep.entries.resize(rows.size());
  for (std::size_t j = 0; j < rows.size(); ++j) {
    IntervalClusterEntry& e = rep.entries[j];
    e.j = j;
    e.interval = {intervals.lo(j), intervals.hi(j)};
    e.upper = IntervalPoly::make(j, PolyKind::Upper, rows[j].A_sup, rows[j].B_sup);
    e.lower = IntervalPoly::make(j, PolyKind::Lower, rows[j].A_sub, rows[j].B_sub);
    e.omega_upper = nonpositive_set(e.upper, e.interval);
    e.omega_lower = nonpositive_set(e.lower, e.interval);
    e.omega_bar = merge_interval_sets(e.omega_upper, e.omega_lower);
    rep.total_measure += total_length(e.omega_bar);
  }
  return rep;
}

std::string ClusterReport::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::json je;
    je["j"] = e.j;
    je["interval"] = {e.interval.lo, e.interval.hi};
    je["A_sup"] = e.upper.A;
    je["B_sup"] = e.upper.B;
    je["A_sub"] = e.lower.A;
    je["B_sub"] = e.lower.B;
    nlohmann::json om = nlohmann::json::array();
    for (const Interval& v : e.omega_bar) om.push_back({v.lo, v.hi});
    je["omega"] = std::move(om);
    arr.push_back(std::move(je));
  }
  nlohmann::json j;
  j["intervals"] = std::move(arr);
  j["total_measure"] = total_measure;
  return j.dump(2);
}

void ClusterReport::to_csv(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write " + path);
  out << "j,lo,hi,A_sup,B_sup,A_sub,B_sub,omega_lo,omega_hi\n";
  out.precision(17);
  for (const auto& e : entries) {
    if (e.omega_bar.empty()) {
      out << e.j << ',' << e.interval.lo << ',' << e.interval.hi << ',' << e.upper.A << ','
          << e.upper.B << ',' << e.lower.A << ',' << e.lower.B << ",,\n";
    } else {
      for (const Interval& v : e.omega_bar)
        out << e.j << ',' << e.interval.lo << ',' << e.interval.hi << ',' << e.upper.A << ','
            << e.upper.B << ',' << e.lower.A << ',' << e.lower.B << ',' << v.lo << ',' << v.hi
            << '\n';
    }
  }
}

}  // namespace mfpl
