#include "mfpl/pwl.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

namespace mfpl {

double PiecewiseLinear::eval(double x) const {
  const auto it = std::upper_bound(knots.begin(), knots.end(), x);
  const std::size_t k = static_cast<std::size_t>(it - knots.begin());
  return segments[k].u * x + segments[k].v;
}

double PiecewiseLinear::slope_at(double x) const {
  const auto it = std::upper_bound(knots.begin(), knots.end(), x);
  return segments[static_cast<std::size_t>(it - knots.begin())].u;
}

std::string PiecewiseLinear::to_json() const {
  nlohmann::json j;
  j["lo"] = lo;
  j["hi"] = hi;
  j["knots"] = knots;
  nlohmann::json segs = nlohmann::json::array();
  for (const Segment& s : segments) segs.push_back({s.u, s.v});
  j["segments"] = std::move(segs);
  return j.dump();
}

PiecewiseLinear PiecewiseLinear::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  PiecewiseLinear p;
  p.lo = j.at("lo").get<double>();
  p.hi = j.at("hi").get<double>();
  p.knots = j.at("knots").get<std::vector<double>>();
  for (const auto& s : j.at("segments"))
    p.segments.push_back({s.at(0).get<double>(), s.at(1).get<double>()});
  return p;
}

namespace {

struct LineFit {
  double u = 0, v = 0;
  bool ok = false;
};

LineFit fit_line(const std::vector<double>& xs, const std::vector<double>& ys,
                 std::size_t first, std::size_t last) {
  LineFit f;
  if (last < first + 1) return f;
  const std::size_t n = last - first + 1;
  double sx = 0, sy = 0;
  for (std::size_t i = first; i <= last; ++i) {
    sx += xs[i];
    sy += ys[i];
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = first; i <= last; ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (sxx == 0) return f;
  f.u = sxy / sxx;
  f.v = my - f.u * mx;
  f.ok = true;
  return f;
}

}  // namespace

PiecewiseLinear extract_pwl(const RealFn& predict, const RealFn& slope, double lo, double hi,
                            const ExtractOptions& opts) {
  const std::size_t n = std::max<std::size_t>(opts.grid_n, 100);
  const double step = (hi - lo) / static_cast<double>(n - 1);
  std::vector<double> xs(n), ys(n), ss(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = lo + step * static_cast<double>(i);
    ys[i] = predict(xs[i]);
    ss[i] = slope ? slope(xs[i])
                  : (predict(xs[i] + 0.25 * step) - predict(xs[i] - 0.25 * step)) / (0.5 * step);
  }
  double max_slope = 0;
  for (double s : ss) max_slope = std::max(max_slope, std::abs(s));
  PiecewiseLinear out;
  out.lo = lo;
  out.hi = hi;
  if (max_slope == 0) {
    out.segments.push_back({0.0, ys[0]});
    return out;
  }
  const double threshold = opts.slope_tol_rel * max_slope;

  // jump cells: slope change between consecutive grid points above threshold
  struct Cluster {
    std::size_t first_cell, last_cell;
    double pos;  // jump-weighted centroid of cell midpoints
  };
  std::vector<Cluster> clusters;
  std::size_t cluster_start = 0;
  double wsum = 0, wx = 0;
  bool open = false;
  std::size_t last_marked = 0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double jump = std::abs(ss[i + 1] - ss[i]);
    if (jump <= threshold) continue;
    const double mid = 0.5 * (xs[i] + xs[i + 1]);
    if (open && i - last_marked <= opts.merge_radius) {
      wsum += jump;
      wx += jump * mid;
      last_marked = i;
    } else {
      if (open) clusters.push_back({cluster_start, last_marked + 1, wx / wsum});
      open = true;
      cluster_start = i;
      last_marked = i;
      wsum = jump;
      wx = jump * mid;
    }
  }
  if (open) clusters.push_back({cluster_start, last_marked + 1, wx / wsum});

  if (clusters.size() > n / 10)
    throw TooManyKnots("extract_pwl: " + std::to_string(clusters.size()) +
                       " knots at this tolerance");

  // line-fit regions between clusters, keeping a buffer of cells clear
  const std::size_t buffer = opts.merge_radius;
  struct Region {
    std::size_t first, last;
  };
  const auto region_between = [&](std::size_t left_end, std::size_t right_start) -> Region {
    std::size_t first = left_end == 0 ? 0 : std::min(n - 1, left_end + buffer);
    std::size_t last = right_start >= n - 1 ? n - 1 : (right_start < buffer ? 0 : right_start - buffer);
    if (last < first || last - first < 1) {  // fall back to the raw span
      first = left_end;
      last = std::max(right_start, left_end + 1);
      last = std::min(last, n - 1);
    }
    return {first, last};
  };

  std::vector<Region> regions;
  std::vector<double> raw_knots;
  {
    std::size_t prev_end = 0;
    for (const Cluster& c : clusters) {
      regions.push_back(region_between(prev_end, c.first_cell));
      raw_knots.push_back(c.pos);
      prev_end = c.last_cell;
    }
    regions.push_back(region_between(prev_end, n - 1));
  }

  std::vector<LineFit> fits(regions.size());
  const auto refit = [&](std::size_t k) {
    fits[k] = fit_line(xs, ys, regions[k].first, regions[k].last);
    if (!fits[k].ok) {
      // degenerate region: straight line through its endpoints
      const std::size_t i0 = regions[k].first;
      const std::size_t i1 = std::min(n - 1, std::max(regions[k].last, i0 + 1));
      fits[k].u = (ys[i1] - ys[i0]) / (xs[i1] - xs[i0]);
      fits[k].v = ys[i0] - fits[k].u * xs[i0];
      fits[k].ok = true;
    }
  };
  for (std::size_t k = 0; k < regions.size(); ++k) refit(k);

  // drop knots whose neighbouring fits are collinear at this tolerance
  const double simplify_tol = std::max(1e-12, 0.25 * threshold);
  for (std::size_t k = 0; k + 1 < fits.size();) {
    if (std::abs(fits[k].u - fits[k + 1].u) <= simplify_tol) {
      regions[k].last = regions[k + 1].last;
      refit(k);
      regions.erase(regions.begin() + static_cast<std::ptrdiff_t>(k + 1));
      fits.erase(fits.begin() + static_cast<std::ptrdiff_t>(k + 1));
      raw_knots.erase(raw_knots.begin() + static_cast<std::ptrdiff_t>(k));
    } else {
      ++k;
    }
  }

  // refine each knot to the intersection of the neighbouring fits when that
  // lands near the detected jump; continuity is exact there by construction
  out.knots.resize(raw_knots.size());
  for (std::size_t k = 0; k < raw_knots.size(); ++k) {
    const double du = fits[k].u - fits[k + 1].u;
    double pos = raw_knots[k];
    if (std::abs(du) > 1e-12) {
      const double xi = (fits[k + 1].v - fits[k].v) / du;
      if (std::abs(xi - pos) <= (static_cast<double>(opts.merge_radius) + 2.0) * step) pos = xi;
    }
    out.knots[k] = pos;
  }
  // enforce strict ordering after refinement
  for (std::size_t k = 1; k < out.knots.size(); ++k)
    if (out.knots[k] <= out.knots[k - 1]) out.knots[k] = out.knots[k - 1] + 1e-12;

  out.segments.resize(fits.size());
  for (std::size_t k = 0; k < fits.size(); ++k) out.segments[k] = {fits[k].u, fits[k].v};

  // stitch any residual discontinuity at the knots (fallback-positioned ones)
  for (std::size_t k = 0; k < out.knots.size(); ++k) {
    const double xk = out.knots[k];
    const double yl = out.segments[k].u * xk + out.segments[k].v;
    const double yr = out.segments[k + 1].u * xk + out.segments[k + 1].v;
    if (yl != yr) {
      const double target = 0.5 * (yl + yr);
      out.segments[k].v += target - yl;
      out.segments[k + 1].v += target - yr;
    }
  }
  return out;
}

AdmissibilityVerdict check_admissible(const PiecewiseLinear& pwl,
                                      const PredictionIntervals& intervals,
                                      double endpoint_tol) {
  AdmissibilityVerdict verdict;
  verdict.per_interval.resize(intervals.count());
  for (std::size_t j = 0; j < intervals.count(); ++j) {
    IntervalVerdict& iv = verdict.per_interval[j];
    iv.j = j;
    const double tlo = intervals.lo(j), thi = intervals.hi(j);
    std::vector<double> inside;
    for (double k : pwl.knots)
      if (tlo <= k && k <= thi) inside.push_back(k);
    iv.knot_count = inside.size();
    if (iv.knot_count > 3) {
      iv.config_ok = false;
      verdict.admissible = false;
      if (verdict.violation.empty())
        verdict.violation = "interval " + std::to_string(j) + " has " +
                            std::to_string(iv.knot_count) + " knots";
    } else if (iv.knot_count == 3) {
      // only admissible 3-knot layout: both endpoints plus one strict interior
      int near_lo = 0, near_hi = 0, interior = 0;
      for (double k : inside) {
        const bool nl = std::abs(k - tlo) <= endpoint_tol;
        const bool nh = std::abs(thi - k) <= endpoint_tol;
        if (nl)
          ++near_lo;
        else if (nh)
          ++near_hi;
        else
          ++interior;
      }
      iv.config_ok = (near_lo == 1 && near_hi == 1 && interior == 1);
      if (!iv.config_ok) {
        verdict.admissible = false;
        if (verdict.violation.empty())
          verdict.violation =
              "interval " + std::to_string(j) + " has 3 knots in a non end-end-interior layout";
      }
    }
  }
  return verdict;
}

std::string AdmissibilityVerdict::to_json() const {
  nlohmann::json j;
  j["admissible"] = admissible;
  if (!violation.empty()) j["violation"] = violation;
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& iv : per_interval) {
    nlohmann::json e;
    e["j"] = iv.j;
    e["knots"] = iv.knot_count;
    e["config_ok"] = iv.config_ok;
    arr.push_back(std::move(e));
  }
  j["per_interval"] = std::move(arr);
  return j.dump(2);
}

double pwl_distance(const PiecewiseLinear& pwl, const RealFn& predict, double lo, double hi,
                    std::size_t grid_n) {
  double gap = 0;
  const double step = (hi - lo) / static_cast<double>(grid_n - 1);
  for (std::size_t i = 0; i < grid_n; ++i) {
    const double x = lo + step * static_cast<double>(i);
    gap = std::max(gap, std::abs(pwl.eval(x) - predict(x)));
  }
  return gap;
}

}  // namespace mfpl
