#include <cmath>
#include <random>

#include "doctest.h"
#include "mfpl/pwl.hpp"

using namespace mfpl;

namespace {

// exact continuous PWL sampler built from knots + slopes, used as the
// synthesize-then-recover oracle
struct SynthPwl {
  double lo, hi, y0;
  std::vector<double> knots;
  std::vector<double> slopes;  // knots.size() + 1

  double operator()(double x) const {
    double y = y0, prev = lo;
    for (std::size_t k = 0; k < knots.size(); ++k) {
      if (x <= knots[k]) return y + slopes[k] * (x - prev);
      y += slopes[k] * (knots[k] - prev);
      prev = knots[k];
    }
    return y + slopes.back() * (x - prev);
  }
  double slope(double x) const {
    for (std::size_t k = 0; k < knots.size(); ++k)
      if (x <= knots[k]) return slopes[k];
    return slopes.back();
  }
};

SynthPwl random_admissible_pwl(std::mt19937_64& rng, double lo, double hi, int max_knots) {
  std::uniform_int_distribution<int> nk(0, max_knots);
  std::uniform_real_distribution<double> uy(-2.0, 2.0);
  std::uniform_real_distribution<double> us(0.3, 2.0);
  std::uniform_real_distribution<double> usign(0.0, 1.0);
  SynthPwl p;
  p.lo = lo;
  p.hi = hi;
  p.y0 = uy(rng);
  const int k = nk(rng);
  // knots separated by at least 6% of the domain
  const double min_gap = 0.06 * (hi - lo);
  std::uniform_real_distribution<double> ux(lo + min_gap, hi - min_gap);
  while (static_cast<int>(p.knots.size()) < k) {
    const double cand = ux(rng);
    bool ok = true;
    for (double existing : p.knots)
      if (std::abs(cand - existing) < min_gap) ok = false;
    if (ok) p.knots.push_back(cand);
  }
  std::sort(p.knots.begin(), p.knots.end());
  double s = us(rng) * (usign(rng) < 0.5 ? -1.0 : 1.0);
  p.slopes.push_back(s);
  for (int i = 0; i < k; ++i) {
    // slope jumps well above the detection threshold
    const double jump = us(rng) * (usign(rng) < 0.5 ? -1.0 : 1.0);
    s += (std::abs(jump) < 0.3 ? std::copysign(0.3, jump) : jump);
    p.slopes.push_back(s);
  }
  return p;
}

}  // namespace

TEST_CASE("extract recovers an exact vee") {
  const auto f = [](double x) { return 0.2 * std::abs(x); };
  const auto s = [](double x) { return x < 0 ? -0.2 : 0.2; };
  const PiecewiseLinear pwl = extract_pwl(f, s, -15.0, 15.0, {});
  REQUIRE(pwl.knots.size() == 1);
  CHECK(std::abs(pwl.knots[0]) <= 30.0 / 4000.0);
  CHECK(pwl.segments[0].u == doctest::Approx(-0.2).epsilon(1e-9));
  CHECK(pwl.segments[1].u == doctest::Approx(0.2).epsilon(1e-9));
  CHECK(pwl_distance(pwl, f, -15.0, 15.0, 2001) <= 1e-9);
}

TEST_CASE("globally linear input yields zero knots") {
  const auto f = [](double x) { return 1.7 * x - 0.3; };
  const PiecewiseLinear pwl = extract_pwl(f, nullptr, -4.0, 4.0, {});
  CHECK(pwl.knots.empty());
  CHECK(pwl.segments.size() == 1);
  CHECK(pwl.segments[0].u == doctest::Approx(1.7).epsilon(1e-9));
  CHECK(pwl_distance(pwl, f, -4.0, 4.0, 501) <= 1e-9);
}

TEST_CASE("three-knot synthetic function is recovered within one grid step") {
  SynthPwl p;
  p.lo = -3.0;
  p.hi = 3.0;
  p.y0 = 0.5;
  p.knots = {-1.2, 0.4, 2.0};
  p.slopes = {1.0, -0.5, 0.8, -1.4};
  const PiecewiseLinear pwl = extract_pwl([&](double x) { return p(x); },
                                          [&](double x) { return p.slope(x); }, p.lo, p.hi, {});
  REQUIRE(pwl.knots.size() == 3);
  const double step = 6.0 / 4000.0;
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(std::abs(pwl.knots[k] - p.knots[k]) <= step);
    CHECK(std::abs(pwl.segments[k].u - p.slopes[k]) <= 1e-6);
  }
  CHECK(std::abs(pwl.segments[3].u - p.slopes[3]) <= 1e-6);
}

TEST_CASE("round trip property on random admissible PWLs") {
  std::mt19937_64 rng(4701);
  int total_knots = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const SynthPwl p = random_admissible_pwl(rng, -4.0, 4.0, 6);
    const PiecewiseLinear pwl = extract_pwl(
        [&](double x) { return p(x); }, [&](double x) { return p.slope(x); }, p.lo, p.hi, {});
    // 100% recall/precision at one-grid-step tolerance
    REQUIRE(pwl.knots.size() == p.knots.size());
    const double step = (p.hi - p.lo) / 4000.0;
    for (std::size_t k = 0; k < p.knots.size(); ++k) {
      CHECK(std::abs(pwl.knots[k] - p.knots[k]) <= step);
      CHECK(std::abs(pwl.segments[k].u - p.slopes[k]) <= 1e-6);
    }
    CHECK(std::abs(pwl.segments.back().u - p.slopes.back()) <= 1e-6);
    // continuity invariant at every knot
    for (std::size_t k = 0; k < pwl.knots.size(); ++k) {
      const double xk = pwl.knots[k];
      const double yl = pwl.segments[k].u * xk + pwl.segments[k].v;
      const double yr = pwl.segments[k + 1].u * xk + pwl.segments[k + 1].v;
      CHECK(std::abs(yl - yr) <= 1e-9);
    }
    total_knots += static_cast<int>(p.knots.size());
  }
  CHECK(total_knots > 100);  // the generator actually exercised knots
}

TEST_CASE("extraction ignores collinear pseudo-knots") {
  // a function with a tiny slope wiggle far below the threshold
  const auto f = [](double x) { return 0.5 * x + 1e-6 * std::sin(x); };
  const PiecewiseLinear pwl = extract_pwl(f, nullptr, -3.0, 3.0, {});
  CHECK(pwl.knots.empty());
}

TEST_CASE("admissibility fixtures in the spirit of the figure examples") {
  const Dataset ds = Dataset::from_points({{-1.0, 0.0}, {0.5, 1.0}, {2.0, 0.0}});
  const PredictionIntervals intervals = make_intervals(ds, 3.0);
  const double tol = 0.02;

  // (a) knots exactly at training inputs: admissible
  PiecewiseLinear a;
  a.lo = -3.0;
  a.hi = 3.0;
  a.knots = {-1.0, 0.5, 2.0};
  a.segments = {{0, 0}, {1, 1}, {-1, 1.5}, {0, -2}};
  CHECK(check_admissible(a, intervals, tol).admissible);

  // (b) one interior knot per interval: admissible
  PiecewiseLinear b;
  b.lo = -3.0;
  b.hi = 3.0;
  b.knots = {-2.0, -0.2, 1.2, 2.5};
  b.segments = {{0, 0}, {0.5, 1}, {-0.5, 0.8}, {0.3, 0.1}, {0, 0.85}};
  CHECK(check_admissible(b, intervals, tol).admissible);

  // 3-knot end/end/interior configuration: admissible
  PiecewiseLinear c;
  c.lo = -3.0;
  c.hi = 3.0;
  c.knots = {-1.0 + 0.005, -0.3, 0.5 - 0.005};
  c.segments = {{0, 0}, {1, 1}, {-1, 0.4}, {0.5, 0.85}};
  const auto vc = check_admissible(c, intervals, tol);
  CHECK(vc.admissible);

  // (c) two interior knots plus an endpoint knot in one interval: rejected
  PiecewiseLinear d;
  d.lo = -3.0;
  d.hi = 3.0;
  d.knots = {-0.5, 0.0, 0.5};
  d.segments = {{0, 0}, {1, 0.5}, {-1, 0.5}, {0.4, 1.2}};
  const auto vd = check_admissible(d, intervals, tol);
  CHECK_FALSE(vd.admissible);
  CHECK(!vd.violation.empty());

  // four knots in one interval: rejected
  PiecewiseLinear e;
  e.lo = -3.0;
  e.hi = 3.0;
  e.knots = {-0.8, -0.4, 0.0, 0.4};
  e.segments = {{0, 0}, {1, 0.8}, {-1, 0}, {1, 0}, {0, 0.4}};
  CHECK_FALSE(check_admissible(e, intervals, tol).admissible);

  // zero knots: admissible
  PiecewiseLinear f;
  f.lo = -3.0;
  f.hi = 3.0;
  f.segments = {{0.3, 0}};
  CHECK(check_admissible(f, intervals, tol).admissible);
}

TEST_CASE("knots at shared interval endpoints count for both sides") {
  const Dataset ds = Dataset::from_points({{-1.0, 0.0}, {1.0, 0.0}});
  const PredictionIntervals intervals = make_intervals(ds, 2.0);
  PiecewiseLinear p;
  p.lo = -2.0;
  p.hi = 2.0;
  p.knots = {-1.0, 1.0};
  p.segments = {{0, 0}, {1, 1}, {0, 1}};
  const auto v = check_admissible(p, intervals, 0.01);
  CHECK(v.per_interval[0].knot_count == 1);
  CHECK(v.per_interval[1].knot_count == 2);
  CHECK(v.per_interval[2].knot_count == 1);
}

TEST_CASE("pwl json round trip and eval") {
  PiecewiseLinear p;
  p.lo = -1.0;
  p.hi = 1.0;
  p.knots = {0.0};
  p.segments = {{-1, 0}, {1, 0}};
  CHECK(p.eval(-0.5) == doctest::Approx(0.5));
  CHECK(p.eval(0.5) == doctest::Approx(0.5));
  CHECK(p.slope_at(-0.5) == -1.0);
  const PiecewiseLinear q = PiecewiseLinear::from_json(p.to_json());
  CHECK(q.knots == p.knots);
  CHECK(q.segments[0].u == -1.0);
  CHECK(q.eval(0.25) == p.eval(0.25));
}

TEST_CASE("pwl distance flags non-PWL inputs honestly") {
  const auto f = [](double x) { return x * x; };
  const PiecewiseLinear pwl = extract_pwl(f, nullptr, -1.0, 1.0, {});
  CHECK(pwl_distance(pwl, f, -1.0, 1.0, 501) >= 0.0);
}
