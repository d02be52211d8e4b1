#include <cmath>
#include <random>

#include "doctest.h"
#include "mfpl/gibbs.hpp"

using namespace mfpl;

namespace {

// gentle configuration used throughout: compact density, fast quadrature
const double kLambda = 1.0;
const double kBeta = 4.0;

Dataset small_ds() { return Dataset::from_points({{-1.0, 0.3}, {1.0, 0.3}}); }

ActivationSpec small_spec() { return ActivationSpec::smooth_truncated(4.0, 2.5); }

QuadratureOptions loose_quad() {
  QuadratureOptions q;
  q.tol_rel = 1e-5;
  return q;
}

GibbsState make_state(std::vector<double> r, double lambda = kLambda, double beta = kBeta) {
  GibbsState st;
  st.spec = small_spec();
  st.lambda = lambda;
  st.beta = beta;
  st.residuals.r = std::move(r);
  return st;
}

}  // namespace

TEST_CASE("potential closed forms and direct-sum oracle") {
  const Dataset ds = small_ds();
  const auto spec = small_spec();
  ResidualVector zero;
  zero.r = {0.0, 0.0};
  const Theta th{0.7, -1.2, 0.3};
  CHECK(potential(th, zero, ds, spec, 0.5) == doctest::Approx(0.25 * th.norm2()).epsilon(1e-14));
  ResidualVector r;
  r.r = {0.4, -0.2};
  CHECK(potential({0, 5, -1}, r, ds, spec, 0.8) ==
        doctest::Approx(0.5 * 0.8 * 26.0).epsilon(1e-14));  // a = 0 kills the sum

  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const Theta t{g(rng), g(rng), g(rng)};
    ResidualVector rv;
    rv.r = {g(rng), g(rng)};
    double expect = 0.5 * 0.3 * t.norm2();
    for (int i = 0; i < 2; ++i) expect += rv.r[i] * neuron_output(ds.x[i], t, spec);
    CHECK(potential(t, rv, ds, spec, 0.3) == doctest::Approx(expect).epsilon(1e-13));
  }
}

TEST_CASE("potential gradient matches finite differences") {
  const Dataset ds = small_ds();
  const auto spec = small_spec();
  ResidualVector rv;
  rv.r = {0.3, -0.6};
  std::mt19937_64 rng(13);
  std::normal_distribution<double> g(0.0, 1.0);
  const double h = 1e-6;
  for (int trial = 0; trial < 50; ++trial) {
    const Theta t{g(rng), g(rng), g(rng)};
    const Theta grad = potential_grad(t, rv, ds, spec, 0.4);
    const auto f = [&](const Theta& q) { return potential(q, rv, ds, spec, 0.4); };
    const double fa = (f({t.a + h, t.w, t.b}) - f({t.a - h, t.w, t.b})) / (2 * h);
    const double fw = (f({t.a, t.w + h, t.b}) - f({t.a, t.w - h, t.b})) / (2 * h);
    const double fb = (f({t.a, t.w, t.b + h}) - f({t.a, t.w, t.b - h})) / (2 * h);
    CHECK(std::abs(fa - grad.a) <= 1e-6 * std::max(1.0, std::abs(grad.a)));
    CHECK(std::abs(fw - grad.w) <= 1e-6 * std::max(1.0, std::abs(grad.w)));
    CHECK(std::abs(fb - grad.b) <= 1e-6 * std::max(1.0, std::abs(grad.b)));
  }
}

TEST_CASE("quadrature reproduces the r=0 Gaussian closed forms") {
  const Dataset ds = small_ds();
  const GibbsState st = make_state({0.0, 0.0});
  const GibbsExpectations e = gibbs_expectations_quadrature(st, ds);
  const double bl = st.beta * st.lambda;
  CHECK(std::abs(e.log_z - 1.5 * std::log(2 * M_PI / bl)) <= 1e-6);
  CHECK(std::abs(e.second_moment - 3.0 / bl) <= 1e-6);
  CHECK(std::abs(e.mean_potential - 1.5 / st.beta) <= 1e-6);

  // predictions vanish by the a -> -a symmetry; Monte-Carlo oracle cross-check
  std::mt19937_64 rng(19);
  std::normal_distribution<double> g(0.0, 1.0 / std::sqrt(bl));
  double mc0 = 0, mc1 = 0;
  const int N = 200000;
  for (int i = 0; i < N; ++i) {
    const Theta t{g(rng), g(rng), g(rng)};
    mc0 += neuron_output(ds.x[0], t, st.spec);
    mc1 += neuron_output(ds.x[1], t, st.spec);
  }
  mc0 /= N;
  mc1 /= N;
  CHECK(std::abs(e.predictions[0]) <= 1e-8);
  CHECK(std::abs(e.predictions[1]) <= 1e-8);
  CHECK(std::abs(mc0 - e.predictions[0]) <= 0.01);
  CHECK(std::abs(mc1 - e.predictions[1]) <= 0.01);

  // beta lambda large: the second moment collapses
  const GibbsState cold = make_state({0.0, 0.0}, 1.0, 1e4);
  const GibbsExpectations ec = gibbs_expectations_quadrature(cold, ds);
  CHECK(ec.second_moment == doctest::Approx(3e-4).epsilon(1e-4));
}

TEST_CASE("free energy of the r=0 state matches the Gaussian entropy") {
  const Dataset ds = small_ds();
  const GibbsState st = make_state({0.0, 0.0});
  const GibbsExpectations e = gibbs_expectations_quadrature(st, ds);
  const FreeEnergyReport rep = free_energy_of_gibbs(st, ds, e);
  const double bl = st.beta * st.lambda;
  CHECK(std::abs(*rep.entropy - 1.5 * std::log(2 * M_PI * M_E / bl)) <= 1e-6);
  // report combination identity
  CHECK(std::abs(*rep.free_energy - (0.5 * rep.risk + 0.5 * st.lambda * rep.second_moment -
                                     *rep.entropy / st.beta)) <= 1e-10);
}

TEST_CASE("mala reproduces the r=0 closed forms within its own error bars") {
  const Dataset ds = small_ds();
  const GibbsState st = make_state({0.0, 0.0});
  const GibbsExpectations e = gibbs_expectations_mala(st, ds);
  const double bl = st.beta * st.lambda;
  // stepping-stone rungs coincide at r = 0, so log Z is exact
  CHECK(std::abs(e.log_z - 1.5 * std::log(2 * M_PI / bl)) <= 1e-9);
  CHECK(std::abs(e.second_moment - 3.0 / bl) <= 4.0 * e.second_moment_err + 1e-3);
  CHECK(std::abs(e.predictions[0]) <= 4.0 * e.prediction_err[0] + 1e-3);
}

TEST_CASE("backends agree on a suite of random small states") {
  const Dataset ds = small_ds();
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> ur(-0.15, 0.15);
  for (int trial = 0; trial < 4; ++trial) {
    GibbsState st = make_state({ur(rng), ur(rng)}, 0.8 + 0.2 * trial, 3.0 + 1.0 * trial);
    const GibbsExpectations q = gibbs_expectations_quadrature(st, ds, loose_quad());
    MalaOptions mo;
    mo.seed = 1000 + trial;
    const GibbsExpectations m = gibbs_expectations_mala(st, ds, mo);
    for (int i = 0; i < 2; ++i) {
      const double tol = 3.0 * (q.prediction_err[i] + m.prediction_err[i]) + 2e-3;
      CHECK(std::abs(q.predictions[i] - m.predictions[i]) <= tol);
    }
    CHECK(std::abs(q.second_moment - m.second_moment) <=
          3.0 * (q.second_moment_err + m.second_moment_err) + 2e-3);
    CHECK(std::abs(q.log_z - m.log_z) <= 3.0 * (q.log_z_err + m.log_z_err) + 2e-3);
  }
}

TEST_CASE("fixed point: symmetric zero labels stay near zero") {
  const Dataset ds = Dataset::from_points({{-1.0, 0.0}, {1.0, 0.0}});
  FixedPointOptions opts;
  opts.eta = 0.5;
  opts.quad = loose_quad();
  const FixedPointResult res = solve_fixed_point(ds, small_spec(), kLambda, kBeta, opts);
  CHECK(std::abs(res.state.residuals.r[0]) <= 1e-6);
  CHECK(std::abs(res.state.residuals.r[1]) <= 1e-6);
  CHECK(res.trace.back().gap <= 1e-6);
}

TEST_CASE("fixed point: self-consistency and damping independence") {
  const Dataset ds = small_ds();
  FixedPointOptions opts;
  opts.eta = 1.0;
  opts.quad = loose_quad();
  const FixedPointResult res1 = solve_fixed_point(ds, small_spec(), kLambda, kBeta, opts);
  opts.eta = 0.3;
  const FixedPointResult res2 = solve_fixed_point(ds, small_spec(), kLambda, kBeta, opts);
  for (int i = 0; i < 2; ++i)
    CHECK(std::abs(res1.state.residuals.r[i] - res2.state.residuals.r[i]) <= 2e-6);

  // re-evaluating the residual map at the returned state reproduces it
  const GibbsExpectations e = gibbs_expectations_quadrature(res1.state, ds, loose_quad());
  for (int i = 0; i < 2; ++i) {
    const double r_new = -(ds.y[i] - e.predictions[i]) / 2.0;
    CHECK(std::abs(r_new - res1.state.residuals.r[i]) <= 2e-5);
  }

  // free-energy lower bound of the converged state
  const FreeEnergyReport rep = free_energy_of_gibbs(res1.state, ds, res1.expectations);
  const double bound =
      -(1.0 / kBeta) * (1.0 + 3.0 * std::log(8.0 * M_PI / (kBeta * kLambda)));
  CHECK(*rep.free_energy >= bound);

  // minimality probe: the non-self-consistent r=0 Gaussian reference scores worse
  const GibbsState ref = make_state({0.0, 0.0});
  const GibbsExpectations eref = gibbs_expectations_quadrature(ref, ds);
  double ref_risk = 0;
  for (int i = 0; i < 2; ++i) {
    const double d = eref.predictions[i] - ds.y[i];
    ref_risk += d * d;
  }
  ref_risk /= 2.0;
  const double ref_H = kBeta * eref.mean_potential + eref.log_z;
  const double ref_F =
      0.5 * ref_risk + 0.5 * kLambda * eref.second_moment - ref_H / kBeta;
  CHECK(*rep.free_energy <= ref_F + 1e-9);
}

TEST_CASE("partition function bounds across a beta grid") {
  const Dataset ds = small_ds();
  std::vector<double> betas = {2.0, 4.0, 8.0, 16.0};
  std::vector<double> logzs;
  for (double beta : betas) {
    FixedPointOptions opts;
    opts.eta = 0.4;
    opts.quad = loose_quad();
    const FixedPointResult res = solve_fixed_point(ds, small_spec(), kLambda, beta, opts);
    logzs.push_back(res.state.log_z);
  }
  // lower-bound structure: log Z decays no faster than -(3/2) log beta + const
  for (std::size_t i = 0; i + 1 < betas.size(); ++i) {
    const double slope =
        (logzs[i + 1] - logzs[i]) / (std::log(betas[i + 1]) - std::log(betas[i]));
    CHECK(slope >= -1.5 - 0.25);
  }
  // upper bound with the constant fitted on the first grid point and frozen
  const double c_fit = std::max(
      0.0, (logzs[0] - 1.0 - 3.0 * std::log(8.0 * M_PI / (betas[0] * kLambda))) / betas[0]);
  const double c_frozen = c_fit + 0.02;
  for (std::size_t i = 0; i < betas.size(); ++i)
    CHECK(logzs[i] <= betas[i] * c_frozen + 1.0 + 3.0 * std::log(8.0 * M_PI / (betas[i] * kLambda)));
}

TEST_CASE("free energy of ensembles") {
  const Dataset ds = Dataset::from_points({{-10.0, 2.0}, {10.0, 2.0}});
  const auto relu = ActivationSpec::relu_exact();
  const FreeEnergyReport atoms = free_energy_of_ensemble(build_two_atom(ds, relu), ds, 0.5);
  CHECK(atoms.risk <= 1e-20);
  CHECK(atoms.second_moment == doctest::Approx(0.8).epsilon(1e-14));
  CHECK(!atoms.entropy.has_value());

  const FreeEnergyReport saw =
      free_energy_of_ensemble(build_sawtooth(ds, 1.0, relu), ds, 0.5);
  CHECK(saw.risk <= 1e-10);

  ParticleEnsemble zeros;
  zeros.spec = relu;
  zeros.thetas = {{0, 0, 0}};
  const FreeEnergyReport z = free_energy_of_ensemble(zeros, ds, 0.5);
  CHECK(z.risk == doctest::Approx(4.0));
  CHECK(z.second_moment == 0.0);
}

TEST_CASE("curvature delta estimate tracks the smooth curvature at moderate beta") {
  // Lemma-1 style cross-check: the 2-D delta integral against the full
  // quadrature curvature, within 10% plus the 1/(m lambda) slack
  const Dataset ds = small_ds();
  FixedPointOptions opts;
  opts.eta = 0.5;
  opts.quad = loose_quad();
  ActivationSpec spec = ActivationSpec::smooth_truncated(8.0, 2.5);
  const FixedPointResult res = solve_fixed_point(ds, spec, kLambda, kBeta, opts);
  const std::vector<double> xs = {-0.6, 0.0, 0.6};
  const GibbsCurve curve = gibbs_predictor_curve(res.state, ds, xs);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double delta = curvature_delta_estimate(res.state, ds, xs[i]);
    const double slack =
        0.1 * std::max(std::abs(curve.curvature[i]), std::abs(delta)) +
        1.0 / (spec.m * kLambda);
    CHECK(std::abs(curve.curvature[i] - delta) <= slack);
  }
}

TEST_CASE("gibbs regime validation") {
  const Dataset ds = small_ds();
  GibbsState st = make_state({0.0, 0.0});
  st.spec = ActivationSpec::relu_exact();
  CHECK_THROWS_AS(gibbs_expectations_quadrature(st, ds), std::invalid_argument);
  CHECK_THROWS_AS(solve_fixed_point(ds, small_spec(), 0.0, kBeta, {}), std::invalid_argument);
  CHECK_THROWS_AS(
      solve_fixed_point(ds, small_spec(), kLambda, std::numeric_limits<double>::infinity(), {}),
      std::invalid_argument);
  FixedPointOptions bad;
  bad.eta = 0.0;
  CHECK_THROWS_AS(solve_fixed_point(ds, small_spec(), kLambda, kBeta, bad),
                  std::invalid_argument);
  bad.eta = 1.5;
  CHECK_THROWS_AS(solve_fixed_point(ds, small_spec(), kLambda, kBeta, bad),
                  std::invalid_argument);
}

TEST_CASE("starved quadrature reports non-convergence") {
  const Dataset ds = small_ds();
  const GibbsState st = make_state({-0.25, -0.25});
  QuadratureOptions opts;
  opts.min_axis_nodes = 16;
  opts.max_axis_nodes = 16;
  opts.tol_rel = 1e-12;
  CHECK_THROWS_AS(gibbs_expectations_quadrature(st, ds, opts), QuadratureNotConverged);
}

TEST_CASE("gibbs state json round trip") {
  GibbsState st = make_state({0.1, -0.2});
  st.log_z = 1.25;
  st.backend = GibbsBackend::Mala;
  const GibbsState back = GibbsState::from_json(st.to_json());
  CHECK(back.residuals.r == st.residuals.r);
  CHECK(back.lambda == st.lambda);
  CHECK(back.beta == st.beta);
  CHECK(back.log_z == 1.25);
  CHECK(back.backend == GibbsBackend::Mala);
  CHECK(back.spec.tau == 4.0);
}
