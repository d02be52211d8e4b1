#include "mfpl/gibbs.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <mutex>
#include <random>
#include <thread>

#include "json.hpp"
#include "mfpl/quadrature.hpp"

namespace mfpl {

namespace {

void require_gibbs_regime(const ActivationSpec& spec, double lambda, double beta) {
  if (spec.mode == ActivationMode::ReluExact)
    throw std::invalid_argument(
        "gibbs: exact ReLU activation is not integrable here; use a truncated spec");
  if (!(lambda > 0)) throw std::invalid_argument("gibbs: lambda must be positive");
  if (!(beta > 0) || std::isinf(beta))
    throw std::invalid_argument("gibbs: beta must be positive and finite");
}

// deterministic parallel loop: chunks are reduced in index order by the caller
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  const std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t workers = std::min<std::size_t>(hw, 16);
  if (workers <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::size_t next = 0;
  std::mutex mu;
  for (std::size_t t = 0; t < workers; ++t)
    pool.emplace_back([&] {
      for (;;) {
        std::size_t i;
        {
          std::lock_guard<std::mutex> lock(mu);
          if (next >= n) return;
          i = next++;
        }
        body(i);
      }
    });
  for (auto& th : pool) th.join();
}

struct AxisBox {
  double lo = 0, hi = 0;
  double length() const { return hi - lo; }
};

struct Box3 {
  AxisBox a, w, b;
  bool covers(const Box3& other) const {
    return a.lo <= other.a.lo && a.hi >= other.a.hi && w.lo <= other.w.lo &&
           w.hi >= other.w.hi && b.lo <= other.b.lo && b.hi >= other.b.hi;
  }
};

// certified localization: the potential obeys
//   Psi >= (lambda/2)||theta||^2 - sum_i |r_i| 2 m^3,
// so all density above exp(-headroom) relative to the peak lies inside a ball.
double certified_radius(const ResidualVector& r, const ActivationSpec& spec, double lambda,
                        double beta, double headroom) {
  double sum_abs = 0;
  for (double v : r.r) sum_abs += std::abs(v);
  const double act_bound = 2.0 * spec.m * spec.m * spec.m;
  return std::sqrt(2.0 * (beta * sum_abs * act_bound + headroom) / (beta * lambda)) + 1.0;
}

// snap the scan radius to a coarse ladder so the scan lattice (and with it the
// downstream boxes) is piecewise constant along a solver trajectory
double snapped_radius(double r) {
  double s = 1.0;
  while (s < r) s *= 1.25;
  return s;
}

// coarse grid scan locating the region where the log-density is within
// `headroom` of its maximum; returns a padded axis-aligned box
Box3 scan_box(const ResidualVector& r, const Dataset& ds, const ActivationSpec& spec,
              double lambda, double beta, const QuadratureOptions& opts) {
  const double R =
      snapped_radius(certified_radius(r, spec, lambda, beta, opts.headroom));
  const std::size_t n = opts.scan_nodes;
  const double step = 2.0 * R / static_cast<double>(n - 1);
  std::vector<double> logd(n * n * n);
  parallel_for(n, [&](std::size_t ia) {
    Theta t;
    t.a = -R + step * static_cast<double>(ia);
    for (std::size_t iw = 0; iw < n; ++iw) {
      t.w = -R + step * static_cast<double>(iw);
      for (std::size_t ib = 0; ib < n; ++ib) {
        t.b = -R + step * static_cast<double>(ib);
        logd[(ia * n + iw) * n + ib] = -beta * potential(t, r, ds, spec, lambda);
      }
    }
  });
  double lmax = -std::numeric_limits<double>::infinity();
  for (double v : logd) lmax = std::max(lmax, v);
  Box3 box{{R, -R}, {R, -R}, {R, -R}};
  for (std::size_t ia = 0; ia < n; ++ia)
    for (std::size_t iw = 0; iw < n; ++iw)
      for (std::size_t ib = 0; ib < n; ++ib) {
        if (logd[(ia * n + iw) * n + ib] < lmax - opts.headroom) continue;
        const double a = -R + step * static_cast<double>(ia);
        const double w = -R + step * static_cast<double>(iw);
        const double b = -R + step * static_cast<double>(ib);
        box.a.lo = std::min(box.a.lo, a);
        box.a.hi = std::max(box.a.hi, a);
        box.w.lo = std::min(box.w.lo, w);
        box.w.hi = std::max(box.w.hi, w);
        box.b.lo = std::min(box.b.lo, b);
        box.b.hi = std::max(box.b.hi, b);
      }
  const double pad = 1.5 * step;
  const auto padded = [&](AxisBox ab) {
    return AxisBox{std::max(ab.lo - pad, -R), std::min(ab.hi + pad, R)};
  };
  box.a = padded(box.a);
  box.w = padded(box.w);
  box.b = padded(box.b);
  return box;
}

struct GridSpec {
  Box3 box;
  std::size_t na = 0, nw = 0, nb = 0;
};

struct TensorResult {
  std::vector<double> pred;
  double m2 = 0, psi = 0, log_z = 0;
};

TensorResult eval_tensor(const ResidualVector& r, const Dataset& ds,
                         const ActivationSpec& spec, double lambda, double beta,
                         const GridSpec& grid) {
  const std::size_t M = ds.size();
  const std::size_t na = grid.na, nw = grid.nw, nb = grid.nb;
  std::vector<double> xa, wa, xw, ww, xb, wb;
  gauss_legendre(grid.box.a.lo, grid.box.a.hi, na, xa, wa);
  gauss_legendre(grid.box.w.lo, grid.box.w.hi, nw, xw, ww);
  gauss_legendre(grid.box.b.lo, grid.box.b.hi, nb, xb, wb);
  std::vector<double> logwa(na), logww(nw), logwb(nb);
  for (std::size_t i = 0; i < na; ++i) logwa[i] = std::log(wa[i]);
  for (std::size_t i = 0; i < nw; ++i) logww[i] = std::log(ww[i]);
  for (std::size_t i = 0; i < nb; ++i) logwb[i] = std::log(wb[i]);
  const double half_lambda = 0.5 * lambda;

  // pass 1: peak of the log-integrand, per-ia slices in parallel
  std::vector<double> slice_max(na, -std::numeric_limits<double>::infinity());
  parallel_for(na, [&](std::size_t ia) {
    const double a = xa[ia];
    const double am = truncate_param(a, spec);
    std::vector<double> wmx(M);
    double local = -std::numeric_limits<double>::infinity();
    for (std::size_t iw = 0; iw < nw; ++iw) {
      const double w = xw[iw];
      const double wm = truncate_param(w, spec);
      for (std::size_t i = 0; i < M; ++i) wmx[i] = wm * ds.x[i];
      const double q2 = a * a + w * w;
      const double lw2 = logwa[ia] + logww[iw];
      for (std::size_t ib = 0; ib < nb; ++ib) {
        const double b = xb[ib];
        double psi = half_lambda * (q2 + b * b);
        for (std::size_t i = 0; i < M; ++i)
          psi += r.r[i] * am * softplus_trunc(wmx[i] + b, spec);
        local = std::max(local, -beta * psi + lw2 + logwb[ib]);
      }
    }
    slice_max[ia] = local;
  });
  const double lmax = *std::max_element(slice_max.begin(), slice_max.end());

  // pass 2: accumulate per slice, then reduce in index order (deterministic)
  struct Partial {
    long double s0 = 0, sm2 = 0, spsi = 0;
    std::vector<long double> sp;
  };
  std::vector<Partial> parts(na);
  parallel_for(na, [&](std::size_t ia) {
    Partial& p = parts[ia];
    p.sp.assign(M, 0.0L);
    const double a = xa[ia];
    const double am = truncate_param(a, spec);
    std::vector<double> wmx(M), act(M);
    for (std::size_t iw = 0; iw < nw; ++iw) {
      const double w = xw[iw];
      const double wm = truncate_param(w, spec);
      for (std::size_t i = 0; i < M; ++i) wmx[i] = wm * ds.x[i];
      const double q2 = a * a + w * w;
      const double lw2 = logwa[ia] + logww[iw];
      for (std::size_t ib = 0; ib < nb; ++ib) {
        const double b = xb[ib];
        double psi = half_lambda * (q2 + b * b);
        for (std::size_t i = 0; i < M; ++i) {
          act[i] = am * softplus_trunc(wmx[i] + b, spec);
          psi += r.r[i] * act[i];
        }
        const double e = std::exp(-beta * psi + lw2 + logwb[ib] - lmax);
        p.s0 += e;
        p.sm2 += e * (q2 + b * b);
        p.spsi += e * psi;
        for (std::size_t i = 0; i < M; ++i) p.sp[i] += e * act[i];
      }
    }
  });
  long double s0 = 0, sm2 = 0, spsi = 0;
  std::vector<long double> sp(M, 0.0L);
  for (const Partial& p : parts) {
    s0 += p.s0;
    sm2 += p.sm2;
    spsi += p.spsi;
    for (std::size_t i = 0; i < M; ++i) sp[i] += p.sp[i];
  }

  TensorResult res;
  res.log_z = lmax + std::log(static_cast<double>(s0));
  res.m2 = static_cast<double>(sm2 / s0);
  res.psi = static_cast<double>(spsi / s0);
  res.pred.resize(M);
  for (std::size_t i = 0; i < M; ++i) res.pred[i] = static_cast<double>(sp[i] / s0);
  return res;
}

std::size_t round_up16(double v) {
  const auto n = static_cast<std::size_t>(std::ceil(v / 16.0)) * 16;
  return std::max<std::size_t>(n, 16);
}

GridSpec grid_for(const Box3& box, double beta, double lambda, double per_sigma,
                  const QuadratureOptions& opts) {
  const double sigma = 1.0 / std::sqrt(beta * lambda);
  const auto nodes = [&](const AxisBox& ab) {
    return std::clamp(round_up16(ab.length() / sigma * per_sigma), opts.min_axis_nodes,
                      opts.max_axis_nodes);
  };
  return {box, nodes(box.a), nodes(box.w), nodes(box.b)};
}

struct LadderOutcome {
  GibbsExpectations exp;
  GridSpec grid;
};

// refine node counts until predictions, second moment and log Z stabilize
LadderOutcome quadrature_ladder(const GibbsState& state, const Dataset& ds,
                                const QuadratureOptions& opts) {
  const Box3 box = scan_box(state.residuals, ds, state.spec, state.lambda, state.beta, opts);
  TensorResult prev;
  GridSpec prev_grid;
  bool have_prev = false;
  double per_sigma = opts.nodes_per_sigma;
  for (int level = 0; level < 12; ++level) {
    const GridSpec grid = grid_for(box, state.beta, state.lambda, per_sigma, opts);
    if (have_prev && grid.na == prev_grid.na && grid.nw == prev_grid.nw &&
        grid.nb == prev_grid.nb) {
      per_sigma *= 1.35;
      continue;  // ladder step did not change the grid (axis caps)
    }
    TensorResult cur = eval_tensor(state.residuals, ds, state.spec, state.lambda, state.beta, grid);
    if (have_prev) {
      double pred_err = 0, pred_scale = 1.0;
      for (std::size_t i = 0; i < cur.pred.size(); ++i) {
        pred_err = std::max(pred_err, std::abs(cur.pred[i] - prev.pred[i]));
        pred_scale = std::max(pred_scale, std::abs(cur.pred[i]));
      }
      const double m2_err = std::abs(cur.m2 - prev.m2);
      const double lz_err = std::abs(cur.log_z - prev.log_z);
      const double psi_err = std::abs(cur.psi - prev.psi);
      LadderOutcome out;
      out.exp.predictions = cur.pred;
      out.exp.prediction_err.assign(cur.pred.size(), pred_err);
      out.exp.second_moment = cur.m2;
      out.exp.second_moment_err = m2_err;
      out.exp.mean_potential = cur.psi;
      out.exp.mean_potential_err = psi_err;
      out.exp.log_z = cur.log_z;
      out.exp.log_z_err = lz_err;
      out.grid = grid;
      const bool done = pred_err <= opts.tol_rel * pred_scale &&
                        m2_err <= opts.tol_rel * std::max(1.0, cur.m2) &&
                        lz_err <= opts.tol_rel * std::max(1.0, std::abs(cur.log_z));
      if (done) return out;
      if (grid.na >= opts.max_axis_nodes && grid.nw >= opts.max_axis_nodes &&
          grid.nb >= opts.max_axis_nodes)
        throw QuadratureNotConverged("gibbs quadrature: change " + std::to_string(pred_err) +
                                     " above tolerance at max node count");
      const bool capped = (grid.na >= opts.max_axis_nodes || grid.na == prev_grid.na) &&
                          (grid.nw >= opts.max_axis_nodes || grid.nw == prev_grid.nw) &&
                          (grid.nb >= opts.max_axis_nodes || grid.nb == prev_grid.nb);
      if (capped)
        throw QuadratureNotConverged("gibbs quadrature: change " + std::to_string(pred_err) +
                                     " above tolerance with all axes capped");
    }
    prev = std::move(cur);
    prev_grid = grid;
    have_prev = true;
    per_sigma *= 1.35;
  }
  throw QuadratureNotConverged("gibbs quadrature: refinement limit reached");
}

}  // namespace

std::string GibbsState::to_json() const {
  nlohmann::json j;
  j["r"] = residuals.r;
  j["lambda"] = lambda;
  j["beta"] = beta;
  j["spec"] = nlohmann::json::parse(spec.to_json());
  j["log_z"] = log_z;
  j["backend"] = backend == GibbsBackend::TensorQuadrature ? "quadrature" : "mala";
  return j.dump();
}

GibbsState GibbsState::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  GibbsState s;
  s.residuals.r = j.at("r").get<std::vector<double>>();
  s.lambda = j.at("lambda").get<double>();
  s.beta = j.at("beta").get<double>();
  s.spec = ActivationSpec::from_json(j.at("spec").dump());
  s.log_z = j.value("log_z", 0.0);
  s.backend = j.value("backend", std::string("quadrature")) == "mala"
                  ? GibbsBackend::Mala
                  : GibbsBackend::TensorQuadrature;
  return s;
}

double potential(const Theta& theta, const ResidualVector& r, const Dataset& ds,
                 const ActivationSpec& spec, double lambda) {
  double s = 0.5 * lambda * theta.norm2();
  for (std::size_t i = 0; i < ds.size(); ++i)
    s += r.r[i] * neuron_output(ds.x[i], theta, spec);
  return s;
}

Theta potential_grad(const Theta& theta, const ResidualVector& r, const Dataset& ds,
                     const ActivationSpec& spec, double lambda) {
  Theta g{lambda * theta.a, lambda * theta.w, lambda * theta.b};
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Theta n = neuron_grad_theta(ds.x[i], theta, spec);
    g.a += r.r[i] * n.a;
    g.w += r.r[i] * n.w;
    g.b += r.r[i] * n.b;
  }
  return g;
}

GibbsExpectations gibbs_expectations_quadrature(const GibbsState& state, const Dataset& ds,
                                                const QuadratureOptions& opts) {
  require_gibbs_regime(state.spec, state.lambda, state.beta);
  return quadrature_ladder(state, ds, opts).exp;
}

namespace {

struct ChainStats {
  std::vector<double> psi_values;  // for split-chain PSRF
  std::vector<double> pred_sum;    // per data point
  double m2_sum = 0, psi_sum = 0;
  std::size_t kept = 0;
};

// one MALA chain on U(theta) = beta * Psi(theta); step adapted in burn-in
ChainStats run_chain(const GibbsState& st, const Dataset& ds, std::size_t steps,
                     double target_accept, std::mt19937_64& rng) {
  const std::size_t M = ds.size();
  ChainStats cs;
  cs.pred_sum.assign(M, 0.0);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  const double sigma0 = 1.0 / std::sqrt(st.beta * st.lambda);
  Theta th{2 * sigma0 * g(rng), 2 * sigma0 * g(rng), 2 * sigma0 * g(rng)};
  const auto U = [&](const Theta& t) {
    return st.beta * potential(t, st.residuals, ds, st.spec, st.lambda);
  };
  const auto gradU = [&](const Theta& t) {
    Theta gr = potential_grad(t, st.residuals, ds, st.spec, st.lambda);
    gr.a *= st.beta;
    gr.w *= st.beta;
    gr.b *= st.beta;
    return gr;
  };

  double u = U(th);
  Theta gu = gradU(th);
  double h = sigma0 * sigma0;  // Langevin step, adapted below
  const std::size_t burn = steps / 2;
  for (std::size_t k = 0; k < steps; ++k) {
    Theta prop{th.a - 0.5 * h * gu.a + std::sqrt(h) * g(rng),
               th.w - 0.5 * h * gu.w + std::sqrt(h) * g(rng),
               th.b - 0.5 * h * gu.b + std::sqrt(h) * g(rng)};
    const double up = U(prop);
    const Theta gup = gradU(prop);
    const auto log_q = [&](const Theta& to, const Theta& from, const Theta& gfrom) {
      const double da = to.a - from.a + 0.5 * h * gfrom.a;
      const double dw = to.w - from.w + 0.5 * h * gfrom.w;
      const double db = to.b - from.b + 0.5 * h * gfrom.b;
      return -(da * da + dw * dw + db * db) / (2.0 * h);
    };
    const double log_alpha = -up + u + log_q(th, prop, gup) - log_q(prop, th, gu);
    const double alpha = std::exp(std::min(0.0, log_alpha));
    if (unif(rng) < alpha) {
      th = prop;
      u = up;
      gu = gup;
    }
    if (k < burn) {
      const double rate = std::min(0.25, 4.0 / std::sqrt(static_cast<double>(k + 1)));
      h *= std::exp(rate * (alpha - target_accept));
    } else {
      cs.psi_values.push_back(u / st.beta);
      for (std::size_t i = 0; i < M; ++i)
        cs.pred_sum[i] += neuron_output(ds.x[i], th, st.spec);
      cs.m2_sum += th.norm2();
      cs.psi_sum += u / st.beta;
      ++cs.kept;
    }
  }
  return cs;
}

double split_chain_psrf(const std::vector<ChainStats>& chains) {
  std::vector<double> means, vars;
  std::size_t n = 0;
  for (const ChainStats& c : chains) {
    n = c.psi_values.size() / 2;
    if (n < 2) continue;
    for (int half = 0; half < 2; ++half) {
      const std::size_t off = half * n;
      double m = 0;
      for (std::size_t i = 0; i < n; ++i) m += c.psi_values[off + i];
      m /= static_cast<double>(n);
      double v = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = c.psi_values[off + i] - m;
        v += d * d;
      }
      v /= static_cast<double>(n - 1);
      means.push_back(m);
      vars.push_back(v);
    }
  }
  if (means.size() < 2 || n < 2) return 1.0;
  const std::size_t S = means.size();
  double W = 0;
  for (double v : vars) W += v;
  W /= static_cast<double>(S);
  double grand = 0;
  for (double m : means) grand += m;
  grand /= static_cast<double>(S);
  double B_over_n = 0;
  for (double m : means) B_over_n += (m - grand) * (m - grand);
  B_over_n /= static_cast<double>(S - 1);
  if (W <= 0) return 1.0;
  const double var_hat =
      (static_cast<double>(n - 1) / static_cast<double>(n)) * W + B_over_n;
  return std::sqrt(var_hat / W);
}

// stepping-stone estimate of log Z along U_t = beta (lambda/2 ||theta||^2 + t A)
double stepping_stone_log_z(const GibbsState& st, const Dataset& ds, const MalaOptions& opts,
                            std::mt19937_64& rng, double& se_out) {
  const std::size_t K = opts.logz_rungs;
  const double log_z0 =
      1.5 * std::log(2.0 * M_PI / (st.beta * st.lambda));  // Gaussian reference
  const auto act_part = [&](const Theta& t) {
    double s = 0;
    for (std::size_t i = 0; i < ds.size(); ++i)
      s += st.residuals.r[i] * neuron_output(ds.x[i], t, st.spec);
    return s;
  };
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double sigma0 = 1.0 / std::sqrt(st.beta * st.lambda);

  double total = 0, var_total = 0;
  Theta th{sigma0 * g(rng), sigma0 * g(rng), sigma0 * g(rng)};
  for (std::size_t k = 0; k < K; ++k) {
    const double t0 = static_cast<double>(k) / static_cast<double>(K);
    const double dt = 1.0 / static_cast<double>(K);
    const auto U = [&](const Theta& t) {
      return st.beta * (0.5 * st.lambda * t.norm2() + t0 * act_part(t));
    };
    const auto gradU = [&](const Theta& t) {
      Theta gr{st.lambda * t.a, st.lambda * t.w, st.lambda * t.b};
      for (std::size_t i = 0; i < ds.size(); ++i) {
        const Theta ng = neuron_grad_theta(ds.x[i], t, st.spec);
        gr.a += t0 * st.residuals.r[i] * ng.a;
        gr.w += t0 * st.residuals.r[i] * ng.w;
        gr.b += t0 * st.residuals.r[i] * ng.b;
      }
      gr.a *= st.beta;
      gr.w *= st.beta;
      gr.b *= st.beta;
      return gr;
    };
    double u = U(th);
    Theta gu = gradU(th);
    double h = sigma0 * sigma0;
    const std::size_t burn = opts.logz_steps_per_rung / 3;
    std::vector<double> lw;  // log weights -beta dt A
    for (std::size_t s = 0; s < opts.logz_steps_per_rung; ++s) {
      Theta prop{th.a - 0.5 * h * gu.a + std::sqrt(h) * g(rng),
                 th.w - 0.5 * h * gu.w + std::sqrt(h) * g(rng),
                 th.b - 0.5 * h * gu.b + std::sqrt(h) * g(rng)};
      const double up = U(prop);
      const Theta gup = gradU(prop);
      const auto log_q = [&](const Theta& to, const Theta& from, const Theta& gfrom) {
        const double da = to.a - from.a + 0.5 * h * gfrom.a;
        const double dw = to.w - from.w + 0.5 * h * gfrom.w;
        const double db = to.b - from.b + 0.5 * h * gfrom.b;
        return -(da * da + dw * dw + db * db) / (2.0 * h);
      };
      const double log_alpha = -up + u + log_q(th, prop, gup) - log_q(prop, th, gu);
      const double alpha = std::exp(std::min(0.0, log_alpha));
      if (unif(rng) < alpha) {
        th = prop;
        u = up;
        gu = gup;
      }
      if (s < burn) {
        const double rate = std::min(0.25, 4.0 / std::sqrt(static_cast<double>(s + 1)));
        h *= std::exp(rate * (alpha - opts.target_accept));
      } else {
        lw.push_back(-st.beta * dt * act_part(th));
      }
    }
    const auto log_mean_exp = [](const std::vector<double>& v, std::size_t from,
                                 std::size_t to) {
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t i = from; i < to; ++i) m = std::max(m, v[i]);
      double s = 0;
      for (std::size_t i = from; i < to; ++i) s += std::exp(v[i] - m);
      return m + std::log(s / static_cast<double>(to - from));
    };
    const double full = log_mean_exp(lw, 0, lw.size());
    const double h1 = log_mean_exp(lw, 0, lw.size() / 2);
    const double h2 = log_mean_exp(lw, lw.size() / 2, lw.size());
    total += full;
    var_total += 0.25 * (h1 - h2) * (h1 - h2);
  }
  se_out = std::sqrt(var_total);
  return log_z0 + total;
}

}  // namespace

GibbsExpectations gibbs_expectations_mala(const GibbsState& state, const Dataset& ds,
                                          const MalaOptions& opts) {
  require_gibbs_regime(state.spec, state.lambda, state.beta);
  const std::size_t M = ds.size();
  std::vector<ChainStats> chains(opts.chains);
  parallel_for(opts.chains, [&](std::size_t c) {
    std::mt19937_64 rng(opts.seed + 7919 * (c + 1));
    chains[c] = run_chain(state, ds, opts.steps_per_chain, opts.target_accept, rng);
  });
  const double rhat = split_chain_psrf(chains);
  if (rhat > opts.psrf_limit)
    throw ChainNotMixed("gibbs mala: split-chain PSRF " + std::to_string(rhat) + " > " +
                        std::to_string(opts.psrf_limit));

  GibbsExpectations out;
  out.predictions.assign(M, 0.0);
  out.prediction_err.assign(M, 0.0);
  const double C = static_cast<double>(chains.size());
  std::vector<std::vector<double>> chain_pred(M);
  std::vector<double> chain_m2, chain_psi;
  for (const ChainStats& cs : chains) {
    const double n = static_cast<double>(cs.kept);
    for (std::size_t i = 0; i < M; ++i) chain_pred[i].push_back(cs.pred_sum[i] / n);
    chain_m2.push_back(cs.m2_sum / n);
    chain_psi.push_back(cs.psi_sum / n);
  }
  const auto mean_se = [&](const std::vector<double>& v, double& mean, double& se) {
    mean = 0;
    for (double x : v) mean += x;
    mean /= C;
    double var = 0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= std::max(1.0, C - 1);
    se = std::sqrt(var / C);
  };
  for (std::size_t i = 0; i < M; ++i)
    mean_se(chain_pred[i], out.predictions[i], out.prediction_err[i]);
  mean_se(chain_m2, out.second_moment, out.second_moment_err);
  mean_se(chain_psi, out.mean_potential, out.mean_potential_err);

  std::mt19937_64 rng(opts.seed ^ 0x9e3779b97f4a7c15ull);
  out.log_z = stepping_stone_log_z(state, ds, opts, rng, out.log_z_err);
  return out;
}

GibbsExpectations gibbs_expectations(const GibbsState& state, const Dataset& ds) {
  if (state.backend == GibbsBackend::Mala) return gibbs_expectations_mala(state, ds);
  return gibbs_expectations_quadrature(state, ds);
}

void FixedPointResult::trace_to_csv(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write " + path);
  out << "iter,residual_gap,risk\n";
  out.precision(17);
  for (const SolverTraceRow& row : trace)
    out << row.iter << ',' << row.gap << ',' << row.risk << '\n';
}

FixedPointResult solve_fixed_point(const Dataset& ds, const ActivationSpec& spec,
                                   double lambda, double beta, const FixedPointOptions& opts) {
  require_gibbs_regime(spec, lambda, beta);
  if (!(opts.eta > 0.0 && opts.eta <= 1.0))
    throw std::invalid_argument("solve_fixed_point: damping must be in (0, 1]");
  const std::size_t M = ds.size();

  GibbsState state;
  state.spec = spec;
  state.lambda = lambda;
  state.beta = beta;
  state.backend = opts.backend;
  state.residuals.r.assign(M, 0.0);

  std::vector<SolverTraceRow> trace;
  const double invM = 1.0 / static_cast<double>(M);
  QuadratureOptions coarse = opts.quad;
  coarse.tol_rel = std::max(opts.quad.tol_rel, opts.coarse_tol_rel);

  // Quadrature iterations run on a frozen node grid so the damped update sees
  // one smooth discretized map; the grid re-freezes when the scan region
  // escapes the frozen box or the tolerance phase changes. Coarse-phase grids
  // are built at a fixed resolution with an inflated box so the density can
  // drift for many iterations without a re-freeze.
  bool fine_phase = opts.backend != GibbsBackend::TensorQuadrature;
  GridSpec grid;
  GibbsExpectations grid_err;  // ladder error estimates captured at freeze time
  bool have_grid = false;

  const auto inflate = [](Box3 b) {
    const auto grow = [](AxisBox ab) {
      const double pad = 0.2 * ab.length();
      return AxisBox{ab.lo - pad, ab.hi + pad};
    };
    return Box3{grow(b.a), grow(b.w), grow(b.b)};
  };

  for (std::size_t it = 1; it <= opts.max_iters; ++it) {
    GibbsExpectations exp;
    if (opts.backend == GibbsBackend::Mala) {
      exp = gibbs_expectations_mala(state, ds, opts.mala);
    } else {
      const Box3 want = scan_box(state.residuals, ds, spec, lambda, beta,
                                 fine_phase ? opts.quad : coarse);
      if (!have_grid || !grid.box.covers(want)) {
        if (fine_phase) {
          const LadderOutcome lo = quadrature_ladder(state, ds, opts.quad);
          grid = lo.grid;
          grid_err = lo.exp;
          exp = lo.exp;
        } else {
          grid = grid_for(inflate(want), beta, lambda, 3.0, coarse);
          const TensorResult t = eval_tensor(state.residuals, ds, spec, lambda, beta, grid);
          exp.predictions = t.pred;
          exp.prediction_err.assign(M, coarse.tol_rel);
          exp.second_moment = t.m2;
          exp.second_moment_err = coarse.tol_rel;
          exp.mean_potential = t.psi;
          exp.log_z = t.log_z;
          grid_err = exp;
        }
        have_grid = true;
      } else {
        const TensorResult t = eval_tensor(state.residuals, ds, spec, lambda, beta, grid);
        exp.predictions = t.pred;
        exp.prediction_err = grid_err.prediction_err;
        exp.second_moment = t.m2;
        exp.second_moment_err = grid_err.second_moment_err;
        exp.mean_potential = t.psi;
        exp.mean_potential_err = grid_err.mean_potential_err;
        exp.log_z = t.log_z;
        exp.log_z_err = grid_err.log_z_err;
      }
    }

    std::vector<double> r_new(M);
    double gap = 0;
    for (std::size_t i = 0; i < M; ++i) {
      r_new[i] = -invM * (ds.y[i] - exp.predictions[i]);
      gap = std::max(gap, std::abs(r_new[i] - state.residuals.r[i]));
    }
    double risk = 0;
    for (double v : r_new) risk += v * v;
    risk *= static_cast<double>(M);
    trace.push_back({it, gap, risk});

    if (gap <= opts.tol && fine_phase) {
      FixedPointResult res;
      state.log_z = exp.log_z;
      res.state = state;
      res.expectations = exp;
      res.trace = std::move(trace);
      return res;
    }
    if (!fine_phase && gap <= std::max(20.0 * opts.tol, 1e-3)) {
      fine_phase = true;
      have_grid = false;  // re-freeze at the tight tolerance
    }
    for (std::size_t i = 0; i < M; ++i)
      state.residuals.r[i] = (1.0 - opts.eta) * state.residuals.r[i] + opts.eta * r_new[i];
  }
  throw NotConverged("solve_fixed_point: no convergence in " +
                         std::to_string(opts.max_iters) + " iterations",
                     std::move(trace));
}

FreeEnergyReport free_energy_of_gibbs(const GibbsState& state, const Dataset& ds,
                                      const GibbsExpectations& exp) {
  FreeEnergyReport rep;
  rep.risk = state.residuals.risk();
  rep.second_moment = exp.second_moment;
  // Gibbs identity: H(rho) = beta E[Psi] + log Z
  const double H = state.beta * exp.mean_potential + exp.log_z;
  rep.entropy = H;
  rep.free_energy = 0.5 * rep.risk + 0.5 * state.lambda * rep.second_moment - H / state.beta;
  (void)ds;
  return rep;
}

FreeEnergyReport free_energy_of_gibbs(const GibbsState& state, const Dataset& ds) {
  return free_energy_of_gibbs(state, ds, gibbs_expectations(state, ds));
}

FreeEnergyReport free_energy_of_ensemble(const ParticleEnsemble& ens, const Dataset& ds,
                                         double lambda) {
  FreeEnergyReport rep;
  rep.risk = empirical_risk(ens, ds);
  rep.second_moment = ens.second_moment();
  (void)lambda;
  return rep;
}

GibbsCurve gibbs_predictor_curve(const GibbsState& state, const Dataset& ds,
                                 const std::vector<double>& xs,
                                 const QuadratureOptions& opts) {
  require_gibbs_regime(state.spec, state.lambda, state.beta);
  const std::size_t M = ds.size();
  const std::size_t P = xs.size();
  const Box3 box = scan_box(state.residuals, ds, state.spec, state.lambda, state.beta, opts);
  // the curvature integrand lives on the softplus transition layer of width
  // 1/tau, so the spacing must resolve min(envelope sigma, transition width)
  const double sigma_env = 1.0 / std::sqrt(state.beta * state.lambda);
  double feature = sigma_env / 4.0;
  if (!std::isinf(state.spec.tau))
    feature = std::min(feature, 1.0 / (3.0 * state.spec.tau));
  const auto nodes = [&](const AxisBox& ab) {
    return std::clamp(round_up16(ab.length() / feature), opts.min_axis_nodes,
                      opts.max_axis_nodes);
  };
  const GridSpec grid{box, nodes(box.a), nodes(box.w), nodes(box.b)};
  std::vector<double> xa, wa, xw, ww, xb, wb;
  gauss_legendre(box.a.lo, box.a.hi, grid.na, xa, wa);
  gauss_legendre(box.w.lo, box.w.hi, grid.nw, xw, ww);
  gauss_legendre(box.b.lo, box.b.hi, grid.nb, xb, wb);

  // peak of the log-density over the nodes for stable normalization
  std::vector<double> slice_max(grid.na, -std::numeric_limits<double>::infinity());
  parallel_for(grid.na, [&](std::size_t ia) {
    double local = -std::numeric_limits<double>::infinity();
    for (std::size_t iw = 0; iw < grid.nw; ++iw)
      for (std::size_t ib = 0; ib < grid.nb; ++ib) {
        const Theta t{xa[ia], xw[iw], xb[ib]};
        const double L =
            -state.beta * potential(t, state.residuals, ds, state.spec, state.lambda) +
            std::log(wa[ia] * ww[iw] * wb[ib]);
        local = std::max(local, L);
      }
    slice_max[ia] = local;
  });
  const double lmax = *std::max_element(slice_max.begin(), slice_max.end());

  struct Partial {
    long double s0 = 0;
    std::vector<long double> sv, ss, sc;
  };
  std::vector<Partial> parts(grid.na);
  parallel_for(grid.na, [&](std::size_t ia) {
    Partial& p = parts[ia];
    p.sv.assign(P, 0.0L);
    p.ss.assign(P, 0.0L);
    p.sc.assign(P, 0.0L);
    const double am = truncate_param(xa[ia], state.spec);
    for (std::size_t iw = 0; iw < grid.nw; ++iw) {
      const double wm = truncate_param(xw[iw], state.spec);
      const double lw2 = std::log(wa[ia] * ww[iw]);
      for (std::size_t ib = 0; ib < grid.nb; ++ib) {
        const Theta t{xa[ia], xw[iw], xb[ib]};
        double psi = 0.5 * state.lambda * t.norm2();
        for (std::size_t i = 0; i < M; ++i)
          psi += state.residuals.r[i] * am * softplus_trunc(wm * ds.x[i] + t.b, state.spec);
        const double e = std::exp(-state.beta * psi + lw2 + std::log(wb[ib]) - lmax);
        if (e < 1e-18) continue;  // negligible at double precision
        p.s0 += e;
        for (std::size_t q = 0; q < P; ++q) {
          const ScalarAct act = softplus_trunc_all(wm * xs[q] + t.b, state.spec);
          p.sv[q] += e * am * act.value;
          p.ss[q] += e * am * act.d1 * wm;
          p.sc[q] += e * am * act.d2 * wm * wm;
        }
      }
    }
  });
  long double s0 = 0;
  std::vector<long double> sv(P, 0.0L), ss(P, 0.0L), sc(P, 0.0L);
  for (const Partial& p : parts) {
    s0 += p.s0;
    for (std::size_t q = 0; q < P; ++q) {
      sv[q] += p.sv[q];
      ss[q] += p.ss[q];
      sc[q] += p.sc[q];
    }
  }
  GibbsCurve curve;
  curve.value.resize(P);
  curve.slope.resize(P);
  curve.curvature.resize(P);
  for (std::size_t q = 0; q < P; ++q) {
    curve.value[q] = static_cast<double>(sv[q] / s0);
    curve.slope[q] = static_cast<double>(ss[q] / s0);
    curve.curvature[q] = static_cast<double>(sc[q] / s0);
  }
  return curve;
}

double curvature_delta_estimate(const GibbsState& state, const Dataset& ds, double x,
                                const QuadratureOptions& opts) {
  require_gibbs_regime(state.spec, state.lambda, state.beta);
  const ActivationSpec spec_m = std::isinf(state.spec.tau)
                                    ? state.spec
                                    : ActivationSpec::relu_truncated(state.spec.m);
  GibbsState st_m = state;
  st_m.spec = spec_m;
  // normalization of the hard-truncated density; the kinked integrand limits
  // the achievable tolerance, and the estimate is only used at the 10% level
  QuadratureOptions zopts = opts;
  zopts.tol_rel = std::max(opts.tol_rel, 1e-5);
  const GibbsExpectations zs = gibbs_expectations_quadrature(st_m, ds, zopts);
  const Box3 box = scan_box(st_m.residuals, ds, spec_m, st_m.lambda, st_m.beta, opts);

  const std::size_t n = 384;
  std::vector<double> xa, wa, xw, ww;
  gauss_legendre(box.a.lo, box.a.hi, n, xa, wa);
  gauss_legendre(box.w.lo, box.w.hi, n, xw, ww);
  long double acc = 0;
  for (std::size_t ia = 0; ia < n; ++ia) {
    const double a = xa[ia];
    const double am = truncate_param(a, spec_m);
    for (std::size_t iw = 0; iw < n; ++iw) {
      const double w = xw[iw];
      const double wm = truncate_param(w, spec_m);
      const Theta th{a, w, -wm * x};
      const double psi = potential(th, st_m.residuals, ds, spec_m, st_m.lambda);
      acc += static_cast<long double>(wa[ia] * ww[iw] * am * wm * wm *
                                      std::exp(-st_m.beta * psi - zs.log_z));
    }
  }
  return static_cast<double>(acc);
}

}  // namespace mfpl
