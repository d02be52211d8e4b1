#include "mfpl/experiment.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "mfpl/svg.hpp"

namespace mfpl {

namespace {

nlohmann::json spec_json(const ActivationSpec& s) { return nlohmann::json::parse(s.to_json()); }

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out << text;
}

}  // namespace

std::string ExperimentConfig::to_json() const {
  nlohmann::json j;
  j["name"] = name;
  nlohmann::json pts = nlohmann::json::array();
  for (std::size_t i = 0; i < dataset.size(); ++i)
    pts.push_back({dataset.x[i], dataset.y[i]});
  j["dataset"] = {{"inline", std::move(pts)}};
  j["activation"] = spec_json(activation);
  j["train"] = {{"n", n_particles},       {"lambda", train.lambda},
                {"beta_inv", train.beta_inv}, {"eps", train.eps},
                {"steps", train.steps},   {"seed", train.seed},
                {"init_scale", train.init.scale},
                {"init_a_scale", train.init.a_scale},
                {"init_w_scale", train.init.w_scale},
                {"init_b_scale", train.init.b_scale}};
  j["gibbs"] = {{"enabled", gibbs.enabled},
                {"beta", gibbs.beta},
                {"eta", gibbs.eta},
                {"tol", gibbs.tol},
                {"max_iters", gibbs.max_iters},
                {"backend", gibbs.backend == GibbsBackend::Mala ? "mala" : "quadrature"}};
  j["extract"] = {{"grid_n", extract.grid_n},
                  {"slope_tol_rel", extract.slope_tol_rel},
                  {"merge_radius", extract.merge_radius},
                  {"padded_domain", extract_padded_domain}};
  if (L) j["L"] = *L;
  if (cluster_lambda) j["cluster_lambda"] = *cluster_lambda;
  return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  ExperimentConfig cfg;
  try {
    cfg.name = j.value("name", std::string("experiment"));
    const auto& dsj = j.at("dataset");
    if (dsj.contains("inline")) {
      std::vector<std::pair<double, double>> pts;
      for (const auto& p : dsj["inline"]) pts.emplace_back(p.at(0), p.at(1));
      cfg.dataset = Dataset::from_points(std::move(pts));
    } else if (dsj.contains("file")) {
      const auto fmt = dsj.value("format", std::string("csv"));
      cfg.dataset = load_dataset(dsj["file"].get<std::string>(),
                                 fmt == "json" ? DataFormat::Json : DataFormat::Csv);
    } else {
      throw ConfigError("config: dataset needs inline points or a file");
    }
    if (j.contains("activation"))
      cfg.activation = ActivationSpec::from_json(j["activation"].dump());
    if (j.contains("train")) {
      const auto& t = j["train"];
      cfg.n_particles = t.value("n", std::size_t{500});
      cfg.train.lambda = t.value("lambda", 0.0);
      cfg.train.beta_inv = t.value("beta_inv", 0.0);
      cfg.train.eps = t.value("eps", 0.01);
      cfg.train.steps = t.value("steps", std::uint64_t{100000});
      cfg.train.seed = t.value("seed", std::uint64_t{1});
      cfg.train.init.scale = t.value("init_scale", 1.0);
      cfg.train.init.a_scale = t.value("init_a_scale", 1.0);
      cfg.train.init.w_scale = t.value("init_w_scale", 1.0);
      cfg.train.init.b_scale = t.value("init_b_scale", 1.0);
    }
    if (j.contains("gibbs")) {
      const auto& g = j["gibbs"];
      cfg.gibbs.enabled = g.value("enabled", false);
      cfg.gibbs.beta = g.value("beta", 50.0);
      cfg.gibbs.eta = g.value("eta", 0.5);
      cfg.gibbs.tol = g.value("tol", 1e-6);
      cfg.gibbs.max_iters = g.value("max_iters", std::size_t{500});
      cfg.gibbs.backend = g.value("backend", std::string("quadrature")) == "mala"
                              ? GibbsBackend::Mala
                              : GibbsBackend::TensorQuadrature;
    }
    if (j.contains("extract")) {
      const auto& e = j["extract"];
      cfg.extract.grid_n = e.value("grid_n", std::size_t{4001});
      cfg.extract.slope_tol_rel = e.value("slope_tol_rel", 0.02);
      cfg.extract.merge_radius = e.value("merge_radius", std::size_t{3});
      cfg.extract_padded_domain = e.value("padded_domain", false);
    }
    if (j.contains("L")) cfg.L = j["L"].get<double>();
    if (j.contains("cluster_lambda")) cfg.cluster_lambda = j["cluster_lambda"].get<double>();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json(text);
}

std::string ExperimentReport::to_json() const {
  nlohmann::json j;
  j["name"] = name;
  j["final_risk"] = final_risk;
  j["residuals"] = residuals;
  j["knot_count"] = knot_count;
  j["knots"] = knots;
  j["admissible"] = admissible;
  j["cluster_measure"] = cluster_measure;
  j["second_moment"] = second_moment;
  if (gibbs_risk) j["gibbs_risk"] = *gibbs_risk;
  j["manifest"] = manifest;
  return j.dump(2);
}

ExperimentReport run_experiment(const ExperimentConfig& cfg, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const auto path = [&](const std::string& f) { return (fs::path(out_dir) / f).string(); };

  ExperimentReport rep;
  rep.name = cfg.name;

  const double L = cfg.L ? *cfg.L : default_padding(cfg.dataset);
  const PredictionIntervals intervals = make_intervals(cfg.dataset, L);

  const TrainResult tr = train(cfg.dataset, cfg.train, cfg.n_particles, cfg.activation);
  tr.trace.to_csv(path("trace.csv"));
  rep.manifest.push_back("trace.csv");
  write_text(path("checkpoint.json"), tr.ensemble.to_json());
  rep.manifest.push_back("checkpoint.json");

  rep.final_risk = empirical_risk(tr.ensemble, cfg.dataset);
  const ResidualVector rv = residuals(tr.ensemble, cfg.dataset);
  rep.residuals = rv.r;
  rep.second_moment = tr.ensemble.second_moment();

  const double cl_lambda =
      cfg.cluster_lambda ? *cfg.cluster_lambda : cfg.train.lambda;
  std::optional<ClusterReport> cluster;
  if (cl_lambda > 0) {
    cluster = cluster_report(rv, cfg.dataset, intervals, cl_lambda);
    rep.cluster_measure = cluster->total_measure;
    write_text(path("cluster.json"), cluster->to_json());
    cluster->to_csv(path("cluster.csv"));
    rep.manifest.push_back("cluster.json");
    rep.manifest.push_back("cluster.csv");
  }

  const double klo = cfg.extract_padded_domain ? -L : cfg.dataset.x.front();
  const double khi = cfg.extract_padded_domain ? L : cfg.dataset.x.back();
  const ParticleEnsemble& ens = tr.ensemble;
  const RealFn predict_fn = [&](double x) { return predict(ens, x); };
  const RealFn slope_fn = [&](double x) { return predict_slope(ens, x); };
  const PiecewiseLinear pwl = extract_pwl(predict_fn, slope_fn, klo, khi, cfg.extract);
  rep.knots = pwl.knots;
  rep.knot_count = pwl.knots.size();
  write_text(path("pwl.json"), pwl.to_json());
  rep.manifest.push_back("pwl.json");

  const double grid_step = (khi - klo) / static_cast<double>(cfg.extract.grid_n - 1);
  const AdmissibilityVerdict verdict = check_admissible(pwl, intervals, 2.0 * grid_step);
  rep.admissible = verdict.admissible;
  write_text(path("verdict.json"), verdict.to_json());
  rep.manifest.push_back("verdict.json");

  // predictor curve
  {
    std::ofstream out(path("predictor.csv"), std::ios::binary);
    out.precision(17);
    const bool smooth = cfg.activation.smooth();
    out << (smooth ? "x,y,slope,curvature\n" : "x,y,slope\n");
    const std::size_t n = 801;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = -L + 2 * L * static_cast<double>(i) / static_cast<double>(n - 1);
      if (smooth) {
        const PredictDerivs d = predict_derivatives(ens, x);
        out << x << ',' << d.value << ',' << d.slope << ',' << d.curvature << '\n';
      } else {
        out << x << ',' << predict(ens, x) << ',' << predict_slope(ens, x) << '\n';
      }
    }
    rep.manifest.push_back("predictor.csv");
  }

  if (cfg.gibbs.enabled) {
    FixedPointOptions fp;
    fp.eta = cfg.gibbs.eta;
    fp.tol = cfg.gibbs.tol;
    fp.max_iters = cfg.gibbs.max_iters;
    fp.backend = cfg.gibbs.backend;
    const FixedPointResult fpr =
        solve_fixed_point(cfg.dataset, cfg.activation, cfg.train.lambda, cfg.gibbs.beta, fp);
    rep.gibbs_risk = fpr.state.residuals.risk();
    write_text(path("gibbs_state.json"), fpr.state.to_json());
    fpr.trace_to_csv(path("gibbs_trace.csv"));
    rep.manifest.push_back("gibbs_state.json");
    rep.manifest.push_back("gibbs_trace.csv");
  }

  // plot: predictor with data points, knots and cluster bands
  {
    SvgPlot plot;
    plot.set_title(cfg.name + " (stand-in data, qualitative reproduction)");
    std::vector<double> xs, ys;
    const std::size_t n = 801;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = klo + (khi - klo) * static_cast<double>(i) / static_cast<double>(n - 1);
      xs.push_back(x);
      ys.push_back(predict(ens, x));
    }
    if (cluster)
      for (const auto& e : cluster->entries)
        for (const Interval& v : e.omega_bar) plot.add_band(v.lo, v.hi, "#d62728", 0.18);
    plot.add_curve(xs, ys, "#1f77b4", 2.0, "predictor");
    plot.add_points(cfg.dataset.x, cfg.dataset.y, "#d62728");
    for (double k : pwl.knots) plot.add_vline(k, "#2ca02c");
    plot.write(path("plot.svg"));
    rep.manifest.push_back("plot.svg");
  }

  write_text(path("config.json"), cfg.to_json());
  rep.manifest.push_back("config.json");
  write_text(path("report.json"), rep.to_json());
  return rep;
}

namespace {

CurvatureProfile profile_from_curve(const std::vector<double>& xs,
                                    const std::vector<double>& curv,
                                    const PredictionIntervals& intervals,
                                    const ClusterReport& cluster, double delta) {
  CurvatureProfile prof;
  prof.x = xs;
  prof.curvature = curv;
  for (const auto& e : cluster.entries)
    for (const Interval& v : e.omega_bar)
      prof.dilated_cluster.push_back({v.lo - delta, v.hi + delta});
  prof.dilated_cluster = merge_interval_sets(prof.dilated_cluster, {});
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i] < intervals.lo(0) || xs[i] > intervals.hi(intervals.count() - 1)) continue;
    const double c = std::abs(curv[i]);
    if (interval_set_contains(prof.dilated_cluster, xs[i]))
      prof.max_inside = std::max(prof.max_inside, c);
    else
      prof.max_outside = std::max(prof.max_outside, c);
  }
  return prof;
}

std::vector<double> uniform_grid(double lo, double hi, std::size_t n) {
  std::vector<double> xs(n);
  for (std::size_t i = 0; i < n; ++i)
    xs[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return xs;
}

}  // namespace

CurvatureProfile curvature_profile(const ParticleEnsemble& ens, const Dataset& ds,
                                   const PredictionIntervals& intervals,
                                   const ClusterReport& cluster, std::size_t grid_n,
                                   double delta) {
  (void)ds;
  const auto xs = uniform_grid(intervals.lo(0), intervals.hi(intervals.count() - 1), grid_n);
  std::vector<double> curv(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i)
    curv[i] = predict_derivatives(ens, xs[i]).curvature;
  return profile_from_curve(xs, curv, intervals, cluster, delta);
}

CurvatureProfile curvature_profile(const GibbsState& state, const Dataset& ds,
                                   const PredictionIntervals& intervals,
                                   const ClusterReport& cluster, std::size_t grid_n,
                                   double delta) {
  if (!state.spec.smooth())
    throw CurvatureUndefined("curvature_profile: gibbs curvature needs SmoothTruncated mode");
  const auto xs = uniform_grid(intervals.lo(0), intervals.hi(intervals.count() - 1), grid_n);
  const GibbsCurve curve = gibbs_predictor_curve(state, ds, xs);
  return profile_from_curve(xs, curve.curvature, intervals, cluster, delta);
}

}  // namespace mfpl
