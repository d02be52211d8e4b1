#include "mfpl/particle.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"

namespace mfpl {

double ResidualVector::risk() const {
  double s = 0;
  for (double v : r) s += v * v;
  return static_cast<double>(r.size()) * s;
}

double ParticleEnsemble::second_moment() const {
  double s = 0;
  for (const Theta& t : thetas) s += t.norm2();
  return thetas.empty() ? 0.0 : s / static_cast<double>(thetas.size());
}

bool ParticleEnsemble::finite() const {
  for (const Theta& t : thetas)
    if (!std::isfinite(t.a) || !std::isfinite(t.w) || !std::isfinite(t.b)) return false;
  return true;
}

std::string ParticleEnsemble::to_json() const {
  nlohmann::json j;
  j["spec"] = nlohmann::json::parse(spec.to_json());
  auto arr = nlohmann::json::array();
  for (const Theta& t : thetas) arr.push_back({t.a, t.w, t.b});
  j["thetas"] = std::move(arr);
  return j.dump();
}

ParticleEnsemble ParticleEnsemble::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  ParticleEnsemble ens;
  ens.spec = ActivationSpec::from_json(j.at("spec").dump());
  for (const auto& t : j.at("thetas"))
    ens.thetas.push_back({t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>()});
  return ens;
}

double predict(const ParticleEnsemble& ens, double x) {
  double s = 0;
  for (const Theta& t : ens.thetas) s += neuron_output(x, t, ens.spec);
  return s / static_cast<double>(ens.size());
}

double predict_slope(const ParticleEnsemble& ens, double x) {
  double s = 0;
  for (const Theta& t : ens.thetas) s += neuron_slope_x(x, t, ens.spec);
  return s / static_cast<double>(ens.size());
}

PredictDerivs predict_derivatives(const ParticleEnsemble& ens, double x) {
  if (!ens.spec.smooth())
    throw CurvatureUndefined("predict_derivatives: curvature needs SmoothTruncated mode");
  PredictDerivs d;
  for (const Theta& t : ens.thetas) {
    const double am = truncate_param(t.a, ens.spec);
    const double wm = truncate_param(t.w, ens.spec);
    const ScalarAct act = softplus_trunc_all(wm * x + t.b, ens.spec);
    d.value += am * act.value;
    d.slope += am * act.d1 * wm;
    d.curvature += am * act.d2 * wm * wm;
  }
  const double n = static_cast<double>(ens.size());
  d.value /= n;
  d.slope /= n;
  d.curvature /= n;
  return d;
}

double empirical_risk(const ParticleEnsemble& ens, const Dataset& ds) {
  double s = 0;
  for (std::size_t j = 0; j < ds.size(); ++j) {
    const double d = predict(ens, ds.x[j]) - ds.y[j];
    s += d * d;
  }
  return s / static_cast<double>(ds.size());
}

ResidualVector residuals(const ParticleEnsemble& ens, const Dataset& ds) {
  ResidualVector rv;
  rv.r.resize(ds.size());
  const double invM = 1.0 / static_cast<double>(ds.size());
  for (std::size_t j = 0; j < ds.size(); ++j)
    rv.r[j] = -invM * (ds.y[j] - predict(ens, ds.x[j]));
  return rv;
}

Theta InitDistribution::sample(std::mt19937_64& rng) const {
  if (name != "gaussian")
    throw std::invalid_argument("init: unknown distribution " + name);
  std::normal_distribution<double> g(0.0, 1.0);
  Theta t;
  t.a = scale * a_scale * g(rng);
  t.w = scale * w_scale * g(rng);
  t.b = scale * b_scale * g(rng);
  return t;
}

void sgd_step(ParticleEnsemble& ens, double sample_x, double sample_y,
              const TrainConfig& cfg, std::uint64_t k, std::mt19937_64& rng) {
  const double s_k = cfg.step_size(k);
  const double contraction = 1.0 - 2.0 * cfg.lambda * s_k;
  if (!(contraction > 0.0))
    throw StepTooLarge("sgd_step: 1 - 2 lambda s_k = " + std::to_string(contraction));
  const double yhat = predict(ens, sample_x);
  const double drive = 2.0 * s_k * (sample_y - yhat);
  const double noise_scale = cfg.beta_inv > 0 ? std::sqrt(2.0 * s_k * cfg.beta_inv) : 0.0;
  std::normal_distribution<double> g(0.0, 1.0);
  for (Theta& t : ens.thetas) {
    const Theta grad = neuron_grad_theta(sample_x, t, ens.spec);
    t.a = contraction * t.a + drive * grad.a;
    t.w = contraction * t.w + drive * grad.w;
    t.b = contraction * t.b + drive * grad.b;
    if (noise_scale > 0) {
      t.a += noise_scale * g(rng);
      t.w += noise_scale * g(rng);
      t.b += noise_scale * g(rng);
    }
  }
}

void TrainingTrace::to_csv(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write " + path);
  out << "epoch,risk,second_moment\n";
  out.precision(17);
  for (std::size_t i = 0; i < epoch.size(); ++i)
    out << epoch[i] << ',' << risk[i] << ',' << second_moment[i] << '\n';
}

TrainResult train(const Dataset& ds, const TrainConfig& cfg, std::size_t n_particles,
                  const ActivationSpec& spec, const SnapshotHook& hook) {
  TrainResult res;
  res.ensemble.spec = spec;
  std::mt19937_64 rng(cfg.seed);
  res.ensemble.thetas.reserve(n_particles);
  for (std::size_t i = 0; i < n_particles; ++i)
    res.ensemble.thetas.push_back(cfg.init.sample(rng));

  const std::uint64_t M = ds.size();
  // record ~1000 rows regardless of run length, at epoch granularity
  const std::uint64_t record_every =
      std::max<std::uint64_t>(M, (cfg.steps / 1000) / M * M + M);
  std::uniform_int_distribution<std::size_t> pick(0, ds.size() - 1);

  const auto record = [&](std::uint64_t k) {
    if (!res.ensemble.finite())
      throw NonFinite("train: ensemble diverged at step " + std::to_string(k));
    res.trace.epoch.push_back(static_cast<double>(k) / static_cast<double>(M));
    res.trace.risk.push_back(empirical_risk(res.ensemble, ds));
    res.trace.second_moment.push_back(res.ensemble.second_moment());
    if (hook) hook(k, res.ensemble);
  };

  record(0);
  for (std::uint64_t k = 0; k < cfg.steps; ++k) {
    const std::size_t idx = pick(rng);
    sgd_step(res.ensemble, ds.x[idx], ds.y[idx], cfg, k, rng);
    if ((k + 1) % record_every == 0 || k + 1 == cfg.steps) record(k + 1);
  }
  return res;
}

ParticleEnsemble build_two_atom(const Dataset& ds, const ActivationSpec& spec) {
  if (ds.size() != 2 || !(ds.x[0] == -ds.x[1]) || !(ds.y[0] == ds.y[1]) ||
      !(ds.x[1] > 0) || !(ds.y[1] > 0))
    throw std::invalid_argument("build_two_atom: need {(-x,y),(x,y)} with x, y > 0");
  const double c = std::sqrt(2.0 * ds.y[1] / ds.x[1]);
  ParticleEnsemble ens;
  ens.spec = spec;
  ens.thetas = {{c, -c, 0.0}, {c, c, 0.0}};
  return ens;
}

ParticleEnsemble build_sawtooth(const Dataset& ds, double eps, const ActivationSpec& spec) {
  double min_gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < ds.size(); ++i)
    min_gap = std::min(min_gap, ds.x[i + 1] - ds.x[i]);
  if (ds.size() > 1 && !(eps < min_gap / 2.0))
    throw WidthTooLarge("build_sawtooth: eps must be < min gap / 2 = " +
                        std::to_string(min_gap / 2.0));
  if (!(eps > 0)) throw WidthTooLarge("build_sawtooth: eps must be positive");
  const double M = static_cast<double>(ds.size());
  ParticleEnsemble ens;
  ens.spec = spec;
  ens.thetas.reserve(3 * ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double h = 3.0 * M * ds.y[i] / eps;
    ens.thetas.push_back({h, 1.0, eps - ds.x[i]});
    ens.thetas.push_back({-2.0 * h, 1.0, -ds.x[i]});
    ens.thetas.push_back({h, 1.0, -eps - ds.x[i]});
  }
  return ens;
}

ParticleEnsemble build_gaussian_mixture(const std::vector<Theta>& centers, double var,
                                        std::size_t n_per, std::mt19937_64& rng,
                                        const ActivationSpec& spec) {
  if (!(var >= 0)) throw std::invalid_argument("build_gaussian_mixture: var must be >= 0");
  ParticleEnsemble ens;
  ens.spec = spec;
  ens.thetas.reserve(centers.size() * n_per);
  const double sd = std::sqrt(var);
  std::normal_distribution<double> g(0.0, 1.0);
  for (const Theta& c : centers)
    for (std::size_t i = 0; i < n_per; ++i)
      ens.thetas.push_back({c.a + sd * g(rng), c.w + sd * g(rng), c.b + sd * g(rng)});
  return ens;
}

}  // namespace mfpl
