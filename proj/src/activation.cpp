#include "mfpl/activation.hpp"

#include <cmath>
#include <limits>

#include "json.hpp"

namespace mfpl {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// numerically stable softplus and sigmoid
double softplus(double z) {
  if (z > 0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}
double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// saturation profile for the parameter truncation: psi(u) = u (1+u^5)^{-1/5};
// psi' (0)=1 with second..fourth derivatives vanishing at 0, psi <= min(u, 1).
double psi(double u) {
  if (u > 1e12) return 1.0;
  const double u5 = u * u * u * u * u;
  return u * std::pow(1.0 + u5, -0.2);
}
double psi_d1(double u) {
  if (u > 1e12) return 0.0;
  const double u5 = u * u * u * u * u;
  return std::pow(1.0 + u5, -1.2);
}

}  // namespace

TailBlend TailBlend::match(double d0, double d2, double d3, double d4) {
  TailBlend t;
  const double q = t.q;
  t.p1 = q - d0;
  t.p2 = (-q * q + 2 * q * t.p1 - d2) / 2.0;
  t.p3 = (q * q * q - 3 * q * q * t.p1 + 6 * q * t.p2 - d3) / 6.0;
  t.p4 = (d4 - q * q * q * q + 4 * q * q * q * t.p1 - 12 * q * q * t.p2 + 24 * q * t.p3) / 24.0;
  return t;
}

double TailBlend::value(double s) const {
  if (s > 200.0) return 1.0;
  const double P = 1 + s * (p1 + s * (p2 + s * (p3 + s * p4)));
  return 1.0 - P * std::exp(-q * s);
}
double TailBlend::deriv1(double s) const {
  if (s > 200.0) return 0.0;
  const double P = 1 + s * (p1 + s * (p2 + s * (p3 + s * p4)));
  const double dP = p1 + s * (2 * p2 + s * (3 * p3 + s * 4 * p4));
  return (q * P - dP) * std::exp(-q * s);
}
double TailBlend::deriv2(double s) const {
  if (s > 200.0) return 0.0;
  const double P = 1 + s * (p1 + s * (p2 + s * (p3 + s * p4)));
  const double dP = p1 + s * (2 * p2 + s * (3 * p3 + s * 4 * p4));
  const double ddP = 2 * p2 + s * (6 * p3 + s * 12 * p4);
  return (-q * q * P + 2 * q * dP - ddP) * std::exp(-q * s);
}

ActivationSpec ActivationSpec::smooth_truncated(double tau, double m) {
  if (!(tau >= 1.0)) throw std::invalid_argument("activation: tau must be >= 1");
  if (!(m > 1.0)) throw std::invalid_argument("activation: m must be > 1");
  if (std::isinf(tau)) return relu_truncated(m);
  ActivationSpec s;
  s.tau = tau;
  s.m = m;
  s.mode = ActivationMode::SmoothTruncated;
  s.param_edge = m - 1.0 / tau;
  // (x_m)_tau = m^2  =>  x_m = m^2 + log1p(-exp(-tau m^2)) / tau
  const double tm2 = tau * m * m;
  s.x_m = m * m + (tm2 > 700 ? 0.0 : std::log1p(-std::exp(-tm2)) / tau);
  // derivatives of (x)_tau at x_m, scaled to the tail variable s=(x-x_m)/m^2
  const double z = tau * s.x_m;
  const double sg = sigmoid(z);
  const double sg1 = sg * (1 - sg);
  const double sg2 = sg1 * (1 - 2 * sg);
  const double sg3 = sg2 * (1 - 2 * sg) - 2 * sg1 * sg1;
  const double m2 = m * m;
  s.tail = TailBlend::match(sg, m2 * tau * sg1, m2 * m2 * tau * tau * sg2,
                            m2 * m2 * m2 * tau * tau * tau * sg3);
  return s;
}

ActivationSpec ActivationSpec::relu_truncated(double m) {
  if (!(m > 0.0)) throw std::invalid_argument("activation: m must be > 0");
  ActivationSpec s;
  s.tau = kInf;
  s.m = m;
  s.mode = ActivationMode::ReluTruncated;
  s.param_edge = m;  // hard clamp
  s.x_m = m * m;
  s.tail = TailBlend::match(1.0, 0.0, 0.0, 0.0);
  return s;
}

ActivationSpec ActivationSpec::relu_exact() {
  ActivationSpec s;
  s.tau = kInf;
  s.m = kInf;
  s.mode = ActivationMode::ReluExact;
  return s;
}

std::string ActivationSpec::to_json() const {
  nlohmann::json j;
  j["tau"] = std::isinf(tau) ? nlohmann::json("inf") : nlohmann::json(tau);
  j["m"] = std::isinf(m) ? nlohmann::json("inf") : nlohmann::json(m);
  return j.dump();
}

ActivationSpec ActivationSpec::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  const auto num = [](const nlohmann::json& v) -> double {
    if (v.is_string()) {
      if (v.get<std::string>() == "inf") return kInf;
      throw std::invalid_argument("activation: bad json field");
    }
    return v.get<double>();
  };
  const double tau = num(j.at("tau"));
  const double m = num(j.at("m"));
  if (std::isinf(m)) {
    if (!std::isinf(tau)) throw std::invalid_argument("activation: tau < inf requires m < inf");
    return relu_exact();
  }
  if (std::isinf(tau)) return relu_truncated(m);
  return smooth_truncated(tau, m);
}

double truncate_param(double v, const ActivationSpec& spec) {
  if (!spec.truncated()) return v;
  const double av = std::abs(v);
  if (spec.mode == ActivationMode::ReluTruncated)
    return av > spec.m ? std::copysign(spec.m, v) : v;
  if (av <= spec.param_edge) return v;
  const double u = spec.tau * (av - spec.param_edge);
  return std::copysign(spec.param_edge + psi(u) / spec.tau, v);
}

double truncate_param_d1(double v, const ActivationSpec& spec) {
  if (!spec.truncated()) return 1.0;
  const double av = std::abs(v);
  if (spec.mode == ActivationMode::ReluTruncated) return av < spec.m ? 1.0 : 0.0;
  if (av <= spec.param_edge) return 1.0;
  return psi_d1(spec.tau * (av - spec.param_edge));
}

ScalarAct softplus_trunc_all(double u, const ActivationSpec& spec) {
  ScalarAct r;
  switch (spec.mode) {
    case ActivationMode::ReluExact:
      r.value = u > 0 ? u : 0.0;
      r.d1 = u > 0 ? 1.0 : 0.0;
      r.d2 = 0.0;
      return r;
    case ActivationMode::ReluTruncated:
      if (u <= spec.x_m) {
        r.value = u > 0 ? u : 0.0;
        r.d1 = u > 0 ? 1.0 : 0.0;
        r.d2 = 0.0;
      } else {
        const double m2 = spec.m * spec.m;
        const double s = (u - spec.x_m) / m2;
        r.value = m2 * (1.0 + spec.tail.value(s));
        r.d1 = spec.tail.deriv1(s);
        r.d2 = spec.tail.deriv2(s) / m2;
      }
      return r;
    case ActivationMode::SmoothTruncated:
      if (u <= spec.x_m) {
        const double z = spec.tau * u;
        r.value = softplus(z) / spec.tau;
        const double sg = sigmoid(z);
        r.d1 = sg;
        r.d2 = spec.tau * sg * (1 - sg);
      } else {
        const double m2 = spec.m * spec.m;
        const double s = (u - spec.x_m) / m2;
        r.value = m2 * (1.0 + spec.tail.value(s));
        r.d1 = spec.tail.deriv1(s);
        r.d2 = spec.tail.deriv2(s) / m2;
      }
      return r;
  }
  return r;
}

double softplus_trunc(double u, const ActivationSpec& spec) {
  return softplus_trunc_all(u, spec).value;
}
double softplus_trunc_d1(double u, const ActivationSpec& spec) {
  return softplus_trunc_all(u, spec).d1;
}
double softplus_trunc_d2(double u, const ActivationSpec& spec) {
  return softplus_trunc_all(u, spec).d2;
}

double neuron_output(double x, const Theta& theta, const ActivationSpec& spec) {
  const double am = truncate_param(theta.a, spec);
  const double wm = truncate_param(theta.w, spec);
  return am * softplus_trunc(wm * x + theta.b, spec);
}

Theta neuron_grad_theta(double x, const Theta& theta, const ActivationSpec& spec) {
  const double am = truncate_param(theta.a, spec);
  const double wm = truncate_param(theta.w, spec);
  const ScalarAct act = softplus_trunc_all(wm * x + theta.b, spec);
  Theta g;
  g.a = truncate_param_d1(theta.a, spec) * act.value;
  g.w = am * act.d1 * x * truncate_param_d1(theta.w, spec);
  g.b = am * act.d1;
  return g;
}

double neuron_slope_x(double x, const Theta& theta, const ActivationSpec& spec) {
  const double am = truncate_param(theta.a, spec);
  const double wm = truncate_param(theta.w, spec);
  return am * softplus_trunc_d1(wm * x + theta.b, spec) * wm;
}

double predictor_curvature(double x, const Theta& theta, const ActivationSpec& spec) {
  if (!spec.smooth())
    throw CurvatureUndefined("predictor_curvature: second x-derivative needs SmoothTruncated mode");
  const double am = truncate_param(theta.a, spec);
  const double wm = truncate_param(theta.w, spec);
  return am * softplus_trunc_d2(wm * x + theta.b, spec) * wm * wm;
}

double activation_slope_bound(const ActivationSpec& spec) {
  // d/du (u)_tau^m is a sigmoid below x_m and the tail derivative above;
  // both are bounded by 1 (tail: h' = T4(qs) e^{-qs} < 1).
  (void)spec;
  return 1.0;
}

}  // namespace mfpl
