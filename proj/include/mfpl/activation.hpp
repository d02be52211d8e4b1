#ifndef MFPL_ACTIVATION_HPP
#define MFPL_ACTIVATION_HPP

#include <stdexcept>
#include <string>

namespace mfpl {

// Activation family: the ReLU a(wx+b)_+ together with its smooth/truncated
// approximations built from the tau-softplus (x)_tau = log(1+e^{tau x})/tau
// and the m-truncations of both the outer parameters and the scalar
// activation. tau = m = inf recovers the exact ReLU.
enum class ActivationMode { SmoothTruncated, ReluTruncated, ReluExact };

struct CurvatureUndefined : std::runtime_error {
  explicit CurvatureUndefined(const std::string& what) : std::runtime_error(what) {}
};

// Saturating tail used beyond the truncation point. Parameterized so that the
// blended function matches value and first four derivatives of the base
// activation at the junction and approaches the saturation level with
// |h''| <= 1 (giving |phi''| <= 1/m^2 after the 1/m^2 scaling).
struct TailBlend {
  double q = 5.0;
  double p1 = 0, p2 = 0, p3 = 0, p4 = 0;
  // match h(0)=0, h'(0)=d0, h''(0)=d2, h'''(0)=d3, h''''(0)=d4; h(inf)=1
  static TailBlend match(double d0, double d2, double d3, double d4);
  double value(double s) const;   // h(s)
  double deriv1(double s) const;  // h'(s)
  double deriv2(double s) const;  // h''(s)
};

struct ActivationSpec {
  double tau = 0;  // smoothing scale; +inf in ReLU modes
  double m = 0;    // truncation scale; +inf in exact mode
  ActivationMode mode = ActivationMode::ReluExact;

  // cached quantities (valid in truncated modes)
  double x_m = 0;          // truncation point of the scalar activation
  double param_edge = 0;   // m - 1/tau, where the parameter blend starts
  TailBlend tail;          // tail profile of (.)_tau^m / (.)_+^m

  static ActivationSpec smooth_truncated(double tau, double m);
  static ActivationSpec relu_truncated(double m);
  static ActivationSpec relu_exact();

  bool truncated() const { return mode != ActivationMode::ReluExact; }
  bool smooth() const { return mode == ActivationMode::SmoothTruncated; }

  std::string to_json() const;
  static ActivationSpec from_json(const std::string& text);
};

struct Theta {
  double a = 0, w = 0, b = 0;
  double norm2() const { return a * a + w * w + b * b; }
};

// v^{tau,m}: odd C^4 map, identity on |v| < m - 1/tau, |result| <= min(|v|, m).
double truncate_param(double v, const ActivationSpec& spec);
// d/dv of the above (subgradient 1{|v|<m} in ReluTruncated mode).
double truncate_param_d1(double v, const ActivationSpec& spec);

// (u)_tau^m together with its first and second u-derivatives.
struct ScalarAct {
  double value = 0, d1 = 0, d2 = 0;
};
ScalarAct softplus_trunc_all(double u, const ActivationSpec& spec);
double softplus_trunc(double u, const ActivationSpec& spec);
double softplus_trunc_d1(double u, const ActivationSpec& spec);
double softplus_trunc_d2(double u, const ActivationSpec& spec);

// sigma*(x, theta) under the active mode.
double neuron_output(double x, const Theta& theta, const ActivationSpec& spec);

// exact chain-rule gradient (d/da, d/dw, d/db) of sigma*(x, theta)
Theta neuron_grad_theta(double x, const Theta& theta, const ActivationSpec& spec);

// value, d/dx and d^2/dx^2 of x -> sigma*(x, theta); curvature only in smooth mode
double neuron_slope_x(double x, const Theta& theta, const ActivationSpec& spec);
double predictor_curvature(double x, const Theta& theta, const ActivationSpec& spec);

// sup over u of d/du (u)_tau^m; used for Lipschitz bookkeeping
double activation_slope_bound(const ActivationSpec& spec);

}  // namespace mfpl

#endif
