#include "mfpl/quadrature.hpp"

#include <cmath>

namespace mfpl {

void gauss_legendre(double lo, double hi, std::size_t n, std::vector<double>& nodes,
                    std::vector<double>& weights) {
  nodes.assign(n, 0.0);
  weights.assign(n, 0.0);
  const std::size_t mhalf = (n + 1) / 2;
  const double xm = 0.5 * (hi + lo);
  const double xl = 0.5 * (hi - lo);
  for (std::size_t i = 0; i < mhalf; ++i) {
    double z = std::cos(M_PI * (static_cast<double>(i) + 0.75) /
                        (static_cast<double>(n) + 0.5));
    double pp = 0;
    for (int iter = 0; iter < 100; ++iter) {
      double p1 = 1.0, p2 = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        const double jj = static_cast<double>(j + 1);
        p1 = ((2.0 * jj - 1.0) * z * p2 - (jj - 1.0) * p3) / jj;
      }
      pp = static_cast<double>(n) * (z * p1 - p2) / (z * z - 1.0);
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) < 1e-15) break;
    }
    nodes[i] = xm - xl * z;
    nodes[n - 1 - i] = xm + xl * z;
    weights[i] = 2.0 * xl / ((1.0 - z * z) * pp * pp);
    weights[n - 1 - i] = weights[i];
  }
}

}  // namespace mfpl
