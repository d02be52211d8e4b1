#ifndef MFPL_QUADRATURE_HPP
#define MFPL_QUADRATURE_HPP

#include <cstddef>
#include <vector>

namespace mfpl {

// Gauss-Legendre nodes and weights on [lo, hi], Newton iteration on the
// Legendre recurrence.
void gauss_legendre(double lo, double hi, std::size_t n, std::vector<double>& nodes,
                    std::vector<double>& weights);

}  // namespace mfpl

#endif
