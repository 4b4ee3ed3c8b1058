#pragma once

#include <cstddef>
#include <vector>

namespace kuq {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// n-point Gauss-Legendre rule on [-1,1], nodes ascending, weights summing to 2.
QuadratureRule gauss_legendre(std::size_t n);

/// Gauss-Legendre rule mapped affinely to [lo,hi] with weights normalized to
/// the uniform law, i.e. summing to one.
QuadratureRule gauss_legendre_uniform(std::size_t n, double lo, double hi);

}  // namespace kuq
