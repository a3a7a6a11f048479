#pragma once

// Shared oracles for the unit tests: finite differences and dense assembly
// of tangent operators.

#include "manifold_alm/stiefel.hpp"

#include <functional>

namespace malm::testing {

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

inline double rel_err(const Matrix& a, const Matrix& b) {
  return (a - b).norm() / std::max(1.0, b.norm());
}

/// Central difference of a scalar function along a matrix direction.
inline double central_difference(const std::function<double(const Matrix&)>& f, const Matrix& x,
                                 const Matrix& dir, double h) {
  return (f(x + h * dir) - f(x - h * dir)) / (2.0 * h);
}

/// Matrix of a tangent operator in the orthonormal coordinates of `basis`.
inline Matrix dense_tangent_operator(const TangentBasis& basis,
                                     const std::function<TangentVector(const TangentVector&)>& op) {
  const Eigen::Index d = basis.dim();
  Matrix m(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    m.col(j) = basis.to_coords(op(basis.from_coords(Vector::Unit(d, j))));
  }
  return m;
}

inline TangentVector random_tangent(const StiefelPoint& q, Seed seed) {
  return project_tangent(q, gaussian_matrix(seed, q.n(), q.r()));
}

}  // namespace malm::testing
