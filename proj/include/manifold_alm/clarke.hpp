#pragma once

// Elements of the Clarke generalized covariant derivative of grad L_k on
// St(n, r). A random tangent direction fixes, for every entry, the side from
// which the iterate is approached; the one-sided derivatives along that side
// give the frozen masks that define a self-adjoint operator on T_Q St(n, r).

#include "manifold_alm/stiefel.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace malm {

enum class Side : std::int8_t { FromAbove, FromBelow };

/// Per-entry approach side, stored column-major like the matrix it describes.
class SideMask {
 public:
  SideMask(Eigen::Index rows, Eigen::Index cols) : rows_(rows), cols_(cols), sides_(rows * cols) {}

  [[nodiscard]] Side operator()(Eigen::Index i, Eigen::Index j) const { return sides_[j * rows_ + i]; }
  Side& operator()(Eigen::Index i, Eigen::Index j) { return sides_[j * rows_ + i]; }
  [[nodiscard]] Eigen::Index rows() const noexcept { return rows_; }
  [[nodiscard]] Eigen::Index cols() const noexcept { return cols_; }

 private:
  Eigen::Index rows_;
  Eigen::Index cols_;
  std::vector<Side> sides_;
};

struct DirectionSample {
  TangentVector direction;
  SideMask side_mask;
  /// Number of Gaussian draws used (1 = accepted first time).
  int attempts = 1;
};

/// Entries with |V_ij| below this are treated as zero, and |Q_ij| within it
/// of 1 count as ±1.
inline constexpr double kDirectionZeroTol = 1e-9;
/// | |X_ij| - threshold | below this puts an entry on the kink of prox_l1.
inline constexpr double kKinkTol = 1e-12;

/// V = P_Q Z for Gaussian Z, redrawn until no entry has V_ij = 0 with
/// Q_ij not in {±1}. Sides: FromAbove if V_ij > 0 or (V_ij = 0, Q_ij = -1);
/// FromBelow if V_ij < 0 or (V_ij = 0, Q_ij = 1). Throws std::runtime_error
/// after max_attempts rejected draws.
[[nodiscard]] DirectionSample sample_admissible_direction(const StiefelPoint& q, Seed seed,
                                                          int max_attempts = 20);

/// 0/1 matrix E with E_ij = 1 where prox_l1(., threshold) has zero
/// derivative at X_ij. On the kink the side from `sample` picks the one-sided
/// derivative (moving outward gives E = 0); without a sample E = 1.
[[nodiscard]] Matrix l1_envelope_mask(const Matrix& x, double threshold,
                                      const DirectionSample* sample = nullptr);

/// Activity flags a_i for max(s_i, 0): 1 if s_i > 0, 0 if s_i < 0. At a zero
/// slack the sign of the directional derivative picks the side, defaulting
/// to 1 when it is zero or unknown.
[[nodiscard]] Vector inequality_activity(const Vector& slack, const Vector* directional = nullptr);

/// Euclidean generalized Hessian-vector product with all masks frozen.
using EuclideanHessVec = std::function<Matrix(const Matrix&)>;

/// Self-adjoint operator on T_Q St(n, r):
///   W -> P_Q(EucHess[W] - W sym(Qᵀ egrad)).
class ClarkeElement {
 public:
  /// `l1_mask` and `activity` record the frozen one-sided data that
  /// `hessvec` was built from; they are kept for inspection only.
  ClarkeElement(StiefelPoint base, const Matrix& euclidean_gradient, EuclideanHessVec hessvec,
                double sigma, Matrix l1_mask = {}, Vector activity = {});

  [[nodiscard]] const StiefelPoint& base() const noexcept { return base_; }
  [[nodiscard]] double sigma() const noexcept { return sigma_; }
  [[nodiscard]] const Matrix& l1_mask() const noexcept { return l1_mask_; }
  [[nodiscard]] const Vector& activity() const noexcept { return activity_; }
  [[nodiscard]] TangentVector apply(const TangentVector& w) const;

 private:
  StiefelPoint base_;
  Matrix curvature_;  // sym(Qᵀ egrad), r x r
  EuclideanHessVec hessvec_;
  double sigma_;
  Matrix l1_mask_;
  Vector activity_;
};

/// H[W]; throws std::invalid_argument on base mismatch.
[[nodiscard]] TangentVector apply_clarke_element(const ClarkeElement& h, const TangentVector& w);

/// Smallest eigenvalue of H on T_Q St(n, r), via Lanczos in orthonormal
/// tangent coordinates.
[[nodiscard]] double min_eigenvalue_probe(const ClarkeElement& h, double tol = 1e-8);

}  // namespace malm
