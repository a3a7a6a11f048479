#pragma once

// Geometry of the Stiefel manifold St(n, r) = {Q : QᵀQ = I_r} with the
// metric inherited from the Frobenius inner product on R^{n x r}.

#include "manifold_alm/numerics.hpp"

#include <memory>
#include <string_view>

namespace malm {

/// Tolerance on ||QᵀQ - I||_F for a valid point.
inline constexpr double kStiefelTol = 1e-12;
/// Relative tolerance on ||QᵀV + VᵀQ||_F for a valid tangent vector.
inline constexpr double kTangentTol = 1e-10;

/// A point on St(n, r). Immutable; copies share storage.
class StiefelPoint {
 public:
  /// Throws std::invalid_argument unless ||QᵀQ - I||_F <= kStiefelTol.
  explicit StiefelPoint(Matrix q);

  [[nodiscard]] const Matrix& matrix() const noexcept { return *q_; }
  [[nodiscard]] Eigen::Index n() const noexcept { return q_->rows(); }
  [[nodiscard]] Eigen::Index r() const noexcept { return q_->cols(); }

  /// True when both refer to the same stored matrix or hold equal entries.
  [[nodiscard]] bool same_point(const StiefelPoint& other) const;

  /// ||QᵀQ - I||_F measured at construction.
  [[nodiscard]] double orthonormality() const noexcept { return err_; }

 private:
  std::shared_ptr<const Matrix> q_;
  double err_ = 0.0;
};

/// A tangent vector V at a base point Q, i.e. QᵀV + VᵀQ = 0.
class TangentVector {
 public:
  /// Throws std::invalid_argument on shape mismatch or when V is not tangent
  /// within kTangentTol * (1 + ||V||_F).
  TangentVector(StiefelPoint base, Matrix v);

  /// The zero vector of T_Q St(n, r).
  static TangentVector zero(const StiefelPoint& base);

  [[nodiscard]] const StiefelPoint& base() const noexcept { return base_; }
  [[nodiscard]] const Matrix& matrix() const noexcept { return v_; }
  [[nodiscard]] double norm() const { return v_.norm(); }

  TangentVector& operator+=(const TangentVector& other);
  TangentVector& operator-=(const TangentVector& other);
  TangentVector& operator*=(double s);

  friend TangentVector operator+(TangentVector a, const TangentVector& b) { return a += b; }
  friend TangentVector operator-(TangentVector a, const TangentVector& b) { return a -= b; }
  friend TangentVector operator*(double s, TangentVector a) { return a *= s; }
  friend TangentVector operator-(TangentVector a) { return a *= -1.0; }

 private:
  struct Verified {};
  /// For callers that have already measured the tangency error.
  TangentVector(StiefelPoint base, Matrix v, Verified)
      : base_(std::move(base)), v_(std::move(v)) {}
  friend TangentVector project_tangent(const StiefelPoint& q, const Matrix& w);

  StiefelPoint base_;
  Matrix v_;
};

enum class RetractionKind { QR, Polar, Exponential };

[[nodiscard]] std::string_view to_string(RetractionKind kind);
/// Accepts "qr", "polar", "exp"/"exponential". Throws std::invalid_argument.
[[nodiscard]] RetractionKind parse_retraction(std::string_view name);

/// P_Q(W) = W - Q sym(QᵀW).
[[nodiscard]] TangentVector project_tangent(const StiefelPoint& q, const Matrix& w);

/// R_Q(V): qf(Q + V), the polar factor of Q + V, or the embedded-metric
/// geodesic. The result always passes the StiefelPoint check.
[[nodiscard]] StiefelPoint retract(const StiefelPoint& q, const TangentVector& v,
                                   RetractionKind kind);

/// Process-wide tally of retraction outputs, for auditing long runs.
struct RetractionAudit {
  std::uint64_t count = 0;
  double max_orthonormality_error = 0.0;
};
[[nodiscard]] RetractionAudit retraction_audit();
void reset_retraction_audit();

/// Geodesic Exp_Q(V) = [Q, V] expm([[A, -VᵀV], [I, A]]) [I; 0] expm(-A), A = QᵀV.
[[nodiscard]] Matrix stiefel_exponential(const Matrix& q, const Matrix& v);

/// qf of a seeded Gaussian n x r matrix.
[[nodiscard]] StiefelPoint random_point(Seed seed, Eigen::Index n, Eigen::Index r);

/// trace(VᵀW). Throws std::invalid_argument if the base points differ.
[[nodiscard]] double inner(const TangentVector& v, const TangentVector& w);

/// Orthonormal coordinates on T_Q St(n, r):
///   V = Q Ω + Q⊥ K,  Ω skew (r(r-1)/2 coordinates), K in R^{(n-r) x r},
/// scaled so that the map is an isometry for the Frobenius metric. The
/// dimension is n r - r(r+1)/2.
class TangentBasis {
 public:
  explicit TangentBasis(const StiefelPoint& q);

  [[nodiscard]] Eigen::Index dim() const noexcept { return dim_; }
  [[nodiscard]] const StiefelPoint& base() const noexcept { return base_; }

  [[nodiscard]] TangentVector from_coords(const Vector& c) const;
  [[nodiscard]] Vector to_coords(const TangentVector& v) const;

 private:
  StiefelPoint base_;
  Matrix complement_;  // Q⊥, n x (n - r)
  Eigen::Index dim_;
};

}  // namespace malm
