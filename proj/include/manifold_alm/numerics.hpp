#pragma once

// Dense kernels and seeded randomness shared by the solver modules.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace malm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Seed of a deterministic random stream. Equal seeds give bit-identical
/// sample streams.
struct Seed {
  std::uint64_t value = 0;

  /// Independent child stream, e.g. one per attempt or per iteration.
  [[nodiscard]] Seed derive(std::uint64_t stream) const;

  friend bool operator==(const Seed&, const Seed&) = default;
};

/// Thrown when an iterative numerical routine hits its iteration cap.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double best_estimate)
      : std::runtime_error(what), best_estimate_(best_estimate) {}

  [[nodiscard]] double best_estimate() const noexcept { return best_estimate_; }

 private:
  double best_estimate_;
};

/// Throws std::invalid_argument if any entry of `m` is NaN or infinite.
void require_finite(const Matrix& m, const char* what);

/// Q factor of a thin QR decomposition with positive diagonal in R, so the
/// factor is unique. Throws std::runtime_error("rank deficient") if a column
/// is (numerically) dependent on the previous ones.
[[nodiscard]] Matrix qr_orthonormal_factor(const Matrix& m);

/// M (MᵀM)^{-1/2}, the closest matrix with orthonormal columns. Computed from
/// the thin SVD as U Vᵀ.
[[nodiscard]] Matrix polar_orthonormal_factor(const Matrix& m);

/// exp(M) by scaling and squaring with a Padé approximant.
[[nodiscard]] Matrix matrix_exponential(const Matrix& m);

enum class Extreme { Min, Max };

/// Self-adjoint linear operator on R^dim, given by its action.
using SymmetricOperator = std::function<Vector(const Vector&)>;

struct LanczosOptions {
  double tol = 1e-10;
  /// 0 means the default cap of 5 * dim.
  std::size_t max_iters = 0;
  std::uint64_t start_seed = 0x5eed;
};

/// Extreme eigenvalue of a self-adjoint operator via Lanczos with full
/// reorthogonalization. The returned Ritz value has residual bound
/// <= tol * (1 + |lambda|). Throws ConvergenceError (carrying the best Ritz
/// value) when the iteration cap is reached first.
[[nodiscard]] double symmetric_extreme_eigenvalue(const SymmetricOperator& apply,
                                                  Eigen::Index dim, Extreme which,
                                                  const LanczosOptions& opts = {});

/// n x r matrix of i.i.d. standard normal entries, filled column by column.
[[nodiscard]] Matrix gaussian_matrix(Seed seed, Eigen::Index n, Eigen::Index r);

/// Frobenius inner product trace(AᵀB).
[[nodiscard]] inline double frobenius_inner(const Matrix& a, const Matrix& b) {
  return (a.array() * b.array()).sum();
}

[[nodiscard]] inline Matrix sym(const Matrix& a) { return 0.5 * (a + a.transpose()); }

/// ||QᵀQ - I||_F.
[[nodiscard]] double orthonormality_error(const Matrix& q);

}  // namespace malm
