#pragma once

// Benchmark problems of the form
//   min_Q f(Q) + mu ||Q||_1   s.t.  Q in St(n, r),  h2(Q) <= 0
// exposed through the ProblemOracle interface. The nonsmooth term always
// acts on h1(Q) = Q (identity embedding), so its multiplier has the shape
// of Q.

#include "manifold_alm/stiefel.hpp"

#include <Eigen/SparseCore>

#include <nlohmann/json.hpp>

#include <memory>
#include <string>
#include <string_view>

namespace malm {

class ProblemOracle {
 public:
  virtual ~ProblemOracle() = default;

  [[nodiscard]] virtual std::string_view name() const = 0;
  [[nodiscard]] virtual Eigen::Index n() const = 0;
  [[nodiscard]] virtual Eigen::Index r() const = 0;
  /// Weight of the l1 term.
  [[nodiscard]] virtual double mu() const = 0;

  [[nodiscard]] virtual double smooth_value(const Matrix& q) const = 0;
  [[nodiscard]] virtual Matrix euclidean_grad_smooth(const Matrix& q) const = 0;
  /// Linear and self-adjoint in w.
  [[nodiscard]] virtual Matrix euclidean_hessvec_smooth(const Matrix& q, const Matrix& w) const = 0;

  struct SmoothParts {
    double value = 0.0;
    Matrix gradient;
  };
  /// Value and gradient together; overridden where they share work.
  [[nodiscard]] virtual SmoothParts smooth_value_and_grad(const Matrix& q) const {
    return {smooth_value(q), euclidean_grad_smooth(q)};
  }

  /// h1(Q) = Q and its adjoint derivative, the identity.
  [[nodiscard]] static const Matrix& h1(const Matrix& q) { return q; }
  [[nodiscard]] static const Matrix& h1_adjoint(const Matrix& y) { return y; }

  /// Number q of inequality constraints h2(Q) <= 0.
  [[nodiscard]] virtual Eigen::Index num_inequalities() const { return 0; }
  [[nodiscard]] virtual Vector h2(const Matrix& /*q*/) const { return Vector(0); }
  /// sum_i w_i grad h2_i(Q).
  [[nodiscard]] virtual Matrix h2_adjoint(const Matrix& q, const Vector& /*w*/) const {
    return Matrix::Zero(q.rows(), q.cols());
  }
  /// (<grad h2_i(Q), W>)_i.
  [[nodiscard]] virtual Vector h2_directional(const Matrix& /*q*/, const Matrix& /*w*/) const {
    return Vector(0);
  }
  /// sum_i w_i Hess h2_i(Q)[dir].
  [[nodiscard]] virtual Matrix h2_hessvec(const Matrix& q, const Vector& /*w*/,
                                          const Matrix& /*dir*/) const {
    return Matrix::Zero(q.rows(), q.cols());
  }

  /// A point with h2 <= 0, used for the Phi safeguard. Problems without
  /// inequalities return the given start point.
  [[nodiscard]] virtual StiefelPoint feasible_point(const StiefelPoint& x0) const { return x0; }

  /// Objective f(Q) + mu ||Q||_1 (the reported loss).
  [[nodiscard]] double loss(const Matrix& q) const {
    return smooth_value(q) + mu() * q.cwiseAbs().sum();
  }
};

// ---------------------------------------------------------------------------
// Compressed modes: f(Q) = tr(QᵀHQ), H the periodic discretization of -1/2 d²/dx².

using SparseMatrix = Eigen::SparseMatrix<double>;

struct CmInstance {
  SparseMatrix H;  // three nonzeros per row
  double mu = 0.0;
  double domain_length = 50.0;
};

/// Periodic central-difference Laplacian on n nodes with spacing
/// h = domain_length / n: H_ii = 1/h², H_{i,i±1 mod n} = -1/(2h²).
[[nodiscard]] CmInstance build_cm(Eigen::Index n, double mu, double domain_length = 50.0);

class CmProblem final : public ProblemOracle {
 public:
  CmProblem(CmInstance instance, Eigen::Index r);

  std::string_view name() const override { return "cm"; }
  Eigen::Index n() const override { return inst_.H.rows(); }
  Eigen::Index r() const override { return r_; }
  double mu() const override { return inst_.mu; }
  const CmInstance& instance() const noexcept { return inst_; }

  double smooth_value(const Matrix& q) const override;
  Matrix euclidean_grad_smooth(const Matrix& q) const override;
  Matrix euclidean_hessvec_smooth(const Matrix& q, const Matrix& w) const override;
  SmoothParts smooth_value_and_grad(const Matrix& q) const override;

 private:
  CmInstance inst_;
  Eigen::Index r_;
};

// ---------------------------------------------------------------------------
// Sparse PCA: f(Q) = -tr(QᵀAᵀAQ).

struct SpcaInstance {
  Matrix A;  // p x n, columns zero-mean with unit length
  Matrix M;  // AᵀA
  double mu = 0.0;
};

struct SpcaData {
  Matrix raw;              // p x n before column normalization
  Vector singular_values;  // w_i^4 + 1e-5, sorted descending
  Matrix A;                // normalized
};

/// Gaussian p x n matrix whose singular values are replaced by
/// {w_i^4 + 1e-5} (w standard normal), then column-centered and normalized.
[[nodiscard]] SpcaData generate_spca_data(Seed seed, Eigen::Index n, Eigen::Index p = 50);

[[nodiscard]] SpcaInstance build_spca(Seed seed, Eigen::Index n, double mu, Eigen::Index p = 50);

class SpcaProblem : public ProblemOracle {
 public:
  SpcaProblem(SpcaInstance instance, Eigen::Index r);

  std::string_view name() const override { return "spca"; }
  Eigen::Index n() const override { return inst_.A.cols(); }
  Eigen::Index r() const override { return r_; }
  double mu() const override { return inst_.mu; }
  const SpcaInstance& instance() const noexcept { return inst_; }

  double smooth_value(const Matrix& q) const override;
  Matrix euclidean_grad_smooth(const Matrix& q) const override;
  Matrix euclidean_hessvec_smooth(const Matrix& q, const Matrix& w) const override;
  SmoothParts smooth_value_and_grad(const Matrix& q) const override;

 protected:
  /// AᵀA X computed as Aᵀ(A X).
  [[nodiscard]] Matrix gram_times(const Matrix& x) const;

  SpcaInstance inst_;
  Eigen::Index r_;
};

// ---------------------------------------------------------------------------
// Constrained sparse PCA: SPCA plus |Q_iᵀ AᵀA Q_j| <= Delta_ij for i != j,
// split into the two inequalities  ±(Q_iᵀ AᵀA Q_j) - Delta_ij <= 0.
// Constraint order: pairs (i, j), i < j, i-major; for pair k the entries
// 2k and 2k+1 hold the + and - halves.

struct ConstrainedSpcaInstance {
  Matrix A;
  Matrix M;
  double mu = 0.0;
  Matrix Delta;  // r x r symmetric, nonnegative; diagonal unused
};

/// Gaussian 50 x n data with zero-mean, unit-length columns and constant
/// tolerance `delta` on every off-diagonal pair.
[[nodiscard]] ConstrainedSpcaInstance build_cspca(Seed seed, Eigen::Index n, double mu,
                                                  double delta, Eigen::Index r,
                                                  Eigen::Index p = 50);

class ConstrainedSpcaProblem final : public SpcaProblem {
 public:
  ConstrainedSpcaProblem(ConstrainedSpcaInstance instance, Eigen::Index r);

  std::string_view name() const override { return "cspca"; }
  const Matrix& delta() const noexcept { return delta_; }

  Eigen::Index num_inequalities() const override { return r_ * (r_ - 1); }
  Vector h2(const Matrix& q) const override;
  Matrix h2_adjoint(const Matrix& q, const Vector& w) const override;
  Vector h2_directional(const Matrix& q, const Matrix& w) const override;
  Matrix h2_hessvec(const Matrix& q, const Vector& w, const Matrix& dir) const override;

  /// The r leading eigenvectors of AᵀA, for which every cross term vanishes.
  StiefelPoint feasible_point(const StiefelPoint& x0) const override;

 private:
  /// Symmetric r x r matrix S with S_ij = w_{2k} - w_{2k+1} for pair k = (i, j).
  [[nodiscard]] Matrix pair_weights(const Vector& w) const;

  Matrix delta_;
};

// ---------------------------------------------------------------------------
// Metrics.

/// (tr(VᵀAᵀAV) - sqrt(sum_{i != j} (V_iᵀAᵀAV_j)²)) / tr(AᵀA).
[[nodiscard]] double cpav(const Matrix& a, const Matrix& v);

/// Percentage of entries with |Q_ij| <= zero_tol.
[[nodiscard]] double sparsity_percent(const Matrix& q, double zero_tol = 1e-5);

// ---------------------------------------------------------------------------
// Reproducible instance descriptions: seed and parameters regenerate the data.

enum class ProblemKind { Cm, Spca, Cspca };

[[nodiscard]] std::string_view to_string(ProblemKind kind);
[[nodiscard]] ProblemKind parse_problem_kind(std::string_view name);

struct InstanceDescriptor {
  ProblemKind kind = ProblemKind::Cm;
  Eigen::Index n = 0;
  Eigen::Index r = 0;
  double mu = 0.0;
  std::uint64_t seed = 0;
  Eigen::Index p = 50;
  double domain_length = 50.0;
  double delta = 1e-8;

  friend bool operator==(const InstanceDescriptor&, const InstanceDescriptor&) = default;
};

void to_json(nlohmann::json& j, const InstanceDescriptor& d);
void from_json(const nlohmann::json& j, InstanceDescriptor& d);

[[nodiscard]] std::unique_ptr<ProblemOracle> make_problem(const InstanceDescriptor& d);

}  // namespace malm
