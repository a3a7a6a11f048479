#include "manifold_alm/numerics.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

namespace malm {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr double kEps = std::numeric_limits<double>::epsilon();

}  // namespace

Seed Seed::derive(std::uint64_t stream) const {
  return Seed{splitmix64(value ^ splitmix64(stream + 0x632BE59BD9B4E019ULL))};
}

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) {
    throw std::invalid_argument(std::string(what) + ": non-finite entry");
  }
}

Matrix qr_orthonormal_factor(const Matrix& m) {
  const Eigen::Index n = m.rows();
  const Eigen::Index r = m.cols();
  if (n < r) throw std::invalid_argument("qr_orthonormal_factor: need rows >= cols");
  require_finite(m, "qr_orthonormal_factor");

  Eigen::HouseholderQR<Matrix> qr(m);
  const Matrix& packed = qr.matrixQR();
  const double scale = m.norm();
  const double floor = static_cast<double>(std::max(n, r)) * kEps * scale;

  Matrix q = qr.householderQ() * Matrix::Identity(n, r);
  for (Eigen::Index j = 0; j < r; ++j) {
    const double rjj = packed(j, j);
    if (!(std::abs(rjj) > floor)) throw std::runtime_error("rank deficient");
    if (rjj < 0.0) q.col(j) *= -1.0;
  }
  return q;
}

Matrix polar_orthonormal_factor(const Matrix& m) {
  require_finite(m, "polar_orthonormal_factor");
  if (m.rows() < m.cols()) {
    throw std::invalid_argument("polar_orthonormal_factor: need rows >= cols");
  }
  Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  const double floor = static_cast<double>(std::max(m.rows(), m.cols())) * kEps * s(0);
  if (s.size() == 0 || !(s(s.size() - 1) > floor)) {
    throw std::runtime_error("rank deficient");
  }
  return svd.matrixU() * svd.matrixV().transpose();
}

Matrix matrix_exponential(const Matrix& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("matrix_exponential: not square");
  require_finite(m, "matrix_exponential");
  return m.exp();
}

double symmetric_extreme_eigenvalue(const SymmetricOperator& apply, Eigen::Index dim,
                                    Extreme which, const LanczosOptions& opts) {
  if (dim < 1) throw std::invalid_argument("symmetric_extreme_eigenvalue: dim < 1");
  const std::size_t cap = opts.max_iters > 0 ? opts.max_iters : 5 * static_cast<std::size_t>(dim);

  std::mt19937_64 gen(opts.start_seed);
  std::normal_distribution<double> normal;
  Vector q(dim);
  for (Eigen::Index i = 0; i < dim; ++i) q(i) = normal(gen);
  q.normalize();

  std::vector<Vector> basis;
  std::vector<double> alpha;
  std::vector<double> beta;
  double op_scale = 0.0;
  double best = std::numeric_limits<double>::quiet_NaN();

  auto extreme_ritz = [&](double last_beta, bool& converged) {
    const auto k = static_cast<Eigen::Index>(alpha.size());
    Vector diag = Eigen::Map<const Vector>(alpha.data(), k);
    Vector sub = k > 1 ? Vector(Eigen::Map<const Vector>(beta.data(), k - 1)) : Vector(0);
    Eigen::SelfAdjointEigenSolver<Matrix> tri;
    tri.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    const Eigen::Index idx = which == Extreme::Min ? 0 : k - 1;
    const double theta = tri.eigenvalues()(idx);
    const double residual = std::abs(last_beta * tri.eigenvectors()(k - 1, idx));
    converged = residual <= opts.tol * (1.0 + std::abs(theta));
    return theta;
  };

  for (std::size_t k = 0; k < cap; ++k) {
    Vector w = apply(q);
    if (w.size() != dim) throw std::invalid_argument("symmetric_extreme_eigenvalue: operator size");
    const double a = q.dot(w);
    w -= a * q;
    if (!basis.empty()) w -= beta.back() * basis.back();
    basis.push_back(q);
    alpha.push_back(a);
    // Two passes of classical Gram-Schmidt against the whole basis.
    for (int pass = 0; pass < 2; ++pass) {
      for (const Vector& b : basis) w -= b.dot(w) * b;
    }
    const double b = w.norm();
    op_scale = std::max({op_scale, std::abs(a), b});

    const bool exhausted = basis.size() == static_cast<std::size_t>(dim);
    const bool breakdown = b <= 1e-12 * std::max(op_scale, 1e-300);
    const std::size_t steps = basis.size();
    const bool check = exhausted || breakdown || steps < 20 || steps % 5 == 0;
    if (check) {
      bool converged = false;
      best = extreme_ritz(b, converged);
      // A random start vector touches every eigenspace, so an invariant
      // Krylov subspace already holds the extreme eigenvalue.
      if (converged || exhausted || breakdown) return best;
    }
    beta.push_back(b);
    q = w / b;
  }
  throw ConvergenceError("symmetric_extreme_eigenvalue: iteration cap reached", best);
}

Matrix gaussian_matrix(Seed seed, Eigen::Index n, Eigen::Index r) {
  if (n < 1 || r < 1) throw std::invalid_argument("gaussian_matrix: empty shape");
  std::mt19937_64 gen(seed.value);
  std::normal_distribution<double> normal;
  Matrix z(n, r);
  for (Eigen::Index j = 0; j < r; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) z(i, j) = normal(gen);
  }
  return z;
}

double orthonormality_error(const Matrix& q) {
  return (q.transpose() * q - Matrix::Identity(q.cols(), q.cols())).norm();
}

}  // namespace malm
