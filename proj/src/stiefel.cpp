#include "manifold_alm/stiefel.hpp"

#include <atomic>
#include <cmath>
#include <string>

namespace malm {

namespace {

double tangency_error(const Matrix& q, const Matrix& v) {
  const Matrix qtv = q.transpose() * v;
  return (qtv + qtv.transpose()).norm();
}

}  // namespace

StiefelPoint::StiefelPoint(Matrix q) {
  if (q.rows() < q.cols() || q.cols() < 1) {
    throw std::invalid_argument("StiefelPoint: need n >= r >= 1");
  }
  require_finite(q, "StiefelPoint");
  const double err = orthonormality_error(q);
  if (!(err <= kStiefelTol)) {
    throw std::invalid_argument("StiefelPoint: columns not orthonormal (||QᵀQ - I||_F = " +
                                std::to_string(err) + ")");
  }
  q_ = std::make_shared<const Matrix>(std::move(q));
  err_ = err;
}

bool StiefelPoint::same_point(const StiefelPoint& other) const {
  if (q_ == other.q_) return true;
  return q_->rows() == other.q_->rows() && q_->cols() == other.q_->cols() && *q_ == *other.q_;
}

TangentVector::TangentVector(StiefelPoint base, Matrix v) : base_(std::move(base)), v_(std::move(v)) {
  if (v_.rows() != base_.n() || v_.cols() != base_.r()) {
    throw std::invalid_argument("TangentVector: shape mismatch");
  }
  require_finite(v_, "TangentVector");
  const double err = tangency_error(base_.matrix(), v_);
  if (!(err <= kTangentTol * (1.0 + v_.norm()))) {
    throw std::invalid_argument("TangentVector: not tangent (||QᵀV + VᵀQ||_F = " +
                                std::to_string(err) + ")");
  }
}

TangentVector TangentVector::zero(const StiefelPoint& base) {
  return TangentVector(base, Matrix::Zero(base.n(), base.r()));
}

TangentVector& TangentVector::operator+=(const TangentVector& other) {
  if (!base_.same_point(other.base_)) throw std::invalid_argument("TangentVector: base mismatch");
  v_ += other.v_;
  return *this;
}

TangentVector& TangentVector::operator-=(const TangentVector& other) {
  if (!base_.same_point(other.base_)) throw std::invalid_argument("TangentVector: base mismatch");
  v_ -= other.v_;
  return *this;
}

TangentVector& TangentVector::operator*=(double s) {
  v_ *= s;
  return *this;
}

std::string_view to_string(RetractionKind kind) {
  switch (kind) {
    case RetractionKind::QR: return "qr";
    case RetractionKind::Polar: return "polar";
    case RetractionKind::Exponential: return "exp";
  }
  return "unknown";
}

RetractionKind parse_retraction(std::string_view name) {
  if (name == "qr") return RetractionKind::QR;
  if (name == "polar") return RetractionKind::Polar;
  if (name == "exp" || name == "exponential") return RetractionKind::Exponential;
  throw std::invalid_argument("unknown retraction '" + std::string(name) + "'");
}

TangentVector project_tangent(const StiefelPoint& q, const Matrix& w) {
  if (w.rows() != q.n() || w.cols() != q.r()) {
    throw std::invalid_argument("project_tangent: shape mismatch");
  }
  const Matrix& qm = q.matrix();
  Matrix v = w - qm * sym(qm.transpose() * w);
  // When ||W|| dwarfs ||P_Q W|| the first pass can leave a rounding-level
  // normal component; a second pass removes it.
  if (tangency_error(qm, v) > 0.1 * kTangentTol * (1.0 + v.norm())) {
    v -= qm * sym(qm.transpose() * v);
    return TangentVector(q, std::move(v));
  }
  require_finite(v, "project_tangent");
  return TangentVector(q, std::move(v), TangentVector::Verified{});
}

Matrix stiefel_exponential(const Matrix& q, const Matrix& v) {
  const Eigen::Index r = q.cols();
  const Matrix a = q.transpose() * v;
  Matrix block(2 * r, 2 * r);
  block << a, -(v.transpose() * v), Matrix::Identity(r, r), a;
  const Matrix e = matrix_exponential(block);
  Matrix qv(q.rows(), 2 * r);
  qv << q, v;
  return qv * e.leftCols(r) * matrix_exponential(-a);
}

namespace {

std::atomic<std::uint64_t> g_retractions{0};
std::atomic<double> g_max_retraction_error{0.0};

StiefelPoint audited(StiefelPoint p) {
  g_retractions.fetch_add(1, std::memory_order_relaxed);
  double seen = g_max_retraction_error.load(std::memory_order_relaxed);
  while (p.orthonormality() > seen &&
         !g_max_retraction_error.compare_exchange_weak(seen, p.orthonormality(), std::memory_order_relaxed)) {
  }
  return p;
}

StiefelPoint retract_unaudited(const Matrix& qm, const Matrix& v, RetractionKind kind) {
  switch (kind) {
    case RetractionKind::QR:
      return StiefelPoint(qr_orthonormal_factor(qm + v));
    case RetractionKind::Polar:
      // For tangent V, (Q + V)ᵀ(Q + V) = I + VᵀV, so this is (Q+V)(I+VᵀV)^{-1/2}.
      return StiefelPoint(polar_orthonormal_factor(qm + v));
    case RetractionKind::Exponential: {
      Matrix y = stiefel_exponential(qm, v);
      // Long steps accumulate rounding in expm; snap back to the manifold.
      if (orthonormality_error(y) > 0.1 * kStiefelTol) y = polar_orthonormal_factor(y);
      return StiefelPoint(std::move(y));
    }
  }
  throw std::invalid_argument("retract: unknown kind");
}

}  // namespace

StiefelPoint retract(const StiefelPoint& q, const TangentVector& v, RetractionKind kind) {
  if (!v.base().same_point(q)) throw std::invalid_argument("retract: base mismatch");
  return audited(retract_unaudited(q.matrix(), v.matrix(), kind));
}

RetractionAudit retraction_audit() {
  return {g_retractions.load(), g_max_retraction_error.load()};
}

void reset_retraction_audit() {
  g_retractions.store(0);
  g_max_retraction_error.store(0.0);
}

StiefelPoint random_point(Seed seed, Eigen::Index n, Eigen::Index r) {
  if (n < r || r < 1) throw std::invalid_argument("random_point: need n >= r >= 1");
  return StiefelPoint(qr_orthonormal_factor(gaussian_matrix(seed, n, r)));
}

double inner(const TangentVector& v, const TangentVector& w) {
  if (!v.base().same_point(w.base())) throw std::invalid_argument("inner: base mismatch");
  return frobenius_inner(v.matrix(), w.matrix());
}

TangentBasis::TangentBasis(const StiefelPoint& q) : base_(q) {
  const Eigen::Index n = q.n();
  const Eigen::Index r = q.r();
  Eigen::HouseholderQR<Matrix> qr(q.matrix());
  const Matrix full = qr.householderQ();
  complement_ = full.rightCols(n - r);
  dim_ = n * r - r * (r + 1) / 2;
}

TangentVector TangentBasis::from_coords(const Vector& c) const {
  if (c.size() != dim_) throw std::invalid_argument("TangentBasis: coordinate size");
  const Eigen::Index n = base_.n();
  const Eigen::Index r = base_.r();
  Matrix omega = Matrix::Zero(r, r);
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < r; ++j) {
    for (Eigen::Index i = 0; i < j; ++i) {
      omega(i, j) = c(k++) / std::sqrt(2.0);
      omega(j, i) = -omega(i, j);
    }
  }
  const Eigen::Map<const Matrix> kmat(c.data() + k, n - r, r);
  Matrix v = base_.matrix() * omega + complement_ * kmat;
  return TangentVector(base_, std::move(v));
}

Vector TangentBasis::to_coords(const TangentVector& v) const {
  if (!v.base().same_point(base_)) throw std::invalid_argument("TangentBasis: base mismatch");
  const Eigen::Index n = base_.n();
  const Eigen::Index r = base_.r();
  const Matrix omega = base_.matrix().transpose() * v.matrix();
  Vector c(dim_);
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < r; ++j) {
    for (Eigen::Index i = 0; i < j; ++i) {
      c(k++) = std::sqrt(2.0) * 0.5 * (omega(i, j) - omega(j, i));
    }
  }
  Eigen::Map<Matrix>(c.data() + k, n - r, r) = complement_.transpose() * v.matrix();
  return c;
}

}  // namespace malm
