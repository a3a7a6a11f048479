#include "manifold_alm/clarke.hpp"

#include <cmath>
#include <string>

namespace malm {

DirectionSample sample_admissible_direction(const StiefelPoint& q, Seed seed, int max_attempts) {
  const Matrix& qm = q.matrix();
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    TangentVector v = project_tangent(q, gaussian_matrix(seed.derive(attempt), q.n(), q.r()));
    const Matrix& vm = v.matrix();
    SideMask mask(q.n(), q.r());
    bool admissible = true;
    for (Eigen::Index j = 0; j < q.r() && admissible; ++j) {
      for (Eigen::Index i = 0; i < q.n(); ++i) {
        const double vij = vm(i, j);
        if (std::abs(vij) > kDirectionZeroTol) {
          mask(i, j) = vij > 0.0 ? Side::FromAbove : Side::FromBelow;
          continue;
        }
        const double qij = qm(i, j);
        if (std::abs(qij - 1.0) <= kDirectionZeroTol) {
          mask(i, j) = Side::FromBelow;
        } else if (std::abs(qij + 1.0) <= kDirectionZeroTol) {
          mask(i, j) = Side::FromAbove;
        } else {
          admissible = false;
          break;
        }
      }
    }
    if (admissible) return DirectionSample{std::move(v), std::move(mask), attempt + 1};
  }
  throw std::runtime_error("sample_admissible_direction: no admissible direction after " +
                           std::to_string(max_attempts) + " attempts");
}

Matrix l1_envelope_mask(const Matrix& x, double threshold, const DirectionSample* sample) {
  if (sample != nullptr &&
      (sample->side_mask.rows() != x.rows() || sample->side_mask.cols() != x.cols())) {
    throw std::invalid_argument("l1_envelope_mask: sample shape mismatch");
  }
  Matrix e(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double xij = x(i, j);
      const double gap = std::abs(xij) - threshold;
      if (gap < -kKinkTol) {
        e(i, j) = 1.0;
      } else if (gap > kKinkTol) {
        e(i, j) = 0.0;
      } else if (sample == nullptr) {
        e(i, j) = 1.0;
      } else {
        const Side side = sample->side_mask(i, j);
        const bool outward = (xij > 0.0 && side == Side::FromAbove) ||
                             (xij < 0.0 && side == Side::FromBelow);
        e(i, j) = outward ? 0.0 : 1.0;
      }
    }
  }
  return e;
}

Vector inequality_activity(const Vector& slack, const Vector* directional) {
  if (directional != nullptr && directional->size() != slack.size()) {
    throw std::invalid_argument("inequality_activity: size mismatch");
  }
  Vector a(slack.size());
  for (Eigen::Index i = 0; i < slack.size(); ++i) {
    if (slack(i) > kKinkTol) {
      a(i) = 1.0;
    } else if (slack(i) < -kKinkTol) {
      a(i) = 0.0;
    } else {
      a(i) = (directional != nullptr && (*directional)(i) < 0.0) ? 0.0 : 1.0;
    }
  }
  return a;
}

ClarkeElement::ClarkeElement(StiefelPoint base, const Matrix& euclidean_gradient,
                             EuclideanHessVec hessvec, double sigma, Matrix l1_mask,
                             Vector activity)
    : base_(std::move(base)),
      curvature_(sym(base_.matrix().transpose() * euclidean_gradient)),
      hessvec_(std::move(hessvec)),
      sigma_(sigma),
      l1_mask_(std::move(l1_mask)),
      activity_(std::move(activity)) {
  if (euclidean_gradient.rows() != base_.n() || euclidean_gradient.cols() != base_.r()) {
    throw std::invalid_argument("ClarkeElement: gradient shape mismatch");
  }
  if (!(sigma_ > 0.0)) throw std::invalid_argument("ClarkeElement: sigma must be positive");
}

TangentVector ClarkeElement::apply(const TangentVector& w) const {
  if (!w.base().same_point(base_)) throw std::invalid_argument("ClarkeElement: base mismatch");
  const Matrix& wm = w.matrix();
  return project_tangent(base_, hessvec_(wm) - wm * curvature_);
}

TangentVector apply_clarke_element(const ClarkeElement& h, const TangentVector& w) {
  return h.apply(w);
}

double min_eigenvalue_probe(const ClarkeElement& h, double tol) {
  const TangentBasis basis(h.base());
  const SymmetricOperator op = [&](const Vector& c) {
    return basis.to_coords(h.apply(basis.from_coords(c)));
  };
  LanczosOptions opts;
  opts.tol = tol;
  return symmetric_extreme_eigenvalue(op, basis.dim(), Extreme::Min, opts);
}

}  // namespace malm
