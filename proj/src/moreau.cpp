#include "manifold_alm/moreau.hpp"

namespace malm {

Matrix prox_l1(const Matrix& x, double threshold) {
  if (!(threshold > 0.0)) throw std::invalid_argument("prox_l1: threshold must be positive");
  return x.unaryExpr([threshold](double v) {
    if (v > threshold) return v - threshold;
    if (v < -threshold) return v + threshold;
    return 0.0;
  });
}

EnvelopeResult env_l1(const Matrix& x, double mu, double sigma) {
  if (!(mu >= 0.0) || !(sigma > 0.0)) {
    throw std::invalid_argument("env_l1: need mu >= 0 and sigma > 0");
  }
  EnvelopeResult out;
  out.prox_point = mu > 0.0 ? prox_l1(x, mu / sigma) : x;
  const Matrix diff = x - out.prox_point;
  out.value = mu * out.prox_point.cwiseAbs().sum() + 0.5 * sigma * diff.squaredNorm();
  out.gradient = sigma * diff;
  return out;
}

Matrix project_nonpositive(const Matrix& x) { return x.cwiseMin(0.0); }

EnvelopeResult env_indicator_nonpositive(const Matrix& x, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("env_indicator_nonpositive: sigma must be positive");
  EnvelopeResult out;
  out.prox_point = project_nonpositive(x);
  const Matrix excess = x.cwiseMax(0.0);
  out.value = 0.5 * sigma * excess.squaredNorm();
  out.gradient = sigma * excess;
  return out;
}

}  // namespace malm
