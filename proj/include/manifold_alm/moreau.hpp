#pragma once

// Proximal maps and Moreau-Yosida envelopes of mu*||.||_1 and of the
// indicator of the nonpositive orthant. Envelopes use the weight sigma/2:
//   f^sigma(x) = min_y { f(y) + (sigma/2) ||x - y||^2 },
// so that grad f^sigma(x) = sigma (x - prox(x)).

#include "manifold_alm/numerics.hpp"

namespace malm {

struct EnvelopeResult {
  double value = 0.0;
  Matrix gradient;
  Matrix prox_point;
};

/// Soft threshold sign(x) max(|x| - t, 0), entrywise. Requires t > 0.
[[nodiscard]] Matrix prox_l1(const Matrix& x, double threshold);

/// Envelope of mu*||.||_1 with weight sigma/2. mu = 0 gives the zero function.
[[nodiscard]] EnvelopeResult env_l1(const Matrix& x, double mu, double sigma);

/// min(x, 0), entrywise.
[[nodiscard]] Matrix project_nonpositive(const Matrix& x);

/// Envelope of the indicator of {z <= 0}: value (sigma/2)||max(x,0)||^2.
[[nodiscard]] EnvelopeResult env_indicator_nonpositive(const Matrix& x, double sigma);

}  // namespace malm
