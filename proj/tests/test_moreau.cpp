#include "manifold_alm/moreau.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <cmath>

using namespace malm;
using malm::testing::central_difference;

namespace {

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

/// min_y g(y) + (sigma/2)(x - y)^2 over a fine grid around x, refined once.
std::pair<double, double> grid_envelope(const std::function<double(double)>& g, double x, double sigma) {
  double best_y = x;
  double best = g(x);
  double lo = x - 10.0;
  double hi = x + 10.0;
  for (int round = 0; round < 3; ++round) {
    const int steps = 20000;
    for (int i = 0; i <= steps; ++i) {
      const double y = lo + (hi - lo) * i / steps;
      const double v = g(y) + 0.5 * sigma * (x - y) * (x - y);
      if (v < best) {
        best = v;
        best_y = y;
      }
    }
    const double width = (hi - lo) / steps;
    lo = best_y - 2 * width;
    hi = best_y + 2 * width;
  }
  return {best_y, best};
}

}  // namespace

TEST_CASE("soft threshold") {
  CHECK(prox_l1(scalar(0.0), 1.0)(0, 0) == 0.0);
  CHECK(prox_l1(scalar(3.0), 1.0)(0, 0) == 2.0);
  CHECK(prox_l1(scalar(-0.4), 1.0)(0, 0) == 0.0);
  CHECK(prox_l1(scalar(-3.5), 1.0)(0, 0) == -2.5);
  CHECK_THROWS_AS((void)prox_l1(scalar(1.0), 0.0), std::invalid_argument);

  const auto abs_fn = [](double y) { return std::abs(y); };
  for (double x : {3.0, -0.4, 1.7, -2.2}) {
    const auto [y, value] = grid_envelope(abs_fn, x, 1.0);
    CHECK(prox_l1(scalar(x), 1.0)(0, 0) == doctest::Approx(y).epsilon(1e-6));
    (void)value;
  }
}

TEST_CASE("l1 envelope") {
  SUBCASE("origin") {
    const auto e = env_l1(scalar(0.0), 1.0, 1.0);
    CHECK(e.value == 0.0);
    CHECK(e.gradient(0, 0) == 0.0);
  }
  SUBCASE("scalar value against a grid minimum") {
    const auto e = env_l1(scalar(3.0), 1.0, 1.0);
    CHECK(e.prox_point(0, 0) == 2.0);
    CHECK(e.value == doctest::Approx(2.5));
    CHECK(e.gradient(0, 0) == doctest::Approx(1.0));
    const auto [y, value] = grid_envelope([](double t) { return std::abs(t); }, 3.0, 1.0);
    CHECK(e.value == doctest::Approx(value).epsilon(1e-8));
    (void)y;
  }
  SUBCASE("zero weight is the zero function") {
    const Matrix x = gaussian_matrix(Seed{1}, 3, 2);
    const auto e = env_l1(x, 0.0, 2.0);
    CHECK(e.value == 0.0);
    CHECK(e.gradient.norm() == 0.0);
  }
  SUBCASE("Moreau identity and the upper bound by the l1 norm") {
    for (std::uint64_t s = 0; s < 20; ++s) {
      const Matrix x = gaussian_matrix(Seed{s}, 4, 3);
      const double mu = 0.3 + 0.1 * static_cast<double>(s % 5);
      const double sigma = 0.5 + static_cast<double>(s % 3);
      const auto e = env_l1(x, mu, sigma);
      CHECK((e.gradient + sigma * (e.prox_point - x)).norm() == 0.0);
      CHECK(e.value <= mu * x.cwiseAbs().sum() + 1e-12);
    }
  }
  SUBCASE("gradient is sigma-Lipschitz") {
    for (std::uint64_t s = 0; s < 20; ++s) {
      const Matrix x = gaussian_matrix(Seed{100 + s}, 5, 2);
      const Matrix y = gaussian_matrix(Seed{200 + s}, 5, 2);
      const double sigma = 2.0;
      const double gap = (env_l1(x, 0.7, sigma).gradient - env_l1(y, 0.7, sigma).gradient).norm();
      CHECK(gap <= sigma * (x - y).norm() + 1e-14);
    }
  }
}

TEST_CASE("projection onto the nonpositive orthant") {
  Vector x(2);
  x << 1.0, -2.0;
  const Matrix p = project_nonpositive(x);
  CHECK(p(0, 0) == 0.0);
  CHECK(p(1, 0) == -2.0);
  const Matrix neg = -gaussian_matrix(Seed{3}, 4, 1).cwiseAbs();
  CHECK(project_nonpositive(neg) == neg);

  const Matrix w = gaussian_matrix(Seed{4}, 6, 1);
  const Matrix z = project_nonpositive(w);
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    double best = 0.0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= 40000; ++k) {
      const double c = -4.0 + 4.0 * k / 40000.0;
      const double d = (w(i, 0) - c) * (w(i, 0) - c);
      if (d < best_dist) {
        best_dist = d;
        best = c;
      }
    }
    CHECK(std::abs(z(i, 0) - best) <= 1e-4);
  }
}

TEST_CASE("indicator envelope") {
  CHECK(env_indicator_nonpositive(scalar(-1.5), 2.0).value == 0.0);
  CHECK(env_indicator_nonpositive(scalar(-1.5), 2.0).gradient(0, 0) == 0.0);
  const auto e = env_indicator_nonpositive(scalar(2.0), 3.0);
  CHECK(e.value == doctest::Approx(6.0));
  CHECK(e.gradient(0, 0) == doctest::Approx(6.0));
  const auto [y, value] =
      grid_envelope([](double t) { return t <= 0.0 ? 0.0 : 1e300; }, 2.0, 3.0);
  CHECK(value == doctest::Approx(6.0).epsilon(1e-6));
  (void)y;

  // Complementarity of the projection residual.
  const Matrix w = gaussian_matrix(Seed{5}, 30, 1);
  const Matrix z = project_nonpositive(w);
  const Matrix g = 2.0 * (w - z);
  CHECK(frobenius_inner(g, z) == 0.0);
  CHECK(g.minCoeff() >= 0.0);
}

TEST_CASE("envelope gradients match central differences") {
  const double h = 1e-6;
  int checked = 0;
  for (std::uint64_t s = 0; checked < 100; ++s) {
    const Matrix x = 2.0 * gaussian_matrix(Seed{1000 + s}, 3, 2);
    const Matrix dir = gaussian_matrix(Seed{2000 + s}, 3, 2);
    const double mu = 0.8;
    const double sigma = 1.5;
    // Stay away from kinks of either envelope.
    const double kink_gap = ((x.cwiseAbs().array() - mu / sigma).abs().minCoeff());
    if (kink_gap < 1e-3 || x.cwiseAbs().minCoeff() < 1e-3) continue;
    ++checked;
    const auto fl1 = [&](const Matrix& m) { return env_l1(m, mu, sigma).value; };
    const auto find = [&](const Matrix& m) { return env_indicator_nonpositive(m, sigma).value; };
    const double fd_l1 = central_difference(fl1, x, dir, h);
    const double fd_ind = central_difference(find, x, dir, h);
    const double an_l1 = frobenius_inner(env_l1(x, mu, sigma).gradient, dir);
    const double an_ind = frobenius_inner(env_indicator_nonpositive(x, sigma).gradient, dir);
    CHECK(std::abs(fd_l1 - an_l1) <= 1e-6 * std::max(1.0, std::abs(an_l1)));
    CHECK(std::abs(fd_ind - an_ind) <= 1e-6 * std::max(1.0, std::abs(an_ind)));
  }
}
