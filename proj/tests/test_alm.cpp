#include "manifold_alm/alm.hpp"
#include "manifold_alm/moreau.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <cmath>

using namespace malm;
using malm::testing::random_tangent;

namespace {

/// min |s - lambda| over s in mu d|r|, by brute force on a grid of s.
double grid_subgradient_gap(double r, double lambda, double mu) {
  if (r != 0.0) return std::abs((r > 0.0 ? mu : -mu) - lambda);
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= 200000; ++k) {
    const double s = -mu + 2.0 * mu * k / 200000.0;
    best = std::min(best, std::abs(s - lambda));
  }
  return best;
}

/// d/dt L(R_Q(tV)) at t = 0 by central differences.
double directional_fd(const AugmentedLagrangian& lk, const StiefelPoint& q, const TangentVector& v) {
  const double t = 1e-6;
  return (lk.value(retract(q, t * v, RetractionKind::QR)) - lk.value(retract(q, -t * v, RetractionKind::QR))) /
         (2.0 * t);
}

}  // namespace

TEST_CASE("subproblem objective") {
  const CmProblem cm(build_cm(30, 0.2), 3);
  const Matrix lambda = 0.3 * gaussian_matrix(Seed{1}, 30, 3);
  const AugmentedLagrangian lk(cm, lambda, Vector(0), 2.0);
  const StiefelPoint q = random_point(Seed{2}, 30, 3);

  const double direct = cm.smooth_value(q.matrix()) + env_l1(q.matrix() + lambda / 2.0, 0.2, 2.0).value;
  CHECK(lk.value(q) == doctest::Approx(direct).epsilon(1e-14));
  CHECK(lk.evaluate(q).value == doctest::Approx(direct).epsilon(1e-14));
  CHECK(lk.multiplier_shift() == doctest::Approx(lambda.squaredNorm() / 4.0));

  // Minimizing the split Lagrangian over y recovers L minus the shift.
  const auto p = lk.parts(q.matrix());
  const double split = cm.smooth_value(q.matrix()) + 0.2 * p.y.cwiseAbs().sum() +
                       frobenius_inner(lambda, q.matrix() - p.y) +
                       1.0 * (q.matrix() - p.y).squaredNorm();
  CHECK(split == doctest::Approx(lk.value(q) - lk.multiplier_shift()).epsilon(1e-12));

  CHECK_THROWS_AS(AugmentedLagrangian(cm, lambda, Vector(0), 0.0), std::invalid_argument);
  CHECK_THROWS_AS(AugmentedLagrangian(cm, Matrix::Zero(3, 3), Vector(0), 1.0), std::invalid_argument);
  CHECK_THROWS_AS(AugmentedLagrangian(cm, lambda, Vector::Zero(2), 1.0), std::invalid_argument);
}

TEST_CASE("Riemannian gradient of the subproblem objective") {
  const CmProblem cm(build_cm(40, 0.1), 4);
  const SpcaProblem sp(build_spca(Seed{3}, 60, 0.4, 20), 3);
  const ConstrainedSpcaProblem cs(build_cspca(Seed{4}, 60, 0.4, 1e-2, 3, 20), 3);
  const std::vector<const ProblemOracle*> problems{&cm, &sp, &cs};
  for (const ProblemOracle* p : problems) {
    CAPTURE(p->name());
    const Matrix lambda = 0.2 * gaussian_matrix(Seed{5}, p->n(), p->r());
    const Vector gamma = p->num_inequalities() > 0
                             ? Vector(gaussian_matrix(Seed{6}, p->num_inequalities(), 1).cwiseAbs())
                             : Vector(0);
    const AugmentedLagrangian lk(*p, lambda, gamma, 3.0);
    const StiefelPoint q = random_point(Seed{7}, p->n(), p->r());
    const TangentVector g = lk.evaluate(q).gradient;
    for (std::uint64_t s = 0; s < 20; ++s) {
      TangentVector v = random_tangent(q, Seed{100 + s});
      v *= 1.0 / v.norm();
      const double fd = directional_fd(lk, q, v);
      CHECK(std::abs(fd - inner(g, v)) <= 1e-6 * std::max(1.0, g.norm()));
    }
  }
}

TEST_CASE("safeguard bound") {
  const CmProblem cm(build_cm(30, 0.2), 3);
  const StiefelPoint x0 = random_point(Seed{8}, 30, 3);
  const MultiplierState s0 = initial_state(cm, x0, 1.0);
  // Zero multipliers: L(x0) <= loss(x0), so the loss wins.
  CHECK(compute_phi_bound(cm, x0, s0) == doctest::Approx(cm.loss(x0.matrix())).epsilon(1e-14));

  const ConstrainedSpcaProblem cs(build_cspca(Seed{9}, 60, 0.3, 1e-8, 3, 20), 3);
  const StiefelPoint y0 = random_point(Seed{10}, 60, 3);
  const MultiplierState bad = initial_state(cs, y0, 1.0);
  CHECK_THROWS_AS((void)compute_phi_bound(cs, y0, bad), std::invalid_argument);
  const MultiplierState good = initial_state(cs, cs.feasible_point(y0), 1.0);
  const double phi = compute_phi_bound(cs, y0, good);
  CHECK(phi >= cs.loss(good.x_feas.matrix()));
  const AugmentedLagrangian lk(cs, good.lambda, good.gamma, 1.0);
  CHECK(phi >= lk.value(y0));
}

TEST_CASE("multiplier and penalty updates") {
  const ConstrainedSpcaProblem cs(build_cspca(Seed{11}, 60, 0.3, 1e-3, 2, 20), 2);
  MultiplierState s = initial_state(cs, random_point(Seed{12}, 60, 2), 2.0);
  s.gamma << 1.0, 1.0;
  const Matrix h1x = Matrix::Ones(60, 2);
  const Matrix y = Matrix::Zero(60, 2);
  Vector h2x(2);
  h2x << 0.5, -1.0;
  Vector z(2);
  z << 0.0, -1.0;
  const MultiplierState next = update_multipliers(s, h1x, y, h2x, z);
  CHECK(next.lambda == Matrix::Constant(60, 2, 2.0));
  CHECK(next.gamma(0) == 2.0);
  CHECK(next.gamma(1) == 0.0);
  CHECK_THROWS_AS((void)update_multipliers(s, Matrix::Ones(3, 2), y, h2x, z), std::invalid_argument);

  AlmConfig cfg;
  MultiplierState p = initial_state(cs, random_point(Seed{13}, 60, 2), 1.0);
  p.delta_prev = 1.0;
  SUBCASE("enough decrease keeps sigma") {
    const MultiplierState kept = update_penalty(p, 0.5, cfg, false);
    CHECK(kept.sigma == 1.0);
    CHECK(kept.delta_prev == 0.5);
  }
  SUBCASE("slow decrease raises sigma by rho") {
    CHECK(update_penalty(p, 0.99, cfg, false).sigma == doctest::Approx(1.25));
  }
  SUBCASE("large multipliers dominate the raise") {
    p.lambda.setZero();
    p.lambda(0, 0) = 10.0;
    CHECK(update_penalty(p, 0.99, cfg, false).sigma == doctest::Approx(102.329299).epsilon(1e-8));
  }
  SUBCASE("crosscheck forces a raise") {
    CHECK(update_penalty(p, 0.1, cfg, true).sigma == doctest::Approx(1.25));
  }
  SUBCASE("first iteration never fails the decrease test") {
    p.delta_prev = std::numeric_limits<double>::infinity();
    CHECK(update_penalty(p, 1e3, cfg, false).sigma == 1.0);
  }
}

TEST_CASE("tolerance schedule") {
  const EpsSchedule e{0.95, 5.0, 1e-10};
  CHECK(e.at(1, std::numeric_limits<double>::infinity()) == doctest::Approx(0.95));
  CHECK(e.at(10, 1e-3) == doctest::Approx(5e-3));
  CHECK(e.at(10, 1.0) == doctest::Approx(std::pow(0.95, 10)));
  CHECK(e.at(1000, 1.0) == 1e-10);
  const EpsSchedule no_feas{0.1, 0.0, 1e-10};
  CHECK(no_feas.at(2, 1e-30) == doctest::Approx(1e-2));
}

TEST_CASE("KKT residuals") {
  const CmProblem smooth(build_cm(20, 0.0, 20.0), 3);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(Matrix(smooth.instance().H));
  const StiefelPoint q(eig.eigenvectors().leftCols(3));
  const Matrix zero = Matrix::Zero(20, 3);

  SUBCASE("exact stationary point") {
    const KktResiduals res = kkt_residuals_at(smooth, q, q.matrix(), zero, Vector(0), Vector(0));
    CHECK(res.feasibility == 0.0);
    CHECK(res.stationarity <= 1e-14);
    CHECK(res.inequality_violation == 0.0);
  }
  SUBCASE("feasibility scales with the infinity norm of the gap") {
    Matrix r = q.matrix();
    r(4, 1) += 1e-3;
    const KktResiduals res = kkt_residuals_at(smooth, q, r, zero, Vector(0), Vector(0));
    CHECK(res.feasibility == doctest::Approx(1e-3 / (r.norm() + 1.0)));
  }
  SUBCASE("l1 block against a brute-force subgradient") {
    const double mu = 0.3;
    const CmProblem cm(build_cm(20, mu, 20.0), 3);
    const StiefelPoint p = random_point(Seed{14}, 20, 3);
    Matrix r = p.matrix();
    for (Eigen::Index i = 0; i < 20; i += 3) r(i, i % 3) = 0.0;
    const Matrix lambda = 0.4 * gaussian_matrix(Seed{15}, 20, 3);
    const KktResiduals res = kkt_residuals_at(cm, p, r, lambda, Vector(0), Vector(0));
    double worst = 0.0;
    for (Eigen::Index j = 0; j < 3; ++j) {
      for (Eigen::Index i = 0; i < 20; ++i) worst = std::max(worst, grid_subgradient_gap(r(i, j), lambda(i, j), mu));
    }
    const Matrix pg = project_tangent(p, cm.euclidean_grad_smooth(p.matrix()) + lambda).matrix();
    const double expected = pg.cwiseAbs().maxCoeff() / (p.matrix().norm() + 1.0) + worst / (r.norm() + 1.0);
    CHECK(res.stationarity == doctest::Approx(expected).epsilon(1e-5));
  }
  SUBCASE("inequality block") {
    const ConstrainedSpcaProblem cs(build_cspca(Seed{16}, 60, 0.0, 1e-3, 2, 20), 2);
    const StiefelPoint fp = cs.feasible_point(random_point(Seed{17}, 60, 2));
    const Vector h2 = cs.h2(fp.matrix());
    // z = h2 < 0 with gamma = 0 is complementary; grad f alone is tangent-free at eigenvectors.
    const KktResiduals ok = kkt_residuals_at(cs, fp, fp.matrix(), Matrix::Zero(60, 2), h2, Vector::Zero(2));
    CHECK(ok.inequality_violation == 0.0);
    CHECK(ok.stationarity <= 1e-10);
    Vector gamma(2);
    gamma << 0.5, 0.0;
    const KktResiduals bad = kkt_residuals_at(cs, fp, fp.matrix(), Matrix::Zero(60, 2), h2, gamma);
    CHECK(bad.stationarity >= 0.5 / (h2.norm() + 1.0));
  }
}

TEST_CASE("outer loop on a smooth problem") {
  // mu = 0: the subproblem is f itself and Q = y after one solve.
  const CmProblem quad(build_cm(50, 0.0), 3);
  AlmConfig cfg = default_alm_config(quad);
  cfg.eps = {1e-8, 0.0, 1e-10};
  const AlmResult res = run_alm(quad, cfg, default_newton_config(quad), Seed{18});
  CHECK(res.converged);
  CHECK(res.trace.records.size() == 1);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(Matrix(quad.instance().H));
  CHECK(res.loss == doctest::Approx(eig.eigenvalues().head(3).sum()).epsilon(1e-8));
  CHECK(res.residuals.feasibility == 0.0);
}

TEST_CASE("outer loop on small benchmark instances") {
  SUBCASE("compressed modes") {
    const CmProblem cm(build_cm(64, 0.1), 4);
    const AlmResult res = run_alm(cm, default_alm_config(cm), default_newton_config(cm), Seed{19});
    REQUIRE(res.converged);
    CHECK(res.residuals.feasibility <= 5e-7);
    CHECK(res.residuals.stationarity <= 5e-5);
    for (const auto& rec : res.trace.records) {
      CHECK(rec.identity_residual <= 1e-9 * (1.0 + rec.grad_f_norm));
      CHECK(rec.orthonormality <= 1e-12);
    }
    CHECK(res.loss == doctest::Approx(cm.loss(res.q.matrix())));
  }
  SUBCASE("constrained sparse PCA keeps complementarity") {
    const ConstrainedSpcaProblem cs(build_cspca(Seed{20}, 60, 0.3, 1e-3, 3, 50), 3);
    const AlmResult res = run_alm(cs, default_alm_config(cs), default_newton_config(cs), Seed{21});
    REQUIRE(res.converged);
    CHECK(res.residuals.inequality_violation <= 1e-8);
    for (const auto& rec : res.trace.records) {
      CHECK(rec.min_gamma >= 0.0);
      CHECK(rec.gamma_dot_z == 0.0);
    }
  }
  SUBCASE("same seed, same trajectory") {
    const CmProblem cm(build_cm(40, 0.1), 3);
    const auto a = run_alm(cm, default_alm_config(cm), default_newton_config(cm), Seed{22});
    const auto b = run_alm(cm, default_alm_config(cm), default_newton_config(cm), Seed{22});
    CHECK(a.q.matrix() == b.q.matrix());
    CHECK(a.trace.records.size() == b.trace.records.size());
  }
}

TEST_CASE("observer and penalty hold") {
  const CmProblem cm(build_cm(64, 0.1), 4);
  AlmConfig cfg = default_alm_config(cm);
  std::vector<OuterRecord> seen;
  cfg.observer = [&](const OuterRecord& r) { seen.push_back(r); };
  const AlmResult held = run_alm(cm, cfg, default_newton_config(cm), Seed{30});
  REQUIRE(seen.size() == held.trace.records.size());
  for (std::size_t i = 0; i < seen.size(); ++i) CHECK(seen[i].iter == held.trace.records[i].iter);

  // Sigma only moves after an iteration that missed the feasibility target
  // or tripped the crosscheck.
  const auto& recs = held.trace.records;
  for (std::size_t i = 0; i + 1 < recs.size(); ++i) {
    const bool crosscheck = recs[i].feas > *cfg.penalty_crosscheck * recs[i].stat;
    if (recs[i].feas <= cfg.feas_tol && !crosscheck) CHECK(recs[i + 1].sigma == recs[i].sigma);
    CHECK(recs[i + 1].sigma >= recs[i].sigma);
  }

  // With the hold off the plain rule applies: a stalled delta raises sigma.
  cfg.observer = nullptr;
  cfg.hold_penalty_when_feasible = false;
  const AlmResult plain = run_alm(cm, cfg, default_newton_config(cm), Seed{30});
  const auto& pr = plain.trace.records;
  for (std::size_t i = 1; i + 1 < pr.size(); ++i) {
    if (pr[i].delta > cfg.tau * pr[i - 1].delta) CHECK(pr[i + 1].sigma > pr[i].sigma);
  }
}

TEST_CASE("configuration") {
  const CmProblem cm(build_cm(20, 0.1), 2);
  AlmConfig cfg = default_alm_config(cm);
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.tau == 0.97);
  CHECK(default_alm_config(cm, ToleranceProfile::High).stat_tol == 5e-8);
  cfg.tau = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = AlmConfig{};
  cfg.rho = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  const SpcaProblem sp(build_spca(Seed{23}, 60, 0.5, 20), 3);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sp.instance().M);
  CHECK(default_alm_config(sp).sigma0 == doctest::Approx(3.0 * eig.eigenvalues().maxCoeff()));
  CHECK(default_newton_config(sp).cg_max_iters == 300);
  const ConstrainedSpcaProblem cs(build_cspca(Seed{24}, 60, 0.3, 1e-3, 3, 20), 3);
  CHECK(default_alm_config(cs).ineq_tol == 1e-8);
  CHECK(parse_tolerance_profile("high") == ToleranceProfile::High);
  CHECK_THROWS_AS((void)parse_tolerance_profile("loose"), std::invalid_argument);
}
