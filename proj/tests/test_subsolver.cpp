#include "manifold_alm/alm.hpp"
#include "manifold_alm/subsolver.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <cmath>

using namespace malm;
using malm::testing::dense_tangent_operator;
using malm::testing::random_tangent;

namespace {

/// phi(Q) = Q_11 on the circle St(2, 1).
class FirstEntry final : public NewtonModel {
 public:
  Evaluation evaluate(const StiefelPoint& q) const override {
    return {q.matrix()(0, 0), project_tangent(q, unit(q))};
  }
  ClarkeElement generalized_hessian(const StiefelPoint& q, const DirectionSample&) const override {
    return ClarkeElement(q, unit(q), [](const Matrix& w) { return Matrix(Matrix::Zero(w.rows(), w.cols())); }, 1.0);
  }

 private:
  static Matrix unit(const StiefelPoint& q) {
    Matrix e = Matrix::Zero(q.n(), q.r());
    e(0, 0) = 1.0;
    return e;
  }
};

StiefelPoint circle_point(double a, double b) {
  Matrix m(2, 1);
  m << a, b;
  return StiefelPoint(m);
}

TangentVector scaled_identity_solve(const TangentVector& x, double scale) { return (-1.0 / scale) * x; }

}  // namespace

TEST_CASE("CG on the regularized system") {
  const StiefelPoint q = random_point(Seed{1}, 10, 2);
  const TangentVector x = random_tangent(q, Seed{2});

  SUBCASE("zero operator is solved in one iteration") {
    const TangentOperator zero = [](const TangentVector& w) { return TangentVector::zero(w.base()); };
    const CgResult res = cg_regularized(zero, x, 1.0, 1e-12, 10);
    CHECK(res.status == CgStatus::Converged);
    CHECK(res.iterations == 1);
    CHECK((res.v.matrix() + x.matrix()).norm() <= 1e-14);
  }
  SUBCASE("one-dimensional tangent space") {
    const StiefelPoint c = circle_point(0.6, 0.8);
    const TangentVector g = project_tangent(c, Matrix::Constant(2, 1, 1.0));
    const double h = 3.0;
    const TangentOperator op = [h](const TangentVector& w) { return h * w; };
    const CgResult res = cg_regularized(op, g, 0.5, 1e-14, 5);
    CHECK(res.status == CgStatus::Converged);
    CHECK((res.v.matrix() - scaled_identity_solve(g, h + 0.5).matrix()).norm() <= 1e-14);
  }
  SUBCASE("random SPD operator against a dense solve") {
    const TangentBasis basis(q);
    const Eigen::Index d = basis.dim();
    const Matrix g = gaussian_matrix(Seed{3}, d, d);
    const Matrix a = g * g.transpose() / static_cast<double>(d) + 0.1 * Matrix::Identity(d, d);
    const TangentOperator op = [&](const TangentVector& w) {
      return basis.from_coords(a * basis.to_coords(w));
    };
    const double omega = 0.3;
    const CgResult res = cg_regularized(op, x, omega, 1e-12, 200);
    REQUIRE(res.status == CgStatus::Converged);
    const Vector direct = (a + omega * Matrix::Identity(d, d)).ldlt().solve(-basis.to_coords(x));
    CHECK((basis.to_coords(res.v) - direct).norm() <= 1e-8);
    CHECK(res.residual <= 1e-12);
    // Dense check of the residual contract.
    CHECK((op(res.v) + omega * res.v + x).norm() <= 1e-12);
  }
  SUBCASE("negative curvature is reported with its direction") {
    const TangentOperator op = [](const TangentVector& w) { return -2.0 * w; };
    const CgResult res = cg_regularized(op, x, 1.0, 1e-12, 50);
    REQUIRE(res.status == CgStatus::NegativeCurvature);
    const TangentVector& p = *res.negative_direction;
    CHECK(inner(op(p) + 1.0 * p, p) <= 0.0);
  }
  SUBCASE("iteration cap") {
    const TangentBasis basis(q);
    const Eigen::Index d = basis.dim();
    Vector spectrum = Vector::LinSpaced(d, 1.0, 1e4);
    const TangentOperator op = [&](const TangentVector& w) {
      return basis.from_coords(spectrum.cwiseProduct(basis.to_coords(w)));
    };
    const CgResult res = cg_regularized(op, x, 1e-3, 1e-14, 2);
    CHECK(res.status == CgStatus::MaxIters);
    CHECK(res.iterations == 2);
  }
}

TEST_CASE("Armijo line search") {
  NewtonConfig cfg;
  const FirstEntry model;
  const auto phi = [&](const StiefelPoint& p) { return model.value(p); };

  SUBCASE("circle example accepts the unit step") {
    const StiefelPoint q = circle_point(0.0, 1.0);
    const TangentVector x = model.evaluate(q).gradient;
    CHECK(x.matrix()(0, 0) == doctest::Approx(1.0));
    CHECK(x.matrix()(1, 0) == doctest::Approx(0.0));
    const ArmijoResult res = ls_armijo(phi, q, x, -x, cfg);
    CHECK(res.m == 0);
    CHECK_FALSE(res.replaced_by_gradient);
    REQUIRE(res.q_next);
    // Direct evaluation: qf((-1, 1)) = (-1, 1)/sqrt(2).
    CHECK(phi(*res.q_next) == doctest::Approx(-1.0 / std::sqrt(2.0)));
    CHECK(phi(*res.q_next) < phi(q) - 0.1);
  }
  SUBCASE("ascent directions are replaced by the negative gradient") {
    const StiefelPoint q = circle_point(0.6, 0.8);
    const TangentVector x = model.evaluate(q).gradient;
    const ArmijoResult res = ls_armijo(phi, q, x, x, cfg);
    CHECK(res.replaced_by_gradient);
    CHECK((res.v_used.matrix() + x.matrix()).norm() == 0.0);
    REQUIRE(res.q_next);
    CHECK(phi(*res.q_next) < phi(q));
  }
  SUBCASE("the accepted exponent is the smallest one") {
    const StiefelPoint q = circle_point(0.6, 0.8);
    const TangentVector x = model.evaluate(q).gradient;
    const TangentVector v = (-20.0) * x;  // overshoots badly at m = 0
    const ArmijoResult res = ls_armijo(phi, q, x, v, cfg);
    REQUIRE(res.q_next);
    for (int m = 0; m < res.m; ++m) {
      const double step = std::pow(cfg.delta_ls, m);
      const double trial = phi(retract(q, step * res.v_used, cfg.retraction));
      CHECK(trial > phi(q) + cfg.mu_ls * step * inner(x, res.v_used));
    }
  }
  SUBCASE("step underflow when no step decreases") {
    // phi tilted against the direction: every retraction increases it.
    const StiefelPoint q = circle_point(-1.0, 0.0);  // minimum of Q_11
    const TangentVector v(q, (Matrix(2, 1) << 0.0, 1.0).finished());
    const auto flat = [](const StiefelPoint& p) { return p.matrix()(1, 0) * p.matrix()(1, 0); };
    NewtonConfig loose = cfg;
    loose.beta1 = 1e-12;
    loose.beta0 = 1e-12;
    const TangentVector fake_grad(q, (Matrix(2, 1) << 0.0, -1.0).finished());
    const ArmijoResult res = ls_armijo(flat, q, fake_grad, v, loose);
    CHECK(res.step_underflow);
    CHECK_FALSE(res.q_next);
  }
}

TEST_CASE("residual line search") {
  NewtonConfig cfg;
  const FirstEntry model;
  const auto grad_at = [&](const StiefelPoint& p) { return model.evaluate(p).gradient; };

  SUBCASE("circle example matches enumeration") {
    const StiefelPoint q = circle_point(0.6, 0.8);
    const TangentVector x = model.evaluate(q).gradient;
    const TangentVector v = -x;
    const ResidualResult res = ls_residual(grad_at, q, x, v, cfg);
    int expected = cfg.m_max;
    bool expected_found = false;
    for (int m = 0; m <= cfg.m_max; ++m) {
      const double step = std::pow(cfg.delta_ls, m);
      if (grad_at(retract(q, step * v, cfg.retraction)).norm() <= (1.0 - 2.0 * cfg.mu_ls * step) * x.norm()) {
        expected = m;
        expected_found = true;
        break;
      }
    }
    CHECK(res.m == expected);
    CHECK(res.found == expected_found);
  }
  SUBCASE("a step that halves the residual is accepted at once") {
    // Towards the minimum (-1, 0) the gradient norm |Q_21| shrinks.
    const StiefelPoint q = circle_point(-0.6, 0.8);
    const TangentVector x = model.evaluate(q).gradient;
    TangentVector v = -x;
    const ResidualResult res = ls_residual(grad_at, q, x, v, cfg);
    CHECK(grad_at(res.q_next).norm() <= 0.5 * x.norm());
    CHECK(res.m == 0);
  }
  SUBCASE("no decrease forces m_max and the step is still taken") {
    const StiefelPoint q = circle_point(-0.6, 0.8);
    const TangentVector x = model.evaluate(q).gradient;
    const TangentVector v = x;  // towards the maximum, where |grad| grows first
    const ResidualResult res = ls_residual(grad_at, q, x, v, cfg);
    CHECK(res.m == cfg.m_max);
    CHECK_FALSE(res.found);
    const StiefelPoint expected = retract(q, std::pow(cfg.delta_ls, cfg.m_max) * v, cfg.retraction);
    CHECK((res.q_next.matrix() - expected.matrix()).norm() == 0.0);
  }
}

TEST_CASE("first-order phase") {
  const CmProblem quad(build_cm(50, 0.0), 3);
  const AugmentedLagrangian lk(quad, Matrix::Zero(50, 3), Vector(0), 1.0);
  NewtonConfig cfg;

  SUBCASE("start already below target") {
    const StiefelPoint q = random_point(Seed{5}, 50, 3);
    const FirstOrderResult res = first_order_phase(lk, q, 1e6, 100, cfg);
    CHECK(res.iterations == 0);
    CHECK(res.q.same_point(q));
  }
  SUBCASE("quadratic reaches the eigenvalue sum") {
    const StiefelPoint q = random_point(Seed{6}, 50, 3);
    const FirstOrderResult res = first_order_phase(lk, q, 1e-5, 5000, cfg);
    CHECK(res.grad_norm < 1e-5);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(Matrix(quad.instance().H));
    const double oracle = eig.eigenvalues().head(3).sum();
    CHECK(std::abs(res.value - oracle) <= 1e-6);
    for (std::size_t i = 1; i < res.best_values.size(); ++i) {
      CHECK(res.best_values[i] <= res.best_values[i - 1]);
    }
  }
}

TEST_CASE("subproblem solves") {
  NewtonConfig cfg;
  SUBCASE("large tolerance returns the start point") {
    const CmProblem cm(build_cm(30, 0.1), 2);
    const AugmentedLagrangian lk(cm, Matrix::Zero(30, 2), Vector(0), 1.0);
    const StiefelPoint q = random_point(Seed{7}, 30, 2);
    const SubproblemResult res = solve_subproblem(lk, q, 1e6, 1e9, cfg, Seed{8});
    CHECK(res.q.same_point(q));
    CHECK(res.trace.converged);
    CHECK(res.trace.records.empty());
  }

  const CmProblem cm(build_cm(200, 0.05), 10);
  const AugmentedLagrangian lk(cm, Matrix::Zero(200, 10), Vector(0), 5.0);
  const StiefelPoint q0 = random_point(Seed{9}, 200, 10);
  const double phi = lk.value(q0);

  for (LineSearch ls : {LineSearch::LS1, LineSearch::LS2}) {
    CAPTURE(to_string(ls));
    NewtonConfig c = cfg;
    c.linesearch = ls;
    const SubproblemResult res = solve_subproblem(lk, q0, 1e-7, phi, c, Seed{10});
    CHECK(res.trace.converged);
    CHECK(res.grad_norm < 1e-7);
    CHECK(res.value <= phi);
    CHECK(res.trace.newton_iters >= 2);

    // The Newton tail: unit steps and decreasing residual ratios.
    std::vector<const IterationRecord*> newton;
    for (const auto& r : res.trace.records) {
      if (!r.used_first_order && !r.step_underflow) newton.push_back(&r);
    }
    REQUIRE(newton.size() >= 2);
    CHECK(newton.back()->step_exponent == 0);
    CHECK(newton[newton.size() - 2]->step_exponent == 0);
    if (newton.size() >= 3) {
      std::vector<double> ratios;
      for (std::size_t i = newton.size() - 3; i < newton.size(); ++i) {
        ratios.push_back(newton[i]->grad_norm_after / newton[i]->grad_norm);
      }
      CHECK(ratios[1] < ratios[0]);
      CHECK(ratios[2] < ratios[1]);
    }

    if (ls == LineSearch::LS1) {
      for (std::size_t i = 1; i < res.trace.records.size(); ++i) {
        CHECK(res.trace.records[i].value <= res.trace.records[i - 1].value);
      }
    }

    const SubproblemResult again = solve_subproblem(lk, q0, 1e-7, phi, c, Seed{10});
    CHECK(again.q.matrix() == res.q.matrix());
    CHECK(again.trace.records.size() == res.trace.records.size());
  }
}

TEST_CASE("sufficient descent test") {
  NewtonConfig cfg;
  const StiefelPoint q = random_point(Seed{11}, 6, 2);
  const TangentVector x = random_tangent(q, Seed{12});
  CHECK(is_sufficient_descent(x, -x, cfg));
  CHECK_FALSE(is_sufficient_descent(x, x, cfg));
  CHECK_FALSE(is_sufficient_descent(x, TangentVector::zero(q), cfg));
}

TEST_CASE("configuration checks") {
  NewtonConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.mu_ls = 0.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = NewtonConfig{};
  cfg.delta_ls = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = NewtonConfig{};
  cfg.nu_bar = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = NewtonConfig{};
  cfg.max_stagnant_newton = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  CHECK(parse_linesearch("ls-ii") == LineSearch::LS2);
  CHECK_THROWS_AS((void)parse_linesearch("wolfe"), std::invalid_argument);
}
