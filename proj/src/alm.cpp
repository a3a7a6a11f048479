#include "manifold_alm/alm.hpp"

#include "manifold_alm/moreau.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

namespace malm {

namespace {

double inf_norm(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }
double inf_norm(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

}  // namespace

// --- Subproblem objective ---------------------------------------------------------

AugmentedLagrangian::AugmentedLagrangian(const ProblemOracle& problem, Matrix lambda, Vector gamma,
                                         double sigma)
    : problem_(&problem), lambda_(std::move(lambda)), gamma_(std::move(gamma)), sigma_(sigma) {
  if (!(sigma_ > 0.0)) throw std::invalid_argument("AugmentedLagrangian: sigma must be positive");
  if (lambda_.rows() != problem.n() || lambda_.cols() != problem.r()) {
    throw std::invalid_argument("AugmentedLagrangian: lambda must be n x r");
  }
  if (gamma_.size() != problem.num_inequalities()) {
    throw std::invalid_argument("AugmentedLagrangian: gamma has the wrong length");
  }
}

AugmentedLagrangian::Parts AugmentedLagrangian::parts(const Matrix& q) const {
  Parts p;
  auto smooth = problem_->smooth_value_and_grad(q);
  p.smooth_value = smooth.value;
  p.smooth_grad = std::move(smooth.gradient);

  EnvelopeResult l1 = env_l1(q + lambda_ / sigma_, problem_->mu(), sigma_);
  p.l1_weight = std::move(l1.gradient);
  p.y = std::move(l1.prox_point);
  p.value = p.smooth_value + l1.value;
  p.euclidean_grad = p.smooth_grad + p.l1_weight;

  if (problem_->num_inequalities() > 0) {
    p.h2 = problem_->h2(q);
    EnvelopeResult ind = env_indicator_nonpositive(p.h2 + gamma_ / sigma_, sigma_);
    p.ineq_weight = ind.gradient.col(0);
    p.z = ind.prox_point.col(0);
    p.value += ind.value;
    p.euclidean_grad += problem_->h2_adjoint(q, p.ineq_weight);
  } else {
    p.h2 = Vector(0);
    p.ineq_weight = Vector(0);
    p.z = Vector(0);
  }
  return p;
}

NewtonModel::Evaluation AugmentedLagrangian::evaluate(const StiefelPoint& q) const {
  Parts p = parts(q.matrix());
  return {p.value, project_tangent(q, p.euclidean_grad)};
}

double AugmentedLagrangian::value(const StiefelPoint& q) const {
  const Matrix& qm = q.matrix();
  double v = problem_->smooth_value(qm) + env_l1(qm + lambda_ / sigma_, problem_->mu(), sigma_).value;
  if (problem_->num_inequalities() > 0) {
    v += env_indicator_nonpositive(problem_->h2(qm) + gamma_ / sigma_, sigma_).value;
  }
  return v;
}

ClarkeElement AugmentedLagrangian::generalized_hessian(const StiefelPoint& q,
                                                       const DirectionSample& sample) const {
  return build_hessian(q, &sample);
}

ClarkeElement AugmentedLagrangian::generalized_hessian(const StiefelPoint& q) const {
  return build_hessian(q, nullptr);
}

ClarkeElement AugmentedLagrangian::build_hessian(const StiefelPoint& q,
                                                 const DirectionSample* sample) const {
  const Matrix& qm = q.matrix();
  const Parts p = parts(qm);
  const double mu = problem_->mu();
  Matrix mask = mu > 0.0 ? l1_envelope_mask(qm + lambda_ / sigma_, mu / sigma_, sample)
                         : Matrix::Zero(qm.rows(), qm.cols());

  Vector activity(0);
  if (problem_->num_inequalities() > 0) {
    const Vector slack = p.h2 + gamma_ / sigma_;
    if (sample != nullptr) {
      const Vector dir = problem_->h2_directional(qm, sample->direction.matrix());
      activity = inequality_activity(slack, &dir);
    } else {
      activity = inequality_activity(slack);
    }
  }

  const ProblemOracle* problem = problem_;
  const double sigma = sigma_;
  Vector beta = p.ineq_weight;
  EuclideanHessVec hv = [problem, sigma, qm, mask, activity, beta](const Matrix& w) {
    Matrix out = problem->euclidean_hessvec_smooth(qm, w);
    out.array() += sigma * mask.array() * w.array();
    if (problem->num_inequalities() > 0) {
      out += problem->h2_hessvec(qm, beta, w);
      const Vector d = problem->h2_directional(qm, w);
      out += problem->h2_adjoint(qm, sigma * activity.cwiseProduct(d));
    }
    return out;
  };
  return ClarkeElement(q, p.euclidean_grad, std::move(hv), sigma_, std::move(mask),
                       std::move(activity));
}

double AugmentedLagrangian::multiplier_shift() const {
  return (lambda_.squaredNorm() + gamma_.squaredNorm()) / (2.0 * sigma_);
}

// --- State and configuration -------------------------------------------------------------

MultiplierState initial_state(const ProblemOracle& problem, StiefelPoint x_feas, double sigma0) {
  if (!(sigma0 > 0.0)) throw std::invalid_argument("initial_state: sigma0 must be positive");
  return MultiplierState{Matrix::Zero(problem.n(), problem.r()),
                         Vector::Zero(problem.num_inequalities()),
                         sigma0,
                         std::numeric_limits<double>::infinity(),
                         0.0,
                         std::move(x_feas)};
}

double EpsSchedule::at(int k, double previous_feasibility) const {
  double eps = std::pow(base, k);
  if (delta_factor > 0.0) eps = std::min(eps, delta_factor * previous_feasibility);
  return std::max(eps, floor);
}

std::string_view to_string(ToleranceProfile p) {
  return p == ToleranceProfile::Standard ? "standard" : "high";
}

ToleranceProfile parse_tolerance_profile(std::string_view name) {
  if (name == "standard") return ToleranceProfile::Standard;
  if (name == "high") return ToleranceProfile::High;
  throw std::invalid_argument("unknown tolerance profile '" + std::string(name) + "'");
}

void AlmConfig::validate() const {
  auto fail = [](const char* what) { throw std::invalid_argument(std::string("AlmConfig: ") + what); };
  if (!(tau > 0.0 && tau < 1.0)) fail("tau must lie in (0, 1)");
  if (!(rho > 1.0)) fail("rho must exceed 1");
  if (!(alpha_exp > 0.0)) fail("alpha_exp must be positive");
  if (!(sigma0 > 0.0)) fail("sigma0 must be positive");
  if (!(eps.base > 0.0 && eps.base < 1.0) || !(eps.floor > 0.0)) fail("eps schedule");
  if (!(feas_tol > 0.0) || !(stat_tol > 0.0) || !(ineq_tol > 0.0)) fail("tolerances must be positive");
  if (max_outer < 1) fail("max_outer must be positive");
  if (penalty_crosscheck && !(*penalty_crosscheck > 0.0)) fail("penalty_crosscheck must be positive");
}

AlmConfig default_alm_config(const ProblemOracle& problem, ToleranceProfile profile) {
  AlmConfig cfg;
  const std::string_view name = problem.name();
  if (name == "spca") {
    cfg.tau = 0.99;
    cfg.eps = {0.9, 0.0, 1e-10};
    const auto& inst = dynamic_cast<const SpcaProblem&>(problem).instance();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(inst.M, Eigen::EigenvaluesOnly);
    cfg.sigma0 = 3.0 * eig.eigenvalues().maxCoeff();
  } else if (name == "cspca") {
    cfg.tau = 0.25;
    cfg.rho = 10.0;
    cfg.eps = {0.1, 0.0, 1e-10};
    cfg.ineq_tol = 1e-8;
  }
  if (profile == ToleranceProfile::High) {
    cfg.feas_tol = 5e-8;
    cfg.stat_tol = 5e-8;
  }
  return cfg;
}

NewtonConfig default_newton_config(const ProblemOracle& problem) {
  NewtonConfig cfg;
  const std::string_view name = problem.name();
  if (name == "spca") {
    cfg.cg_max_iters = 300;
    cfg.first_order_max_iters = 300;
  } else if (name == "cspca") {
    cfg.first_order_max_iters = 2000;
  }
  return cfg;
}

// --- Outer-loop pieces ----------------------------------------------------------------

double compute_phi_bound(const ProblemOracle& problem, const StiefelPoint& x0,
                         const MultiplierState& state0) {
  const Matrix& feas = state0.x_feas.matrix();
  if (problem.num_inequalities() > 0 && (problem.h2(feas).array() > 0.0).any()) {
    throw std::invalid_argument("compute_phi_bound: x_feas violates the inequality constraints");
  }
  const AugmentedLagrangian lk(problem, state0.lambda, state0.gamma, state0.sigma);
  const double at_start = lk.value(x0) - lk.multiplier_shift();
  return std::max(problem.loss(feas), at_start);
}

MultiplierState update_multipliers(MultiplierState state, const Matrix& h1x, const Matrix& y,
                                   const Vector& h2x, const Vector& z) {
  if (h1x.rows() != state.lambda.rows() || h1x.cols() != state.lambda.cols() ||
      y.rows() != h1x.rows() || y.cols() != h1x.cols()) {
    throw std::invalid_argument("update_multipliers: h1 block shape mismatch");
  }
  if (h2x.size() != state.gamma.size() || z.size() != state.gamma.size()) {
    throw std::invalid_argument("update_multipliers: h2 block size mismatch");
  }
  state.lambda += state.sigma * (h1x - y);
  state.gamma += state.sigma * (h2x - z);
  for (Eigen::Index i = 0; i < state.gamma.size(); ++i) {
    if (z(i) < 0.0 || state.gamma(i) < 0.0) state.gamma(i) = 0.0;
  }
  return state;
}

MultiplierState update_penalty(MultiplierState state, double delta_k, const AlmConfig& cfg,
                               bool crosscheck_fired) {
  if (!(delta_k >= 0.0)) throw std::invalid_argument("update_penalty: delta_k must be nonnegative");
  if (delta_k > cfg.tau * state.delta_prev || crosscheck_fired) {
    const double power = 1.0 + cfg.alpha_exp;
    state.sigma = std::max({cfg.rho * state.sigma, std::pow(state.lambda.norm(), power),
                            std::pow(state.gamma.norm(), power)});
  }
  state.delta_prev = delta_k;
  return state;
}

KktResiduals kkt_residuals_at(const ProblemOracle& problem, const StiefelPoint& q, const Matrix& r,
                              const Matrix& lambda, const Vector& z, const Vector& gamma) {
  const Matrix& qm = q.matrix();
  KktResiduals out;
  out.feasibility = inf_norm(Matrix(qm - r)) / (std::max(qm.norm(), r.norm()) + 1.0);

  Matrix egrad = problem.euclidean_grad_smooth(qm) + lambda;
  if (problem.num_inequalities() > 0) egrad += problem.h2_adjoint(qm, gamma);
  const double grad_term = inf_norm(project_tangent(q, egrad).matrix()) / (qm.norm() + 1.0);

  // Smallest element of mu d||R||_1 - Lambda, entrywise.
  const double mu = problem.mu();
  Matrix g(r.rows(), r.cols());
  for (Eigen::Index j = 0; j < r.cols(); ++j) {
    for (Eigen::Index i = 0; i < r.rows(); ++i) {
      const double l = lambda(i, j);
      if (r(i, j) == 0.0) {
        g(i, j) = std::max(std::abs(l) - mu, 0.0);
      } else {
        g(i, j) = std::abs((r(i, j) > 0.0 ? mu : -mu) - l);
      }
    }
  }
  out.stationarity = grad_term + inf_norm(g) / (r.norm() + 1.0);

  if (problem.num_inequalities() > 0) {
    const Vector h2 = problem.h2(qm);
    out.inequality_violation = h2.cwiseMax(0.0).maxCoeff();
    out.feasibility += out.inequality_violation;
    // Normal cone of {z <= 0} minus gamma.
    Vector gz(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      gz(i) = z(i) < 0.0 ? std::abs(gamma(i)) : std::max(-gamma(i), 0.0);
    }
    out.stationarity += inf_norm(gz) / (z.norm() + 1.0);
  }
  return out;
}

KktResiduals kkt_residuals(const ProblemOracle& problem, const StiefelPoint& q,
                           const MultiplierState& state) {
  const AugmentedLagrangian lk(problem, state.lambda, state.gamma, state.sigma);
  const auto p = lk.parts(q.matrix());
  const MultiplierState next = update_multipliers(state, q.matrix(), p.y, p.h2, p.z);
  return kkt_residuals_at(problem, q, p.y, next.lambda, p.z, next.gamma);
}

// --- Driver ------------------------------------------------------------------------------

AlmResult run_alm(const ProblemOracle& problem, const AlmConfig& cfg, const NewtonConfig& newton_cfg,
                  Seed seed, std::optional<StiefelPoint> x0) {
  cfg.validate();
  newton_cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  StiefelPoint x = x0 ? *x0 : random_point(seed.derive(0), problem.n(), problem.r());
  MultiplierState state = initial_state(problem, problem.feasible_point(x), cfg.sigma0);
  state.phi_bound = compute_phi_bound(problem, x, state);

  AlmResult result{x, state, {}, false, {}, problem.loss(x.matrix())};
  double delta_G = newton_cfg.delta_G;
  double previous_feas = std::numeric_limits<double>::infinity();

  for (int k = 1; k <= cfg.max_outer; ++k) {
    OuterRecord rec;
    rec.iter = k;
    rec.sigma = state.sigma;
    rec.eps = cfg.eps.at(k, previous_feas);

    const AugmentedLagrangian lk(problem, state.lambda, state.gamma, state.sigma);
    const double shift = lk.multiplier_shift();
    if (lk.value(x) - shift > state.phi_bound) {
      x = state.x_feas;
      rec.restarted_from_feasible = true;
    }

    SubproblemResult sub = solve_subproblem(lk, x, rec.eps, state.phi_bound + shift, newton_cfg,
                                            seed.derive(static_cast<std::uint64_t>(k)),
                                            cfg.carry_delta_G ? std::optional<double>(delta_G)
                                                              : std::nullopt);
    if (cfg.carry_delta_G) delta_G = sub.delta_G;
    x = sub.q;
    rec.subproblem_converged = sub.trace.converged;
    rec.subproblem_grad_norm = sub.grad_norm;
    rec.cg_iters = sub.trace.cg_iters;
    rec.newton_iters = sub.trace.newton_iters;
    rec.first_order_iters = sub.trace.first_order_iters;
    rec.newton_active = sub.trace.newton_iters > 0;
    rec.orthonormality = orthonormality_error(x.matrix());

    const auto parts = lk.parts(x.matrix());
    const MultiplierState next = update_multipliers(state, x.matrix(), parts.y, parts.h2, parts.z);

    // The subproblem gradient rebuilt from the updated multipliers.
    Matrix assembled = parts.smooth_grad + next.lambda;
    if (problem.num_inequalities() > 0) assembled += problem.h2_adjoint(x.matrix(), next.gamma);
    const TangentVector grad_lk = project_tangent(x, parts.euclidean_grad);
    rec.identity_residual = (grad_lk - project_tangent(x, assembled)).norm();
    rec.grad_f_norm = project_tangent(x, parts.smooth_grad).norm();
    rec.min_gamma = next.gamma.size() > 0 ? next.gamma.minCoeff() : 0.0;
    rec.gamma_dot_z = next.gamma.size() > 0 ? next.gamma.dot(parts.z) : 0.0;

    const KktResiduals res =
        kkt_residuals_at(problem, x, parts.y, next.lambda, parts.z, next.gamma);
    rec.feas = res.feasibility;
    rec.stat = res.stationarity;
    rec.ineq = res.inequality_violation;
    rec.loss = problem.loss(x.matrix());
    rec.delta = std::max((x.matrix() - parts.y).norm(), (parts.h2 - parts.z).norm());

    const bool crosscheck = cfg.penalty_crosscheck && res.feasibility > *cfg.penalty_crosscheck * res.stationarity;
    const bool feasible = res.feasibility <= cfg.feas_tol && res.inequality_violation <= cfg.ineq_tol;
    if (cfg.hold_penalty_when_feasible && feasible && !crosscheck) {
      state = std::move(next);
      state.delta_prev = rec.delta;
    } else {
      state = update_penalty(next, rec.delta, cfg, crosscheck);
    }
    previous_feas = res.feasibility;
    rec.wall_time = elapsed();
    rec.subsolver = std::move(sub.trace);
    if (cfg.observer) cfg.observer(rec);
    result.trace.records.push_back(std::move(rec));

    result.residuals = res;
    if (res.feasibility <= cfg.feas_tol && res.stationarity <= cfg.stat_tol &&
        res.inequality_violation <= cfg.ineq_tol) {
      result.converged = true;
      break;
    }
  }
  result.q = x;
  result.state = state;
  result.loss = problem.loss(x.matrix());
  return result;
}

}  // namespace malm
