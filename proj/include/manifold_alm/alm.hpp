#pragma once

// Outer augmented Lagrangian loop for
//   min f(Q) + mu ||y||_1  s.t.  Q = y,  h2(Q) = z,  z <= 0,  Q in St(n, r).

#include "manifold_alm/problems.hpp"
#include "manifold_alm/subsolver.hpp"

#include <functional>
#include <limits>
#include <optional>
#include <vector>

namespace malm {

/// Subproblem objective
///   L(Q) = f(Q) + env_l1(Q + lambda/sigma) + env_ind(h2(Q) + gamma/sigma)
/// for fixed multipliers and penalty.
class AugmentedLagrangian final : public NewtonModel {
 public:
  /// Everything derived from one evaluation at Q.
  struct Parts {
    double value = 0.0;
    double smooth_value = 0.0;
    Matrix smooth_grad;     // Euclidean gradient of f
    Matrix l1_weight;       // sigma (x - prox(x)), x = Q + lambda/sigma
    Vector ineq_weight;     // sigma max(h2 + gamma/sigma, 0)
    Matrix euclidean_grad;  // smooth_grad + l1_weight + h2_adjoint(ineq_weight)
    Matrix y;               // prox_l1(Q + lambda/sigma)
    Vector z;               // min(h2 + gamma/sigma, 0)
    Vector h2;
  };

  /// The problem must outlive this object.
  AugmentedLagrangian(const ProblemOracle& problem, Matrix lambda, Vector gamma, double sigma);

  [[nodiscard]] Parts parts(const Matrix& q) const;
  [[nodiscard]] Evaluation evaluate(const StiefelPoint& q) const override;
  [[nodiscard]] double value(const StiefelPoint& q) const override;
  [[nodiscard]] ClarkeElement generalized_hessian(const StiefelPoint& q,
                                                  const DirectionSample& sample) const override;
  /// Same operator with masks decided without a direction (E = 1 and a = 1 on
  /// the kinks); used at points where L is twice differentiable.
  [[nodiscard]] ClarkeElement generalized_hessian(const StiefelPoint& q) const;

  /// (||lambda||² + ||gamma||²) / (2 sigma): L minus this equals the split
  /// Lagrangian minimized over y and z.
  [[nodiscard]] double multiplier_shift() const;

  [[nodiscard]] const ProblemOracle& problem() const noexcept { return *problem_; }
  [[nodiscard]] double sigma() const noexcept { return sigma_; }

 private:
  [[nodiscard]] ClarkeElement build_hessian(const StiefelPoint& q, const DirectionSample* sample) const;

  const ProblemOracle* problem_;
  Matrix lambda_;
  Vector gamma_;
  double sigma_;
};

struct MultiplierState {
  Matrix lambda;  // n x r, multiplier of Q = y
  Vector gamma;   // length q, multiplier of h2(Q) = z
  double sigma = 1.0;
  double delta_prev = std::numeric_limits<double>::infinity();
  double phi_bound = 0.0;
  StiefelPoint x_feas;
};

/// lambda = 0, gamma = 0, phi_bound = 0 (set by compute_phi_bound).
[[nodiscard]] MultiplierState initial_state(const ProblemOracle& problem, StiefelPoint x_feas,
                                            double sigma0);

/// eps_k = max(floor, min(base^k, delta_factor * Delta_{k-1})); a
/// non-positive delta_factor drops the second term. Delta_0 = +inf.
struct EpsSchedule {
  double base = 0.95;
  double delta_factor = 5.0;
  double floor = 1e-10;
  [[nodiscard]] double at(int k, double previous_feasibility) const;
};

struct OuterRecord;

enum class ToleranceProfile { Standard, High };

[[nodiscard]] std::string_view to_string(ToleranceProfile p);
[[nodiscard]] ToleranceProfile parse_tolerance_profile(std::string_view name);

struct AlmConfig {
  double tau = 0.97;
  double rho = 1.25;
  double alpha_exp = 1.01;
  double sigma0 = 1.0;
  EpsSchedule eps;
  double feas_tol = 5e-7;
  double stat_tol = 5e-5;
  /// Extra bound on ||max(h2, 0)||_inf at termination.
  double ineq_tol = std::numeric_limits<double>::infinity();
  int max_outer = 500;
  /// Raise sigma when Delta_k > crosscheck * Gamma_k; empty disables.
  std::optional<double> penalty_crosscheck = 2.5;
  /// Keep the adapted Newton threshold from one subproblem to the next.
  bool carry_delta_G = true;
  /// Skip the penalty increase while the scaled feasibility already meets
  /// feas_tol (and ineq_tol). Near rounding level delta_k cannot shrink by
  /// tau, and raising sigma then only spoils the subproblem conditioning.
  bool hold_penalty_when_feasible = true;
  /// Called after every outer iteration with its record; may be empty.
  std::function<void(const OuterRecord&)> observer;

  void validate() const;
};

/// Parameters used for each benchmark family (sigma0 for SPCA depends on the
/// data, hence the problem argument).
[[nodiscard]] AlmConfig default_alm_config(const ProblemOracle& problem,
                                           ToleranceProfile profile = ToleranceProfile::Standard);
[[nodiscard]] NewtonConfig default_newton_config(const ProblemOracle& problem);

/// max{f(x_feas) + mu ||x_feas||_1, L_sigma0(x0, y0, z0, lambda0, gamma0)}.
/// Throws std::invalid_argument if h2(x_feas) has a positive entry.
[[nodiscard]] double compute_phi_bound(const ProblemOracle& problem, const StiefelPoint& x0,
                                       const MultiplierState& state0);

/// lambda += sigma (h1x - y), gamma += sigma (h2x - z). Entries of gamma
/// where z < 0 are set to 0 and the rest clamped at 0, which the exact
/// update satisfies up to rounding.
[[nodiscard]] MultiplierState update_multipliers(MultiplierState state, const Matrix& h1x,
                                                 const Matrix& y, const Vector& h2x,
                                                 const Vector& z);

/// Keeps sigma iff delta_k <= tau * delta_prev and the crosscheck did not
/// fire; otherwise sigma = max{rho sigma, ||lambda||^(1+alpha), ||gamma||^(1+alpha)}.
[[nodiscard]] MultiplierState update_penalty(MultiplierState state, double delta_k,
                                             const AlmConfig& cfg, bool crosscheck_fired);

struct KktResiduals {
  double feasibility = 0.0;
  double stationarity = 0.0;
  double inequality_violation = 0.0;  // ||max(h2(Q), 0)||_inf
};

/// Residuals at (Q, R, Lambda) for the split problem, plus the inequality
/// block (z, gamma) when the problem has one.
[[nodiscard]] KktResiduals kkt_residuals_at(const ProblemOracle& problem, const StiefelPoint& q,
                                            const Matrix& r, const Matrix& lambda,
                                            const Vector& z, const Vector& gamma);

/// Residuals with R and z from the prox/projection updates and the updated
/// multipliers, as after an outer iteration with state (lambda_k, sigma_k).
[[nodiscard]] KktResiduals kkt_residuals(const ProblemOracle& problem, const StiefelPoint& q,
                                         const MultiplierState& state);

struct OuterRecord {
  int iter = 0;
  double sigma = 0.0;  // penalty used in this subproblem
  double eps = 0.0;
  double delta = 0.0;  // max{||Q - y||_2, ||h2 - z||_2}
  double feas = 0.0;
  double stat = 0.0;
  double ineq = 0.0;
  double loss = 0.0;
  bool newton_active = false;
  int cg_iters = 0;
  int newton_iters = 0;
  int first_order_iters = 0;
  bool subproblem_converged = false;
  bool restarted_from_feasible = false;
  double subproblem_grad_norm = 0.0;
  double orthonormality = 0.0;
  /// ||grad L - P_Q(grad f + lambda_{k+1} + h2_adjoint(gamma_{k+1}))||_F.
  double identity_residual = 0.0;
  double grad_f_norm = 0.0;  // ||P_Q grad f||_F
  double min_gamma = 0.0;
  double gamma_dot_z = 0.0;
  double wall_time = 0.0;  // seconds since the start of the run
  SubsolverTrace subsolver;
};

struct AlmTrace {
  std::vector<OuterRecord> records;
};

struct AlmResult {
  StiefelPoint q;
  MultiplierState state;
  AlmTrace trace;
  bool converged = false;
  KktResiduals residuals;
  double loss = 0.0;
};

/// Runs the outer loop from x0 (a seeded random point unless given).
[[nodiscard]] AlmResult run_alm(const ProblemOracle& problem, const AlmConfig& cfg,
                                const NewtonConfig& newton_cfg, Seed seed,
                                std::optional<StiefelPoint> x0 = std::nullopt);

}  // namespace malm
