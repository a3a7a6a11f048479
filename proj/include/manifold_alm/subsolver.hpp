#pragma once

// Globalized semismooth Newton method for min_{Q in St(n,r)} phi(Q) with a
// locally Lipschitz gradient, warm-started by Riemannian Barzilai-Borwein
// gradient descent.

#include "manifold_alm/clarke.hpp"

#include <functional>
#include <limits>
#include <optional>
#include <vector>

namespace malm {

enum class LineSearch { LS1, LS2 };

[[nodiscard]] std::string_view to_string(LineSearch ls);
/// Accepts "ls1"/"ls-i" and "ls2"/"ls-ii".
[[nodiscard]] LineSearch parse_linesearch(std::string_view name);

/// omega_k = ||X||^nu_bar (PaperPower) or min{c1^k, c2 ||X||} (ExperimentMin),
/// with k the Newton iteration index inside the current subproblem.
struct OmegaSchedule {
  enum class Kind { PaperPower, ExperimentMin } kind = Kind::ExperimentMin;
  double c1 = 0.7;
  double c2 = 200.0;
};

struct NewtonConfig {
  double mu_ls = 0.1;       // Armijo / residual-decrease constant, in (0, 1/2)
  double delta_ls = 0.5;    // backtracking ratio, in (0, 1)
  double nu_bar = 1.0;      // in (0, 1]
  double beta0 = 1.0;       // sufficient-descent test
  double beta1 = 1e-3;
  double p_exp = 0.05;
  int m_max = 13;           // LS-II cap; 0.5^13 is the last step >= min_step
  double min_step = 1e-4;
  double eta0 = 0.1;        // eta_k = eta0 * eta_rate^k
  double eta_rate = 0.9;
  int cg_max_iters = 1000;
  int max_cg_restarts = 10;
  OmegaSchedule omega;
  double omega_floor = 1e-12;
  LineSearch linesearch = LineSearch::LS1;
  RetractionKind retraction = RetractionKind::QR;
  double delta_G = 5e-4;    // Newton phase starts once ||grad|| < delta_G
  double max_direction_norm = 1e4;
  int newton_shrink_after = 10;

  // First-order phase: BB steps with nonmonotone Armijo backtracking.
  int first_order_max_iters = 1000;
  double bb_initial_step = 1e-2;
  double bb_backtrack = 0.5;
  double bb_armijo = 1e-4;
  int bb_memory = 5;

  // Overall budget of one subproblem solve.
  int max_newton_iters = 200;
  /// Newton steps taken with ||grad|| >= delta_G (after the first-order
  /// budget ran out) give up after this many in a row that fail to lower
  /// ||grad||.
  int max_stagnant_newton = 10;
  int max_first_order_rounds = 20;

  bool probe_min_eigenvalue = false;
  double probe_tol = 1e-6;

  /// Throws std::invalid_argument when a parameter is out of range.
  void validate() const;
};

/// The smooth subproblem as seen by the solver.
class NewtonModel {
 public:
  struct Evaluation {
    double value = 0.0;
    TangentVector gradient;
  };

  virtual ~NewtonModel() = default;
  [[nodiscard]] virtual Evaluation evaluate(const StiefelPoint& q) const = 0;
  [[nodiscard]] virtual double value(const StiefelPoint& q) const { return evaluate(q).value; }
  [[nodiscard]] virtual ClarkeElement generalized_hessian(const StiefelPoint& q,
                                                          const DirectionSample& sample) const = 0;
};

// --- Conjugate gradient -----------------------------------------------------

using TangentOperator = std::function<TangentVector(const TangentVector&)>;

enum class CgStatus { Converged, NegativeCurvature, MaxIters };

struct CgResult {
  TangentVector v;
  CgStatus status = CgStatus::MaxIters;
  /// Direction p with <(H + omega I) p, p> <= 0 when status is NegativeCurvature.
  std::optional<TangentVector> negative_direction;
  int iterations = 0;
  double residual = 0.0;  // ||(H + omega I) v + X||
};

/// CG on (H + omega I) V = -X in T_Q St(n, r), started from V = 0. Converged
/// means the true residual is <= tol.
[[nodiscard]] CgResult cg_regularized(const TangentOperator& apply_h, const TangentVector& x,
                                      double omega, double tol, int max_iters);

// --- Line searches ----------------------------------------------------------

/// <-X, V> >= min{beta0, beta1 ||V||^p} ||V||^2.
[[nodiscard]] bool is_sufficient_descent(const TangentVector& x, const TangentVector& v,
                                         const NewtonConfig& cfg);

struct ArmijoResult {
  int m = 0;
  std::optional<StiefelPoint> q_next;  // empty on underflow
  TangentVector v_used;
  bool step_underflow = false;
  bool replaced_by_gradient = false;
};

/// LS-I: replaces V by -X unless it is a sufficient descent direction, then
/// takes the smallest m with phi(R(delta^m V)) <= phi(Q) + mu delta^m <X, V>
/// subject to delta^m >= min_step.
[[nodiscard]] ArmijoResult ls_armijo(const std::function<double(const StiefelPoint&)>& phi,
                                     const StiefelPoint& q, const TangentVector& x,
                                     const TangentVector& v, const NewtonConfig& cfg,
                                     std::optional<double> phi_at_q = std::nullopt);

struct ResidualResult {
  int m = 0;
  StiefelPoint q_next;
  bool found = false;  // false when m = m_max was forced
};

/// LS-II: smallest m <= m_max with ||X(R(delta^m V))|| <= (1 - 2 mu delta^m) ||X||;
/// falls back to m = m_max and takes that step.
[[nodiscard]] ResidualResult ls_residual(
    const std::function<TangentVector(const StiefelPoint&)>& gradient_at, const StiefelPoint& q,
    const TangentVector& x, const TangentVector& v, const NewtonConfig& cfg);

// --- First-order phase ------------------------------------------------------

struct FirstOrderResult {
  StiefelPoint q;
  int iterations = 0;
  double value = 0.0;
  double grad_norm = 0.0;
  /// Smallest objective value seen after each iteration (index 0: start).
  std::vector<double> best_values;
};

/// Riemannian gradient descent with alternating BB step sizes and
/// nonmonotone Armijo backtracking. Stops once ||grad|| < target.
[[nodiscard]] FirstOrderResult first_order_phase(const NewtonModel& model, const StiefelPoint& q0,
                                                 double target, int max_iters,
                                                 const NewtonConfig& cfg);

// --- Subproblem driver -------------------------------------------------------

struct IterationRecord {
  double grad_norm = 0.0;  // before the step
  double grad_norm_after = 0.0;
  int step_exponent = -1;  // m_k; -1 for first-order phases and rejected steps
  int cg_iters = 0;
  bool used_first_order = false;
  bool negative_curvature = false;
  bool step_underflow = false;
  int first_order_iters = 0;
  double value = 0.0;  // after the step
  double min_eigenvalue = std::numeric_limits<double>::quiet_NaN();
};

struct SubsolverTrace {
  std::vector<IterationRecord> records;
  bool converged = false;
  int newton_iters = 0;
  int first_order_iters = 0;
  int cg_iters = 0;
};

struct SubproblemResult {
  StiefelPoint q;
  double value = 0.0;
  double grad_norm = 0.0;
  SubsolverTrace trace;
  /// delta_G after the adaptations made during this solve.
  double delta_G = 0.0;
};

/// Drives ||grad phi|| below eps_k, keeping phi <= phi_bound at return.
/// `delta_G` overrides cfg.delta_G so the threshold can be carried across
/// subproblems.
[[nodiscard]] SubproblemResult solve_subproblem(const NewtonModel& model, const StiefelPoint& q0,
                                                double eps_k, double phi_bound,
                                                const NewtonConfig& cfg, Seed seed,
                                                std::optional<double> delta_G = std::nullopt);

}  // namespace malm
