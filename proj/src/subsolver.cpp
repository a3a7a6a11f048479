#include "manifold_alm/subsolver.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <string>

namespace malm {

std::string_view to_string(LineSearch ls) {
  return ls == LineSearch::LS1 ? "ls1" : "ls2";
}

LineSearch parse_linesearch(std::string_view name) {
  if (name == "ls1" || name == "ls-i" || name == "LS1" || name == "LS-I") return LineSearch::LS1;
  if (name == "ls2" || name == "ls-ii" || name == "LS2" || name == "LS-II") return LineSearch::LS2;
  throw std::invalid_argument("unknown line search '" + std::string(name) + "'");
}

void NewtonConfig::validate() const {
  auto fail = [](const char* what) { throw std::invalid_argument(std::string("NewtonConfig: ") + what); };
  if (!(mu_ls > 0.0 && mu_ls < 0.5)) fail("mu_ls must lie in (0, 0.5)");
  if (!(delta_ls > 0.0 && delta_ls < 1.0)) fail("delta_ls must lie in (0, 1)");
  if (!(nu_bar > 0.0 && nu_bar <= 1.0)) fail("nu_bar must lie in (0, 1]");
  if (!(beta0 > 0.0) || !(beta1 > 0.0) || !(p_exp > 0.0)) fail("beta0, beta1, p_exp must be positive");
  if (m_max < 0) fail("m_max must be nonnegative");
  if (!(min_step > 0.0 && min_step <= 1.0)) fail("min_step must lie in (0, 1]");
  if (!(eta0 > 0.0) || !(eta_rate > 0.0 && eta_rate < 1.0)) fail("eta schedule must decrease to 0");
  if (cg_max_iters < 1 || max_cg_restarts < 0) fail("CG budget");
  if (!(omega.c1 > 0.0 && omega.c1 < 1.0) || !(omega.c2 > 0.0)) fail("omega schedule");
  if (!(omega_floor > 0.0)) fail("omega_floor must be positive");
  if (!(delta_G > 0.0)) fail("delta_G must be positive");
  if (!(max_direction_norm > 0.0) || newton_shrink_after < 1) fail("Newton safeguards");
  if (first_order_max_iters < 0 || !(bb_initial_step > 0.0) || !(bb_backtrack > 0.0 && bb_backtrack < 1.0) ||
      !(bb_armijo > 0.0 && bb_armijo < 1.0) || bb_memory < 1) {
    fail("first-order parameters");
  }
  if (max_newton_iters < 0 || max_first_order_rounds < 1 || max_stagnant_newton < 1) {
    fail("iteration budget");
  }
  if (!(probe_tol > 0.0)) fail("probe_tol must be positive");
}

// --- CG ----------------------------------------------------------------------

CgResult cg_regularized(const TangentOperator& apply_h, const TangentVector& x, double omega,
                        double tol, int max_iters) {
  if (!(omega > 0.0)) throw std::invalid_argument("cg_regularized: omega must be positive");
  if (!(tol > 0.0)) throw std::invalid_argument("cg_regularized: tol must be positive");
  const auto apply_reg = [&](const TangentVector& p) { return apply_h(p) + omega * p; };

  CgResult out{TangentVector::zero(x.base()), CgStatus::MaxIters, std::nullopt, 0, x.norm()};
  if (out.residual <= tol) {
    out.status = CgStatus::Converged;
    return out;
  }
  TangentVector res = x;  // (H + omega I) v + x
  TangentVector p = -res;
  double rr = res.norm() * res.norm();
  for (int it = 1; it <= max_iters; ++it) {
    out.iterations = it;
    const TangentVector ap = apply_reg(p);
    const double pap = inner(ap, p);
    if (!(pap > 0.0)) {
      out.status = CgStatus::NegativeCurvature;
      out.negative_direction = p;
      out.residual = std::sqrt(rr);
      return out;
    }
    const double step = rr / pap;
    out.v += step * p;
    res += step * ap;
    double rr_new = res.norm() * res.norm();
    if (std::sqrt(rr_new) <= tol) {
      // Recursive residuals drift; accept only on the true residual.
      res = apply_reg(out.v) + x;
      rr_new = res.norm() * res.norm();
      if (std::sqrt(rr_new) <= tol) {
        out.status = CgStatus::Converged;
        out.residual = std::sqrt(rr_new);
        return out;
      }
      p = -res;
      rr = rr_new;
      continue;
    }
    p = -res + (rr_new / rr) * p;
    rr = rr_new;
  }
  out.residual = (apply_reg(out.v) + x).norm();
  if (out.residual <= tol) out.status = CgStatus::Converged;
  return out;
}

// --- Line searches -------------------------------------------------------------

bool is_sufficient_descent(const TangentVector& x, const TangentVector& v, const NewtonConfig& cfg) {
  const double vn = v.norm();
  if (vn == 0.0) return false;
  const double bound = std::min(cfg.beta0, cfg.beta1 * std::pow(vn, cfg.p_exp)) * vn * vn;
  return -inner(x, v) >= bound;
}

ArmijoResult ls_armijo(const std::function<double(const StiefelPoint&)>& phi, const StiefelPoint& q,
                       const TangentVector& x, const TangentVector& v, const NewtonConfig& cfg,
                       std::optional<double> phi_at_q) {
  ArmijoResult out{0, std::nullopt, v, false, false};
  if (!is_sufficient_descent(x, v, cfg)) {
    out.v_used = -x;
    out.replaced_by_gradient = true;
  }
  const double f0 = phi_at_q ? *phi_at_q : phi(q);
  const double slope = inner(x, out.v_used);
  for (int m = 0;; ++m) {
    const double step = std::pow(cfg.delta_ls, m);
    if (step < cfg.min_step) {
      out.m = m;
      out.step_underflow = true;
      return out;
    }
    StiefelPoint next = retract(q, step * out.v_used, cfg.retraction);
    if (phi(next) <= f0 + cfg.mu_ls * step * slope) {
      out.m = m;
      out.q_next = std::move(next);
      return out;
    }
  }
}

ResidualResult ls_residual(const std::function<TangentVector(const StiefelPoint&)>& gradient_at,
                           const StiefelPoint& q, const TangentVector& x, const TangentVector& v,
                           const NewtonConfig& cfg) {
  const double x_norm = x.norm();
  for (int m = 0;; ++m) {
    const double step = std::pow(cfg.delta_ls, m);
    StiefelPoint next = retract(q, step * v, cfg.retraction);
    const double g_next = gradient_at(next).norm();
    if (g_next <= (1.0 - 2.0 * cfg.mu_ls * step) * x_norm) return {m, std::move(next), true};
    if (m >= cfg.m_max) return {m, std::move(next), false};
  }
}

// --- First-order phase -----------------------------------------------------------

FirstOrderResult first_order_phase(const NewtonModel& model, const StiefelPoint& q0, double target,
                                   int max_iters, const NewtonConfig& cfg) {
  if (!(target > 0.0)) throw std::invalid_argument("first_order_phase: target must be positive");
  StiefelPoint q = q0;
  NewtonModel::Evaluation ev = model.evaluate(q);
  FirstOrderResult out{q, 0, ev.value, ev.gradient.norm(), {ev.value}};
  if (out.grad_norm < target) return out;

  std::deque<double> history{ev.value};
  double alpha = cfg.bb_initial_step;
  constexpr int kMaxBacktracks = 60;
  for (int it = 0; it < max_iters; ++it) {
    const TangentVector& g = ev.gradient;
    const double gg = g.norm() * g.norm();
    const double reference = *std::max_element(history.begin(), history.end());

    double t = alpha;
    std::optional<StiefelPoint> next;
    std::optional<NewtonModel::Evaluation> next_ev;
    for (int bt = 0; bt < kMaxBacktracks; ++bt, t *= cfg.bb_backtrack) {
      StiefelPoint trial = retract(q, -t * g, cfg.retraction);
      NewtonModel::Evaluation trial_ev = model.evaluate(trial);
      if (trial_ev.value <= reference - cfg.bb_armijo * t * gg) {
        next = std::move(trial);
        next_ev = std::move(trial_ev);
        break;
      }
    }
    if (!next) break;  // no acceptable step; the caller sees the gradient norm

    const Matrix s = next->matrix() - q.matrix();
    const Matrix y = next_ev->gradient.matrix() - g.matrix();
    const double sy = std::abs(frobenius_inner(s, y));
    const double ss = s.squaredNorm();
    const double yy = y.squaredNorm();
    if (sy > 0.0 && yy > 0.0) {
      alpha = (it % 2 == 0) ? ss / sy : sy / yy;
    } else {
      alpha = cfg.bb_initial_step;
    }
    alpha = std::clamp(alpha, 1e-10, 1e10);

    q = std::move(*next);
    ev = std::move(*next_ev);
    ++out.iterations;
    history.push_back(ev.value);
    if (static_cast<int>(history.size()) > cfg.bb_memory) history.pop_front();
    out.best_values.push_back(std::min(out.best_values.back(), ev.value));
    if (ev.gradient.norm() < target) break;
  }
  out.q = q;
  out.value = ev.value;
  out.grad_norm = ev.gradient.norm();
  return out;
}

// --- Subproblem driver -------------------------------------------------------------

namespace {

double regularization(const NewtonConfig& cfg, int k, double grad_norm) {
  double omega = cfg.omega.kind == OmegaSchedule::Kind::PaperPower
                     ? std::pow(grad_norm, cfg.nu_bar)
                     : std::min(std::pow(cfg.omega.c1, k), cfg.omega.c2 * grad_norm);
  return std::max(omega, cfg.omega_floor);
}

double probe(const ClarkeElement& h, double tol) {
  try {
    return min_eigenvalue_probe(h, tol);
  } catch (const ConvergenceError& e) {
    return e.best_estimate();
  }
}

}  // namespace

SubproblemResult solve_subproblem(const NewtonModel& model, const StiefelPoint& q0, double eps_k,
                                  double phi_bound, const NewtonConfig& cfg, Seed seed,
                                  std::optional<double> delta_G) {
  cfg.validate();
  if (!(eps_k > 0.0)) throw std::invalid_argument("solve_subproblem: eps_k must be positive");
  double dG = delta_G.value_or(cfg.delta_G);
  if (!(dG > 0.0)) throw std::invalid_argument("solve_subproblem: delta_G must be positive");

  StiefelPoint q = q0;
  NewtonModel::Evaluation ev = model.evaluate(q);
  StiefelPoint best_q = q;
  double best_value = ev.value;
  SubsolverTrace trace;
  int fo_rounds = 0;
  bool fo_stalled = false;
  int newton_since_shrink = 0;
  int newton_k = 0;
  int stagnant = 0;
  double best_gn = std::numeric_limits<double>::infinity();
  std::uint64_t draws = 0;

  const auto note_best = [&] {
    if (ev.value < best_value) {
      best_value = ev.value;
      best_q = q;
    }
  };

  while (true) {
    const double gn = ev.gradient.norm();
    if (gn < eps_k) {
      trace.converged = true;
      break;
    }

    if (gn >= dG && !fo_stalled && fo_rounds < cfg.max_first_order_rounds) {
      ++fo_rounds;
      const double value_before = ev.value;
      const double target = std::max(dG, eps_k);
      FirstOrderResult fo = first_order_phase(model, q, target, cfg.first_order_max_iters, cfg);
      q = fo.q;
      ev = model.evaluate(q);
      note_best();
      IterationRecord rec;
      rec.grad_norm = gn;
      rec.grad_norm_after = ev.gradient.norm();
      rec.used_first_order = true;
      rec.first_order_iters = fo.iterations;
      rec.value = ev.value;
      trace.records.push_back(rec);
      trace.first_order_iters += fo.iterations;
      newton_since_shrink = 0;
      // Rounds are cheap, so keep going while they lower the gradient norm or
      // the objective. A round that does neither, or an exhausted round
      // budget, hands over to Newton steps, which cope with the
      // ill-conditioning of large penalties.
      const bool lowered_value = ev.value < value_before - 1e-12 * (1.0 + std::abs(value_before));
      if (rec.grad_norm_after >= target && rec.grad_norm_after >= gn && !lowered_value) fo_stalled = true;
      continue;
    }

    if (trace.newton_iters >= cfg.max_newton_iters) break;

    // Newton step.
    const DirectionSample sample = sample_admissible_direction(q, seed.derive(draws++));
    const ClarkeElement h = model.generalized_hessian(q, sample);
    const TangentOperator apply_h = [&h](const TangentVector& w) { return h.apply(w); };
    IterationRecord rec;
    rec.grad_norm = gn;
    if (cfg.probe_min_eigenvalue) rec.min_eigenvalue = probe(h, cfg.probe_tol);

    double omega = regularization(cfg, newton_k, gn);
    const double tol = std::min(cfg.eta0 * std::pow(cfg.eta_rate, newton_k), std::pow(gn, 1.0 + cfg.nu_bar));
    CgResult cg = cg_regularized(apply_h, ev.gradient, omega, tol, cfg.cg_max_iters);
    rec.cg_iters = cg.iterations;
    for (int restart = 0; cg.status == CgStatus::NegativeCurvature && restart < cfg.max_cg_restarts;
         ++restart) {
      rec.negative_curvature = true;
      const TangentVector& p = *cg.negative_direction;
      omega = std::max(-2.0 * inner(h.apply(p), p) / (p.norm() * p.norm()), cfg.omega_floor);
      cg = cg_regularized(apply_h, ev.gradient, omega, tol, cfg.cg_max_iters);
      rec.cg_iters += cg.iterations;
    }
    trace.cg_iters += rec.cg_iters;

    TangentVector v = cg.v;
    if (cg.status == CgStatus::NegativeCurvature || v.norm() == 0.0) v = -ev.gradient;
    if (v.norm() > cfg.max_direction_norm) {
      dG *= 0.8;
      v = -ev.gradient;
    }

    if (cfg.linesearch == LineSearch::LS1) {
      const auto phi = [&](const StiefelPoint& p) { return model.value(p); };
      ArmijoResult ls = ls_armijo(phi, q, ev.gradient, v, cfg, ev.value);
      if (ls.step_underflow) {
        rec.step_underflow = true;
        dG *= 0.95;
        fo_stalled = false;
      } else {
        rec.step_exponent = ls.m;
        q = std::move(*ls.q_next);
        ev = model.evaluate(q);
      }
    } else {
      const auto grad_at = [&](const StiefelPoint& p) { return model.evaluate(p).gradient; };
      ResidualResult ls = ls_residual(grad_at, q, ev.gradient, v, cfg);
      rec.step_exponent = ls.m;
      q = std::move(ls.q_next);
      ev = model.evaluate(q);
    }
    note_best();
    rec.grad_norm_after = ev.gradient.norm();
    rec.value = ev.value;
    trace.records.push_back(rec);

    ++trace.newton_iters;
    ++newton_k;
    // Outside the Newton regime the direction can be useless (indefinite
    // operator, tiny accepted steps); stop instead of burning CG work.
    stagnant = (gn >= dG && rec.grad_norm_after >= std::min(gn, best_gn)) ? stagnant + 1 : 0;
    best_gn = std::min(best_gn, rec.grad_norm_after);
    if (stagnant >= cfg.max_stagnant_newton) break;
    if (++newton_since_shrink > cfg.newton_shrink_after) {
      dG *= 0.9;
      newton_since_shrink = 0;
    }
  }

  // LS-II is not a descent method: restore the Phi bound from the best iterate.
  if (cfg.linesearch == LineSearch::LS2 && ev.value > phi_bound) {
    IterationRecord rec;
    rec.grad_norm = model.evaluate(best_q).gradient.norm();
    FirstOrderResult fo =
        first_order_phase(model, best_q, eps_k, cfg.first_order_max_iters, cfg);
    q = fo.q;
    ev = model.evaluate(q);
    rec.grad_norm_after = ev.gradient.norm();
    rec.used_first_order = true;
    rec.first_order_iters = fo.iterations;
    rec.value = ev.value;
    trace.records.push_back(rec);
    trace.first_order_iters += fo.iterations;
    trace.converged = ev.gradient.norm() < eps_k && ev.value <= phi_bound;
  }

  return SubproblemResult{q, ev.value, ev.gradient.norm(), std::move(trace), dG};
}

}  // namespace malm
