#include "aslip/solver.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <stdexcept>

namespace aslip::nlp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kDivergedObjective = -1e20;

VectorXd project(const VectorXd& x, const VectorXd& lo, const VectorXd& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

// Evaluates the augmented Lagrangian
//   f + sum(l_i c_i + rho/2 c_i^2) + 1/(2 rho) sum(max(0, m_j + rho g_j)^2 - m_j^2)
// and its gradient. The Gauss-Newton part of the penalty Hessian,
// rho (Je'Je + Ja'Ja) over equalities and active inequalities, is exact from
// first derivatives and is returned on request.
class AugmentedLagrangian {
 public:
  AugmentedLagrangian(const NlpProblem& p, const Multipliers& m, double rho) : p_(p), m_(m), rho_(rho) {}

  double value(const VectorXd& x, VectorXd* grad, MatrixXd* gauss_newton = nullptr) const {
    VectorXd fg;
    double phi = p_.objective(x, grad ? &fg : nullptr);
    if (grad) *grad = fg;
    if (gauss_newton) gauss_newton->setZero(x.size(), x.size());
    if (p_.n_eq > 0) {
      VectorXd c(p_.n_eq);
      MatrixXd J;
      p_.equalities(x, c, grad ? &J : nullptr);
      phi += m_.eq.dot(c) + 0.5 * rho_ * c.squaredNorm();
      if (grad) grad->noalias() += J.transpose() * (m_.eq + rho_ * c);
      if (grad && gauss_newton) gauss_newton->noalias() += rho_ * J.transpose() * J;
    }
    if (p_.n_ineq > 0) {
      VectorXd g(p_.n_ineq);
      MatrixXd J;
      p_.inequalities(x, g, grad ? &J : nullptr);
      const VectorXd shifted = (m_.ineq + rho_ * g).cwiseMax(0.0);
      phi += (shifted.squaredNorm() - m_.ineq.squaredNorm()) / (2.0 * rho_);
      if (grad) grad->noalias() += J.transpose() * shifted;
      if (grad && gauss_newton) {
        for (int i = 0; i < p_.n_ineq; ++i)
          if (shifted(i) > 0.0) gauss_newton->noalias() += rho_ * J.row(i).transpose() * J.row(i);
      }
    }
    return phi;
  }

 private:
  const NlpProblem& p_;
  const Multipliers& m_;
  double rho_;
};

struct InnerResult {
  double merit = 0.0;
  int iterations = 0;
  bool diverged = false;
};

bool at_lower(double x, double lo) { return x <= lo + 1e-12 * (1.0 + std::abs(lo)); }
bool at_upper(double x, double hi) { return x >= hi - 1e-12 * (1.0 + std::abs(hi)); }

// Projected gradient step P(x - g) - x, inf-norm.
double projected_gradient_norm(const VectorXd& x, const VectorXd& g, const VectorXd& lo, const VectorXd& hi) {
  return (project(x - g, lo, hi) - x).lpNorm<Eigen::Infinity>();
}

// Limited-memory BFGS model of the curvature the Gauss-Newton block misses
// (objective and multiplier-weighted constraint curvature), rebuilt densely
// from the stored pairs.
MatrixXd remainder_model(const std::deque<std::pair<VectorXd, VectorXd>>& pairs, int n, double scale) {
  MatrixXd B = MatrixXd::Identity(n, n) * scale;
  for (const auto& [s, y] : pairs) {
    const VectorXd Bs = B * s;
    const double sBs = s.dot(Bs), sy = s.dot(y);
    if (sBs <= 0.0 || sy <= 0.0) continue;
    B.noalias() -= Bs * Bs.transpose() / sBs;
    B.noalias() += y * y.transpose() / sy;
  }
  return B;
}

// Bound-constrained structured quasi-Newton minimization. Variables pinned at
// a bound with the gradient pushing outward are frozen for the step; the
// model Hessian (Gauss-Newton block plus limited-memory remainder) is solved
// on the free subspace and a projected Armijo backtracking search keeps
// iterates feasible.
InnerResult minimize_bounded(const AugmentedLagrangian& merit, VectorXd& x, const VectorXd& lo,
                             const VectorXd& hi, double tol, int max_iter, int memory) {
  const int n = static_cast<int>(x.size());
  std::deque<std::pair<VectorXd, VectorXd>> pairs;
  VectorXd g;
  MatrixXd gn;
  double phi = merit.value(x, &g, &gn);
  InnerResult res;
  if (!std::isfinite(phi)) {
    res.diverged = true;
    res.merit = phi;
    return res;
  }
  int it = 0;
  double best_pg = kInf;
  int stalled = 0;
  for (; it < max_iter; ++it) {
    const double pg = projected_gradient_norm(x, g, lo, hi);
    if (pg <= tol) break;
    if (pg < 0.999 * best_pg) {
      best_pg = pg;
      stalled = 0;
    } else if (++stalled > 50) {
      break;  // rounding-limited: no progress on the projected gradient
    }

    std::vector<int> free;
    for (int i = 0; i < n; ++i) {
      const bool pinned = lo(i) == hi(i) || (at_lower(x(i), lo(i)) && g(i) > 0.0) ||
                          (at_upper(x(i), hi(i)) && g(i) < 0.0);
      if (!pinned) free.push_back(i);
    }
    const int nf = static_cast<int>(free.size());
    if (nf == 0) break;

    double scale;
    if (!pairs.empty()) {
      const auto& [s, y] = pairs.back();
      scale = y.squaredNorm() / s.dot(y);
    } else {
      double gmax = 0.0;
      for (int i : free) gmax = std::max(gmax, std::abs(g(i)));
      scale = std::max(gmax / 0.1, 1e-12);
    }
    const MatrixXd B = remainder_model(pairs, n, scale) + gn;
    MatrixXd Bf(nf, nf);
    VectorXd gf(nf);
    for (int a = 0; a < nf; ++a) {
      gf(a) = g(free[a]);
      for (int b = 0; b < nf; ++b) Bf(a, b) = B(free[a], free[b]);
    }
    VectorXd dir = VectorXd::Zero(n);
    Eigen::LLT<MatrixXd> llt(Bf);
    VectorXd df = llt.info() == Eigen::Success ? VectorXd(llt.solve(-gf)) : VectorXd(-gf / scale);
    if (!df.allFinite() || !(gf.dot(df) < 0.0)) df = -gf / scale;
    for (int a = 0; a < nf; ++a) dir(free[a]) = df(a);

    // Projected Armijo backtracking.
    double step = 1.0;
    VectorXd x_new, g_new;
    MatrixXd gn_new;
    double phi_new = kInf;
    bool accepted = false;
    for (int ls = 0; ls < 50; ++ls) {
      x_new = project(x + step * dir, lo, hi);
      phi_new = merit.value(x_new, nullptr);
      if (std::isfinite(phi_new) && phi_new < phi && phi_new <= phi + 1e-4 * g.dot(x_new - x)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // Near a minimizer the predicted decrease drops below the rounding level of
      // the merit. Fall back to approximate Wolfe conditions on the directional
      // derivative, with the merit allowed to rise only by rounding.
      const double slope = g.dot(dir);
      const double noise = 1e-14 * (1.0 + std::abs(phi));
      step = 1.0;
      for (int ls = 0; ls < 50 && !accepted; ++ls, step *= 0.5) {
        x_new = project(x + step * dir, lo, hi);
        VectorXd g_try;
        const double phi_try = merit.value(x_new, &g_try);
        const double new_slope = g_try.dot(dir);
        if (std::isfinite(phi_try) && phi_try <= phi + noise && new_slope >= 0.9 * slope &&
            new_slope <= -0.8 * slope) {
          accepted = true;
          phi_new = phi_try;
          break;
        }
      }
    }
    if (!accepted) {
      if (pairs.empty()) break;  // stalled even along the initial metric
      pairs.clear();
      continue;
    }
    if (pairs.empty() && step == 1.0) {
      // No curvature information yet: expand while the merit keeps dropping so
      // unbounded directions are detected instead of crawled along.
      for (int grow = 0; grow < 80; ++grow) {
        const VectorXd x_try = project(x + 2.0 * step * dir, lo, hi);
        const double phi_try = merit.value(x_try, nullptr);
        if (!(std::isfinite(phi_try) && phi_try < phi_new)) break;
        step *= 2.0;
        x_new = x_try;
        phi_new = phi_try;
        if (phi_new < kDivergedObjective) break;
      }
    }
    phi_new = merit.value(x_new, &g_new, &gn_new);
    if (phi_new < kDivergedObjective) {
      x = x_new;
      res.diverged = true;
      res.merit = phi_new;
      res.iterations = it + 1;
      return res;
    }
    VectorXd s = x_new - x;
    VectorXd y = g_new - g - gn_new * s;
    if (s.dot(y) > 1e-12 * s.norm() * y.norm() && s.dot(y) > 0.0) {
      pairs.emplace_back(std::move(s), std::move(y));
      if (static_cast<int>(pairs.size()) > memory) pairs.pop_front();
    }
    x = std::move(x_new);
    g = std::move(g_new);
    gn = std::move(gn_new);
    phi = phi_new;
  }
  res.merit = phi;
  res.iterations = it;
  return res;
}

VectorXd eval_eq(const NlpProblem& p, const VectorXd& x) {
  VectorXd c(p.n_eq);
  if (p.n_eq > 0) p.equalities(x, c, nullptr);
  return c;
}

VectorXd eval_ineq(const NlpProblem& p, const VectorXd& x) {
  VectorXd g(p.n_ineq);
  if (p.n_ineq > 0) p.inequalities(x, g, nullptr);
  return g;
}

}  // namespace

void NlpProblem::validate() const {
  if (n <= 0) throw std::invalid_argument("NlpProblem: dimension must be positive");
  if (!objective) throw std::invalid_argument("NlpProblem: missing objective");
  if (lower.size() != n || upper.size() != n) throw std::invalid_argument("NlpProblem: bound sizes differ from n");
  if ((lower.array() > upper.array()).any()) throw std::invalid_argument("NlpProblem: lower bound above upper");
  if (n_eq > 0 && !equalities) throw std::invalid_argument("NlpProblem: missing equality callback");
  if (n_ineq > 0 && !inequalities) throw std::invalid_argument("NlpProblem: missing inequality callback");
}

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Converged:
      return "converged";
    case SolveStatus::IterationLimit:
      return "iteration_limit";
    case SolveStatus::Diverged:
      return "diverged";
  }
  return "?";
}

double max_violation(const NlpProblem& p, const VectorXd& x) {
  double v = 0.0;
  if (p.n_eq > 0) v = std::max(v, eval_eq(p, x).lpNorm<Eigen::Infinity>());
  if (p.n_ineq > 0) v = std::max(v, eval_ineq(p, x).maxCoeff());
  v = std::max(v, (p.lower - x).maxCoeff());
  v = std::max(v, (x - p.upper).maxCoeff());
  return v;
}

double kkt_residual(const NlpProblem& p, const VectorXd& x, const Multipliers& m) {
  VectorXd grad;
  p.objective(x, &grad);
  double complementarity = 0.0;
  if (p.n_eq > 0) {
    VectorXd c(p.n_eq);
    MatrixXd J;
    p.equalities(x, c, &J);
    grad.noalias() += J.transpose() * m.eq;
  }
  if (p.n_ineq > 0) {
    VectorXd g(p.n_ineq);
    MatrixXd J;
    p.inequalities(x, g, &J);
    grad.noalias() += J.transpose() * m.ineq;
    complementarity = std::max(m.ineq.cwiseProduct(g).cwiseAbs().maxCoeff(), (-m.ineq).maxCoeff());
    complementarity = std::max(0.0, complementarity);
  }
  return projected_gradient_norm(x, grad, p.lower, p.upper) + complementarity;
}

SolveReport solve(const NlpProblem& p, const VectorXd& x0, const SolverOptions& opts, const Multipliers* warm) {
  p.validate();
  if (x0.size() != p.n) throw std::invalid_argument("solve: x0 has wrong dimension");

  SolveReport rep;
  VectorXd x = project(x0, p.lower, p.upper);
  {
    VectorXd grad;
    const double f0 = p.objective(x, &grad);
    const bool finite = std::isfinite(f0) && grad.allFinite() && eval_eq(p, x).allFinite() &&
                        eval_ineq(p, x).allFinite();
    if (!finite) throw std::domain_error("solve: non-finite objective or constraints at the initial point");
  }

  Multipliers m;
  m.eq = VectorXd::Zero(p.n_eq);
  m.ineq = VectorXd::Zero(p.n_ineq);
  if (warm && warm->eq.size() == p.n_eq && warm->ineq.size() == p.n_ineq) {
    m.eq = warm->eq;
    m.ineq = warm->ineq.cwiseMax(0.0);
  }

  double rho = opts.initial_penalty;
  double prev_violation = kInf;
  const double inner_tol = 0.1 * opts.stationarity_tol;

  for (int outer = 0; outer < opts.max_outer; ++outer) {
    AugmentedLagrangian merit(p, m, rho);
    MeritRecord rec;
    rec.penalty = rho;
    rec.merit_start = merit.value(x, nullptr);
    const InnerResult inner = minimize_bounded(merit, x, p.lower, p.upper, inner_tol, opts.max_inner, opts.memory);
    rep.inner_iterations += inner.iterations;
    rep.outer_iterations = outer + 1;
    rec.merit_end = inner.merit;

    if (inner.diverged) {
      rep.status = SolveStatus::Diverged;
      rep.history.push_back(rec);
      break;
    }

    // First-order multiplier update.
    const VectorXd c = eval_eq(p, x);
    const VectorXd g = eval_ineq(p, x);
    if (p.n_eq > 0) m.eq += rho * c;
    if (p.n_ineq > 0) m.ineq = (m.ineq + rho * g).cwiseMax(0.0);

    const double violation = max_violation(p, x);
    rec.violation = violation;
    rep.history.push_back(rec);

    const double kkt = kkt_residual(p, x, m);
    if (violation <= opts.feasibility_tol && kkt <= opts.stationarity_tol) {
      rep.status = SolveStatus::Converged;
      break;
    }
    if (violation > opts.feasibility_tol && violation > 0.25 * prev_violation) {
      rho = std::min(rho * opts.penalty_growth, opts.max_penalty);
    }
    prev_violation = violation;
  }

  rep.x = x;
  rep.multipliers = m;
  rep.objective = p.objective(x, nullptr);
  rep.max_violation = max_violation(p, x);
  rep.stationarity = kkt_residual(p, x, m);
  if (!std::isfinite(rep.objective) || rep.objective < kDivergedObjective) rep.status = SolveStatus::Diverged;
  if (rep.status == SolveStatus::Converged &&
      !(rep.max_violation <= opts.feasibility_tol && rep.stationarity <= opts.stationarity_tol)) {
    rep.status = SolveStatus::IterationLimit;
  }
  return rep;
}

}  // namespace aslip::nlp
