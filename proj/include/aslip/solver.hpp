#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace aslip::nlp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Smooth NLP: minimize f(x) s.t. c(x) = 0, g(x) <= 0, lower <= x <= upper.
///
/// Constraint callbacks fill the value vector and, when the Jacobian pointer is
/// non-null, the dense Jacobian (rows = constraints).
struct NlpProblem {
  using Objective = std::function<double(const VectorXd& x, VectorXd* grad)>;
  using Constraints = std::function<void(const VectorXd& x, VectorXd& values, MatrixXd* jac)>;

  int n = 0;
  Objective objective;
  int n_eq = 0;
  Constraints equalities;
  int n_ineq = 0;
  Constraints inequalities;
  VectorXd lower;  // may hold -inf
  VectorXd upper;  // may hold +inf

  void validate() const;
};

/// Lagrange multipliers, sign convention L = f + eq'c + ineq'g with ineq >= 0.
struct Multipliers {
  VectorXd eq;
  VectorXd ineq;
};

struct SolverOptions {
  double feasibility_tol = 1e-6;
  double stationarity_tol = 1e-4;
  int max_outer = 50;
  int max_inner = 500;
  double initial_penalty = 10.0;
  double penalty_growth = 10.0;
  double max_penalty = 1e12;
  int memory = 10;
};

enum class SolveStatus { Converged, IterationLimit, Diverged };
const char* to_string(SolveStatus s);

/// Augmented-Lagrangian merit before/after one inner minimization.
struct MeritRecord {
  double penalty = 0.0;
  double merit_start = 0.0;
  double merit_end = 0.0;
  double violation = 0.0;
};

struct SolveReport {
  VectorXd x;
  Multipliers multipliers;
  double objective = 0.0;
  double max_violation = 0.0;
  double stationarity = 0.0;
  int outer_iterations = 0;
  int inner_iterations = 0;
  SolveStatus status = SolveStatus::IterationLimit;
  std::vector<MeritRecord> history;
};

/// Augmented-Lagrangian outer loop with a projected limited-memory BFGS inner
/// solver. `warm` multipliers are used when sized consistently.
SolveReport solve(const NlpProblem& problem, const VectorXd& x0, const SolverOptions& opts = {},
                  const Multipliers* warm = nullptr);

/// Largest equality |c|, inequality max(g, 0) or bound excursion at x.
double max_violation(const NlpProblem& problem, const VectorXd& x);

/// Projected-gradient stationarity of the Lagrangian (inf-norm) plus
/// complementarity violation max_i(|ineq_i * g_i|, -ineq_i).
double kkt_residual(const NlpProblem& problem, const VectorXd& x, const Multipliers& multipliers);

}  // namespace aslip::nlp
