#pragma once

#include <Eigen/Dense>
#include <limits>
#include <string>
#include <vector>

namespace opfbench {

/// Convex QP:  min 1/2 x'Qx + c'x + c0
///             s.t. A_eq x = b_eq,  A_in x <= b_in,  lb <= x <= ub.
/// Q must be positive semidefinite (diagonal in every use here). Empty
/// matrices mean "no such constraints"; +-inf bounds are allowed.
struct QuadraticProgram {
  Eigen::MatrixXd q;  // n x n, may be 0x0 for an LP
  Eigen::VectorXd c;
  double c0 = 0;
  Eigen::MatrixXd a_eq;
  Eigen::VectorXd b_eq;
  Eigen::MatrixXd a_in;
  Eigen::VectorXd b_in;
  Eigen::VectorXd lb;
  Eigen::VectorXd ub;

  Eigen::Index n_vars() const { return c.size(); }
};

enum class QpStatus { Optimal, Infeasible, Unbounded, MaxIterations };

struct QpSolution {
  QpStatus status = QpStatus::MaxIterations;
  Eigen::VectorXd x;
  double objective = std::numeric_limits<double>::quiet_NaN();
  double primal_residual = 0;
  double dual_residual = 0;
  double complementarity = 0;
  int iterations = 0;
  std::vector<double> objective_trace;
  std::string message;

  bool ok() const { return status == QpStatus::Optimal; }
};

struct QpOptions {
  double tol = 1e-8;
  int max_iter = 100;
};

/// Mehrotra predictor-corrector primal-dual interior point, dense
/// factorization. One solver covers the LP (Q = 0) and QP cases.
QpSolution solve_qp(const QuadraticProgram& qp, const QpOptions& opts = {});

}  // namespace opfbench
