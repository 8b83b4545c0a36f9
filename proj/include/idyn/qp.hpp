/****************************************************************************
 * This library is distributed under the terms of the Apache V2.0 license
 * (obtainable from http://www.apache.org/licenses/LICENSE-2.0).
 ****************************************************************************/
#pragma once

#include "idyn/common.hpp"
#include "idyn/lcp.hpp"

namespace idyn {

/// Convex QP: minimize 1/2 x'Hx + c'x subject to Aineq x >= bineq and
/// x_i >= 0 for i in lb_zero.  H must be symmetric PSD (possibly singular).
struct Qp {
  MatrixXd H;
  VectorXd c;
  MatrixXd Aineq;   // may have zero rows
  VectorXd bineq;
  IndexSet lb_zero;

  int num_vars() const { return static_cast<int>(c.size()); }
  int num_ineq() const { return static_cast<int>(bineq.size()); }
};

struct QpDiagnostics {
  double stationarity = 0;   // max |Hx + c - Aineq' mu - nu|
  double feasibility = 0;    // max violation of the inequality rows
  double complementarity = 0;
  int pivots = 0;
  double regularization = 0;
};

struct QpResult {
  VectorXd x;
  VectorXd duals;  // multipliers of the Aineq rows
  QpDiagnostics diagnostics;
};

/// Solve the QP through the Karush-Kuhn-Tucker conditions posed as an LCP
/// and handed to the regularized Lemke solver.  Free variables are split
/// into nonnegative pairs.  Throws infeasible/unbounded after the solver's
/// regularization schedule is exhausted.
QpResult solve_qp(const Qp& q);

/// Orthonormal kernel basis: columns W with ||Amat W|| <= tol ||Amat||,
/// W'W = I.  Full-rank input yields zero columns.
MatrixXd nullspace_basis(const MatrixXd& Amat, double tol = 1e-10);

}  // namespace idyn
