/****************************************************************************
 * This library is distributed under the terms of the Apache V2.0 license
 * (obtainable from http://www.apache.org/licenses/LICENSE-2.0).
 ****************************************************************************/
#include "idyn/qp.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

namespace idyn {

namespace {

// KKT complementarity system over [u, v, x_lb, mu] where the free variables
// are x_F = u - v.  Each block row pairs with its complementary variable.
struct KktLayout {
  IndexSet free_idx;
  IndexSet lb_idx;
  int nf = 0, nl = 0, k = 0;
  int dim() const { return 2 * nf + nl + k; }
};

KktLayout make_layout(const Qp& q) {
  KktLayout lay;
  std::vector<char> is_lb(q.num_vars(), 0);
  for (int i : q.lb_zero) {
    require(i >= 0 && i < q.num_vars(), ErrorCode::dimension_mismatch,
            "solve_qp: lb_zero index out of range");
    is_lb[i] = 1;
  }
  for (int i = 0; i < q.num_vars(); ++i)
    (is_lb[i] ? lay.lb_idx : lay.free_idx).push_back(i);
  lay.nf = static_cast<int>(lay.free_idx.size());
  lay.nl = static_cast<int>(lay.lb_idx.size());
  lay.k = q.num_ineq();
  return lay;
}

VectorXd assemble_x(const KktLayout& lay, const VectorXd& z, int n) {
  VectorXd x = VectorXd::Zero(n);
  for (int i = 0; i < lay.nf; ++i)
    x[lay.free_idx[i]] = z[i] - z[lay.nf + i];
  for (int i = 0; i < lay.nl; ++i) x[lay.lb_idx[i]] = z[2 * lay.nf + i];
  return x;
}

// Throws the underlying pivoting-solver errors unchanged.
QpResult solve_qp_kkt(const Qp& q) {
  const int n = q.num_vars();
  const KktLayout lay = make_layout(q);
  const int dim = lay.dim();

  auto stat_row = [&](int var, MatrixXd& M, VectorXd& r, int out_row,
                      double sign) {
    for (int j = 0; j < lay.nf; ++j) {
      M(out_row, j) = sign * q.H(var, lay.free_idx[j]);
      M(out_row, lay.nf + j) = -sign * q.H(var, lay.free_idx[j]);
    }
    for (int j = 0; j < lay.nl; ++j)
      M(out_row, 2 * lay.nf + j) = sign * q.H(var, lay.lb_idx[j]);
    for (int j = 0; j < lay.k; ++j)
      M(out_row, 2 * lay.nf + lay.nl + j) = -sign * q.Aineq(j, var);
    r[out_row] = sign * q.c[var];
  };

  Lcp kkt;
  kkt.Q.setZero(dim, dim);
  kkt.r.setZero(dim);
  for (int i = 0; i < lay.nf; ++i) {
    stat_row(lay.free_idx[i], kkt.Q, kkt.r, i, 1.0);
    stat_row(lay.free_idx[i], kkt.Q, kkt.r, lay.nf + i, -1.0);
  }
  for (int i = 0; i < lay.nl; ++i)
    stat_row(lay.lb_idx[i], kkt.Q, kkt.r, 2 * lay.nf + i, 1.0);
  for (int j = 0; j < lay.k; ++j) {
    const int row = 2 * lay.nf + lay.nl + j;
    for (int i = 0; i < lay.nf; ++i) {
      kkt.Q(row, i) = q.Aineq(j, lay.free_idx[i]);
      kkt.Q(row, lay.nf + i) = -q.Aineq(j, lay.free_idx[i]);
    }
    for (int i = 0; i < lay.nl; ++i)
      kkt.Q(row, 2 * lay.nf + i) = q.Aineq(j, lay.lb_idx[i]);
    kkt.r[row] = -q.bineq[j];
  }

  const LcpSolution s = solve_lemke(kkt);

  QpResult out;
  out.x = assemble_x(lay, s.z, n);
  out.duals = s.z.tail(lay.k);
  out.diagnostics.pivots = s.pivot_count;
  out.diagnostics.regularization = s.regularization_used;

  // active-set polish: re-solve the equality KKT system on the apparent
  // active set, releasing members with negative multipliers and re-pinning
  // violated bounds, to strip pivoting-tolerance residue
  {
    const double scale = 1.0 + out.x.cwiseAbs().maxCoeff();
    std::vector<char> act(lay.k, 0), pin(n, 0);
    if (lay.k > 0) {
      const VectorXd slack = q.Aineq * out.x - q.bineq;
      for (int j = 0; j < lay.k; ++j)
        act[j] = slack[j] <= 1e-7 * scale || out.duals[j] > 1e-7;
    }
    for (int i : q.lb_zero) pin[i] = out.x[i] <= 1e-7 * scale;

    for (int sweep = 0; sweep < 12; ++sweep) {
      IndexSet act_idx, pin_idx;
      for (int j = 0; j < lay.k; ++j)
        if (act[j]) act_idx.push_back(j);
      for (int i = 0; i < n; ++i)
        if (pin[i]) pin_idx.push_back(i);
      const int na = static_cast<int>(act_idx.size());
      const int nl2 = static_cast<int>(pin_idx.size());
      MatrixXd K(n + na + nl2, n + na + nl2);
      K.setZero();
      K.topLeftCorner(n, n) = q.H;
      VectorXd rhs(n + na + nl2);
      rhs.head(n) = -q.c;
      for (int a = 0; a < na; ++a) {
        K.block(0, n + a, n, 1) = -q.Aineq.row(act_idx[a]).transpose();
        K.block(n + a, 0, 1, n) = q.Aineq.row(act_idx[a]);
        rhs[n + a] = q.bineq[act_idx[a]];
      }
      for (int l = 0; l < nl2; ++l) {
        K(pin_idx[l], n + na + l) = -1.0;
        K(n + na + l, pin_idx[l]) = 1.0;
        rhs[n + na + l] = 0.0;
      }
      Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(K);
      cod.setThreshold(1e-12);
      VectorXd sol2 = cod.solve(rhs);
      for (int refine = 0; refine < 2; ++refine)
        sol2 += cod.solve(rhs - K * sol2);
      if (!sol2.allFinite() ||
          (K * sol2 - rhs).cwiseAbs().maxCoeff() >
              1e-9 * (1.0 + rhs.cwiseAbs().maxCoeff()))
        break;
      const VectorXd x2 = sol2.head(n);

      // release the most negative multiplier, or re-pin a violated bound
      int worst_dual = -1, worst_kind = 0;
      double worst_val = -1e-12;
      for (int a = 0; a < na; ++a)
        if (sol2[n + a] < worst_val) {
          worst_val = sol2[n + a];
          worst_dual = act_idx[a];
          worst_kind = 0;
        }
      for (int l = 0; l < nl2; ++l)
        if (sol2[n + na + l] < worst_val) {
          worst_val = sol2[n + na + l];
          worst_dual = pin_idx[l];
          worst_kind = 1;
        }
      int worst_feas = -1, feas_kind = 0;
      double feas_val = -1e-9 * scale;
      if (lay.k > 0) {
        const VectorXd slack2 = q.Aineq * x2 - q.bineq;
        for (int j = 0; j < lay.k; ++j)
          if (!act[j] && slack2[j] < feas_val) {
            feas_val = slack2[j];
            worst_feas = j;
            feas_kind = 0;
          }
      }
      for (int i : q.lb_zero)
        if (!pin[i] && x2[i] < feas_val) {
          feas_val = x2[i];
          worst_feas = i;
          feas_kind = 1;
        }

      if (worst_dual < 0 && worst_feas < 0) {
        out.x = x2;
        out.duals = VectorXd::Zero(lay.k);
        for (int a = 0; a < na; ++a) out.duals[act_idx[a]] = sol2[n + a];
        break;
      }
      if (worst_feas >= 0) {
        (feas_kind == 0 ? act[worst_feas] : pin[worst_feas]) = 1;
      } else {
        (worst_kind == 0 ? act[worst_dual] : pin[worst_dual]) = 0;
      }
    }
  }

  VectorXd grad = q.H * out.x + q.c;
  if (lay.k > 0) grad -= q.Aineq.transpose() * out.duals;
  double stat = 0;
  for (int i : lay.free_idx) stat = std::max(stat, std::abs(grad[i]));
  for (int i = 0; i < lay.nl; ++i) {
    const int v = lay.lb_idx[i];
    stat = std::max(stat, std::max(0.0, -grad[v]));
    stat = std::max(stat, std::abs(out.x[v] * grad[v]));
  }
  out.diagnostics.stationarity = stat;
  double feas = 0, comp = 0;
  if (lay.k > 0) {
    const VectorXd slack = q.Aineq * out.x - q.bineq;
    feas = std::max(0.0, -slack.minCoeff());
    comp = slack.cwiseProduct(out.duals).cwiseAbs().maxCoeff();
  }
  for (int i : q.lb_zero) feas = std::max(feas, -out.x[i]);
  out.diagnostics.feasibility = feas;
  out.diagnostics.complementarity = comp;
  return out;
}

}  // namespace

QpResult solve_qp(const Qp& q) {
  const int n = q.num_vars();
  require(q.H.rows() == n && q.H.cols() == n, ErrorCode::dimension_mismatch,
          "solve_qp: H dimensions");
  require(n == 0 || (q.H - q.H.transpose()).cwiseAbs().maxCoeff() <=
                        1e-12 * std::max(1.0, q.H.cwiseAbs().maxCoeff()),
          ErrorCode::config_error, "solve_qp: H is not symmetric");
  require(q.Aineq.rows() == q.num_ineq() &&
              (q.num_ineq() == 0 || q.Aineq.cols() == n),
          ErrorCode::dimension_mismatch, "solve_qp: Aineq dimensions");

  try {
    return solve_qp_kkt(q);
  } catch (const IdynError& err) {
    if (err.code() != ErrorCode::ray_termination &&
        err.code() != ErrorCode::max_pivots_exceeded)
      throw;
  }

  // a bounded but degenerate program can defeat the pivoting solver; retry
  // with a vanishing proximal shift and accept when the original optimality
  // conditions still hold
  const double hscale = n > 0 ? std::max(1.0, q.H.cwiseAbs().maxCoeff()) : 1.0;
  for (double lam : {1e-10, 1e-8, 1e-6}) {
    Qp shifted = q;
    shifted.H.diagonal().array() += lam * hscale;
    try {
      QpResult out = solve_qp_kkt(shifted);
      VectorXd grad = q.H * out.x + q.c;
      if (q.num_ineq() > 0) grad -= q.Aineq.transpose() * out.duals;
      double stat = 0;
      std::vector<char> is_lb(n, 0);
      for (int i : q.lb_zero) is_lb[i] = 1;
      for (int i = 0; i < n; ++i) {
        if (is_lb[i])
          stat = std::max(stat, std::max(0.0, -grad[i]));
        else
          stat = std::max(stat, std::abs(grad[i]));
      }
      const double cscale =
          1.0 + (q.c.size() > 0 ? q.c.cwiseAbs().maxCoeff() : 0.0);
      if (stat <= 1e-6 * (hscale + cscale) &&
          out.diagnostics.feasibility <= 1e-7 * (1.0 + out.x.norm())) {
        out.diagnostics.stationarity = stat;
        out.diagnostics.regularization = lam * hscale;
        return out;
      }
    } catch (const IdynError&) {
    }
  }

  // distinguish an empty feasible set from an unbounded objective with a
  // strictly convex projection probe onto the same constraints
  Qp probe = q;
  probe.H = MatrixXd::Identity(n, n);
  probe.c = VectorXd::Zero(n);
  bool feasible = true;
  try {
    (void)solve_qp_kkt(probe);
  } catch (const IdynError&) {
    feasible = false;
  }
  throw IdynError(feasible ? ErrorCode::unbounded : ErrorCode::infeasible,
                  feasible ? "solve_qp: objective unbounded below"
                           : "solve_qp: constraints infeasible");
}

MatrixXd nullspace_basis(const MatrixXd& Amat, double tol) {
  require(Amat.allFinite(), ErrorCode::config_error,
          "nullspace_basis: non-finite input");
  if (Amat.cols() == 0) return MatrixXd(0, 0);
  if (Amat.rows() == 0) return MatrixXd::Identity(Amat.cols(), Amat.cols());
  Eigen::JacobiSVD<MatrixXd> svd(Amat, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double smax = sv.size() > 0 ? sv[0] : 0.0;
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv[i] > tol * smax) ++rank;
  const int kdim = static_cast<int>(Amat.cols()) - rank;
  return svd.matrixV().rightCols(kdim);
}

}  // namespace idyn
