/****************************************************************************
 * This library is distributed under the terms of the Apache V2.0 license
 * (obtainable from http://www.apache.org/licenses/LICENSE-2.0).
 ****************************************************************************/
#pragma once

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/SVD>
#include <functional>
#include <optional>
#include <string>

#include "idyn/common.hpp"

namespace idyn {

/// Pure linear complementarity problem: find z, w >= 0 with w = Q z + r and
/// z'w = 0.
struct Lcp {
  VectorXd r;
  MatrixXd Q;

  int order() const { return static_cast<int>(r.size()); }
  bool dims_consistent() const {
    return Q.rows() == Q.cols() && Q.rows() == r.size();
  }
};

/// Solution of an LCP together with the basis bookkeeping a pivoting solver
/// needs for warm starting.
struct LcpSolution {
  VectorXd z;
  VectorXd w;
  IndexSet nonbasic_set;           // indices whose z variable may carry force
  int pivot_count = 0;
  double regularization_used = 0;  // final diagonal shift added to Q
  std::vector<int> pivot_trace;    // +i+1: i entered non-basic; -(i+1): left
};

/// Mixed LCP: A x + C z + g = 0 and 0 <= z  _|_  D x + B z + h >= 0, with x
/// unconstrained.  Dimensions: A p-by-s (p = s), B r-by-t (r = t).
struct Mlcp {
  MatrixXd A, C, D, B;
  VectorXd g, h;

  int num_unconstrained() const { return static_cast<int>(g.size()); }
  int num_complementary() const { return static_cast<int>(h.size()); }
};

/// Retained data from an MLCP reduction, sufficient to recover x from z.
struct MlcpReduction {
  Eigen::FullPivLU<MatrixXd> A_lu;
  MatrixXd C;
  VectorXd g;
};

struct LemkeOptions {
  int max_pivots = 0;       // 0: choose from problem size
  double base_tol = 0;      // 0: scale from the data
  // Tikhonov shifts as multiples of max |diag Q|, tried in order after a
  // plain solve fails.
  std::vector<double> tikhonov_schedule = {1e-12, 1e-10, 1e-8, 1e-6, 1e-4};
};

struct PpmOptions {
  int max_pivots = 0;        // 0: choose from problem size
  double tol = 0;            // 0: scale from the data
  // feasibility slack at which a supplied warm working set is accepted
  // outright, biasing consecutive solves toward the same support
  double warm_accept_tol = 0;  // 0: same as tol
};

/// Componentwise residuals of a candidate LCP solution.
struct LcpResidualReport {
  double equation = 0;        // max |w - (Qz + r)|
  double z_negativity = 0;    // max(0, -min z)
  double w_negativity = 0;    // max(0, -min w)
  double complementarity = 0; // |z'w| / (1 + |z||w|)
  bool pass = false;
};

/// Reduce an MLCP to the pure LCP (r, Q) with Q = B - D inv(A) C and
/// r = h - D inv(A) g.  Throws singular_a if A cannot be inverted; the caller
/// must prune dependent rows first.
std::pair<Lcp, MlcpReduction> mlcp_to_lcp(const Mlcp& m);

/// Recover the unconstrained variables x = -inv(A) (C z + g).
VectorXd recover_unconstrained(const MlcpReduction& record, const VectorXd& z);

/// Lemke's algorithm with lexicographic anti-cycling and an escalating
/// Tikhonov regularization schedule.  Throws ray_termination or
/// max_pivots_exceeded once the schedule is exhausted.
LcpSolution solve_lemke(const Lcp& p, const LemkeOptions& opts = {});

/// Operator form of the structured pivoting solver: the LCP matrix is
/// G = N K N' for a symmetric positive (semi)definite kernel K that is only
/// ever applied to vectors, and r is supplied directly.  The non-basic
/// working set never grows beyond the kernel dimension.
using KernelFn = std::function<VectorXd(const VectorXd&)>;
LcpSolution solve_ppm_kernel(const MatrixXd& N, int kernel_dim,
                             const KernelFn& apply_kernel, const VectorXd& r,
                             const IndexSet& warm_nonbasic,
                             const PpmOptions& opts = {});

/// Pivoting solver for the LCP (N inv(M) fstar, N inv(M) N') with M symmetric
/// positive definite.  The full product N inv(M) N' is never formed; working
/// set sub-blocks are assembled per pivot.  warm_nonbasic biases the solver
/// toward the previous force distribution.
LcpSolution solve_ppm(const MatrixXd& N, const Eigen::LLT<MatrixXd>& Mfac,
                      const VectorXd& fstar, const IndexSet& warm_nonbasic,
                      const PpmOptions& opts = {});

/// Exhaustive complementary-basis enumeration: among all basis assignments
/// whose linear systems are solvable and nonnegative, returns the recovered
/// x closest to x0 in the Euclidean norm, with that distance.  z_out, when
/// non-null, receives the winning complementary variables.
std::pair<VectorXd, double> solve_min_diff(const Mlcp& m, const VectorXd& x0,
                                           int enumeration_cap = 16,
                                           double tol = 1e-9,
                                           VectorXd* z_out = nullptr);

LcpResidualReport verify_solution(const Lcp& p, const LcpSolution& s,
                                  double tol);

/// Plain-text dump (header line with the order, then Q rows, then r) for
/// cross-checking against external solvers.
void write_lcp(const std::string& path, const Lcp& p);
Lcp read_lcp(const std::string& path);

}  // namespace idyn
