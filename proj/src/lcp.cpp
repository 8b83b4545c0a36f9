/****************************************************************************
 * This library is distributed under the terms of the Apache V2.0 license
 * (obtainable from http://www.apache.org/licenses/LICENSE-2.0).
 ****************************************************************************/
#include "idyn/lcp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace idyn {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_finite(const MatrixXd& M, const char* name) {
  require(M.allFinite(), ErrorCode::config_error,
          std::string(name) + " contains non-finite entries");
}

void check_finite(const VectorXd& v, const char* name) {
  require(v.allFinite(), ErrorCode::config_error,
          std::string(name) + " contains non-finite entries");
}

}  // namespace

std::pair<Lcp, MlcpReduction> mlcp_to_lcp(const Mlcp& m) {
  const int p = m.num_unconstrained();
  const int t = m.num_complementary();
  require(m.A.rows() == p && m.A.cols() == p, ErrorCode::dimension_mismatch,
          "mlcp_to_lcp: A must be square and match g");
  require(m.C.rows() == p && m.C.cols() == t, ErrorCode::dimension_mismatch,
          "mlcp_to_lcp: C dimensions");
  require(m.D.rows() == t && m.D.cols() == p, ErrorCode::dimension_mismatch,
          "mlcp_to_lcp: D dimensions");
  require(m.B.rows() == t && m.B.cols() == t, ErrorCode::dimension_mismatch,
          "mlcp_to_lcp: B dimensions");
  check_finite(m.A, "A");
  check_finite(m.C, "C");
  check_finite(m.D, "D");
  check_finite(m.B, "B");
  check_finite(m.g, "g");
  check_finite(m.h, "h");

  MlcpReduction rec;
  rec.A_lu.compute(m.A);
  rec.A_lu.setThreshold(1e-12);
  require(rec.A_lu.isInvertible(), ErrorCode::singular_a,
          "mlcp_to_lcp: A is singular; prune dependent rows first");
  rec.C = m.C;
  rec.g = m.g;

  Lcp out;
  if (t > 0) {
    const MatrixXd AinvC = rec.A_lu.solve(m.C);
    const VectorXd Ainvg = rec.A_lu.solve(m.g);
    out.Q = m.B - m.D * AinvC;
    out.r = m.h - m.D * Ainvg;
  } else {
    out.Q.resize(0, 0);
    out.r.resize(0);
  }
  return {out, rec};
}

VectorXd recover_unconstrained(const MlcpReduction& record, const VectorXd& z) {
  require(z.size() == record.C.cols(), ErrorCode::dimension_mismatch,
          "recover_unconstrained: z length");
  if (record.C.cols() == 0) return record.A_lu.solve(-record.g);
  return record.A_lu.solve(-(record.C * z + record.g));
}

LcpResidualReport verify_solution(const Lcp& p, const LcpSolution& s,
                                  double tol) {
  require(p.dims_consistent() && s.z.size() == p.order() &&
              s.w.size() == p.order(),
          ErrorCode::dimension_mismatch, "verify_solution: dimensions");
  LcpResidualReport rep;
  const int n = p.order();
  if (n == 0) {
    rep.pass = true;
    return rep;
  }
  rep.equation = (s.w - (p.Q * s.z + p.r)).cwiseAbs().maxCoeff();
  rep.z_negativity = std::max(0.0, -s.z.minCoeff());
  rep.w_negativity = std::max(0.0, -s.w.minCoeff());
  rep.complementarity =
      std::abs(s.z.dot(s.w)) / (1.0 + s.z.norm() * s.w.norm());
  rep.pass = rep.equation <= tol && rep.z_negativity <= tol &&
             rep.w_negativity <= tol && rep.complementarity <= tol;
  return rep;
}

namespace {

// One run of Lemke's algorithm on (r, Q) with a unit covering vector and
// lexicographic ratio tests.  Returns false on ray termination.
bool lemke_once(const MatrixXd& Q, const VectorXd& r, double tol, int max_piv,
                VectorXd& z_out, int& pivots) {
  const int n = static_cast<int>(r.size());
  const int z0_col = 2 * n;
  const int rhs_col = 2 * n + 1;

  // tableau rows: basic-variable equations over [w | z | z0 | rhs]
  MatrixXd T(n, 2 * n + 2);
  T.leftCols(n).setIdentity();
  T.block(0, n, n, n) = -Q;
  T.col(z0_col).setConstant(-1.0);
  T.col(rhs_col) = r;

  std::vector<int> basis(n);
  for (int i = 0; i < n; ++i) basis[i] = i;  // w_i basic

  // initial pivot: z0 enters, most negative rhs row leaves
  int lv_row = 0;
  for (int i = 1; i < n; ++i)
    if (T(i, rhs_col) < T(lv_row, rhs_col)) lv_row = i;

  auto pivot = [&](int row, int col) {
    T.row(row) /= T(row, col);
    for (int i = 0; i < n; ++i) {
      if (i == row) continue;
      const double f = T(i, col);
      if (f != 0.0) T.row(i) -= f * T.row(row);
    }
  };

  int entering = z0_col;
  pivot(lv_row, entering);
  int leaving = basis[lv_row];
  basis[lv_row] = entering;
  entering = leaving + n;  // complement of the leaving w variable
  ++pivots;

  const double piv_tol = tol;
  for (int it = 0; it < max_piv; ++it) {
    // lexicographic ratio test over [rhs, w-columns] scaled by the pivot
    lv_row = -1;
    for (int i = 0; i < n; ++i) {
      const double c = T(i, entering);
      if (c <= piv_tol) continue;
      if (lv_row < 0) {
        lv_row = i;
        continue;
      }
      const double cb = T(lv_row, entering);
      // compare (rhs_i, w_i0, ...)/c against current best
      double a = T(i, rhs_col) / c, b = T(lv_row, rhs_col) / cb;
      int col = 0;
      while (std::abs(a - b) <= piv_tol * std::max(1.0, std::abs(b)) &&
             col < n) {
        a = T(i, col) / c;
        b = T(lv_row, col) / cb;
        ++col;
      }
      if (a < b) lv_row = i;
    }
    if (lv_row < 0) return false;  // secondary ray

    pivot(lv_row, entering);
    leaving = basis[lv_row];
    basis[lv_row] = entering;
    ++pivots;

    if (leaving == z0_col) {
      z_out.setZero(n);
      for (int i = 0; i < n; ++i)
        if (basis[i] >= n && basis[i] < 2 * n)
          z_out[basis[i] - n] = T(i, rhs_col);
      return true;
    }
    entering = (leaving < n) ? leaving + n : leaving - n;
  }
  return false;  // pivot budget exhausted on this attempt
}

double lcp_violation(const Lcp& p, const VectorXd& z) {
  const VectorXd w = p.Q * z + p.r;
  double viol = std::max(0.0, -z.minCoeff());
  viol = std::max(viol, std::max(0.0, -w.minCoeff()));
  viol = std::max(viol,
                  std::abs(z.dot(w)) / (1.0 + z.norm() * w.norm()));
  return viol;
}

// Correct the iterate on its positive support against the unshifted matrix
// using a rank-revealing least squares.  The correction deviates minimally
// from the raw iterate so a solver-selected vertex of a degenerate solution
// face is preserved.  Keeps whichever candidate violates less.
void polish_support(const Lcp& p, double tol, VectorXd& z) {
  VectorXd best = z;
  double best_viol = lcp_violation(p, z);
  IndexSet support;
  for (int i = 0; i < p.order(); ++i)
    if (z[i] > tol) support.push_back(i);
  VectorXd base = z;
  for (int pass = 0; pass < 3 && !support.empty(); ++pass) {
    const int s = static_cast<int>(support.size());
    MatrixXd Qss(s, s);
    VectorXd zraw(s), rs(s);
    for (int i = 0; i < s; ++i) {
      zraw[i] = base[support[i]];
      rs[i] = p.r[support[i]];
      for (int j = 0; j < s; ++j) Qss(i, j) = p.Q(support[i], support[j]);
    }
    Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(Qss);
    cod.setThreshold(1e-12);
    const VectorXd corr = cod.solve(-rs - Qss * zraw);
    const VectorXd zs = zraw + corr;
    if (!zs.allFinite()) break;
    VectorXd cand = VectorXd::Zero(p.order());
    IndexSet next;
    for (int i = 0; i < s; ++i) {
      if (zs[i] > 0) {
        cand[support[i]] = zs[i];
        next.push_back(support[i]);
      }
    }
    const double viol = lcp_violation(p, cand);
    if (viol < best_viol) {
      best_viol = viol;
      best = cand;
    }
    if (next.size() == support.size()) break;  // no clamping happened
    support = next;
    base = cand;
  }
  z = best;
}

}  // namespace

LcpSolution solve_lemke(const Lcp& p, const LemkeOptions& opts) {
  require(p.dims_consistent(), ErrorCode::dimension_mismatch,
          "solve_lemke: Q and r dimensions disagree");
  check_finite(p.Q, "Q");
  check_finite(p.r, "r");

  LcpSolution sol;
  const int n = p.order();
  if (n == 0) return sol;

  const double scale = std::max({1.0, p.Q.cwiseAbs().maxCoeff(),
                                 p.r.cwiseAbs().maxCoeff()});
  const double tol =
      opts.base_tol > 0 ? opts.base_tol : 1e-12 * scale * std::max(1, n);
  const double accept_tol = std::max(tol, 1e-8 * scale);
  const int max_piv = opts.max_pivots > 0 ? opts.max_pivots : 100 * n + 500;

  // trivial solution
  if (p.r.minCoeff() >= -tol) {
    sol.z = VectorXd::Zero(n);
    sol.w = p.r;
    return sol;
  }

  double max_abs_diag = 0;
  for (int i = 0; i < n; ++i)
    max_abs_diag = std::max(max_abs_diag, std::abs(p.Q(i, i)));
  if (max_abs_diag == 0) max_abs_diag = 1.0;

  std::vector<double> shifts = {0.0};
  for (double lam : opts.tikhonov_schedule) shifts.push_back(lam);

  // symmetric equilibration keeps badly scaled inertia ratios out of the
  // tableau arithmetic; complementarity is preserved under z -> S z
  VectorXd scale_d(n);
  for (int i = 0; i < n; ++i)
    scale_d[i] = 1.0 / std::sqrt(std::max(std::abs(p.Q(i, i)), 1e-8));
  const MatrixXd Qeq = scale_d.asDiagonal() * p.Q * scale_d.asDiagonal();
  const VectorXd req_ = scale_d.asDiagonal() * p.r;

  bool ray = false;
  for (double lam : shifts) {
    const double shift = lam * max_abs_diag;
    MatrixXd Qs = Qeq;
    for (int i = 0; i < n; ++i)
      Qs(i, i) += shift * scale_d[i] * scale_d[i];
    VectorXd z;
    if (!lemke_once(Qs, req_, tol, max_piv, z, sol.pivot_count)) {
      ray = true;
      continue;
    }
    z = scale_d.asDiagonal() * z;
    polish_support(p, accept_tol, z);
    LcpSolution cand;
    cand.z = z;
    cand.w = p.Q * z + p.r;
    const LcpResidualReport rep = verify_solution(p, cand, accept_tol);
    if (rep.pass) {
      sol.z = cand.z;
      sol.w = cand.w;
      sol.regularization_used = shift;
      for (int i = 0; i < n; ++i)
        if (sol.z[i] > accept_tol) sol.nonbasic_set.push_back(i);
      return sol;
    }
    ray = true;
  }
  throw IdynError(ray ? ErrorCode::ray_termination
                      : ErrorCode::max_pivots_exceeded,
                  "solve_lemke: regularization schedule exhausted");
}

namespace {

struct GramCache {
  const MatrixXd& N;
  const KernelFn& kernel;
  std::vector<VectorXd> cols;      // K applied to N rows
  std::vector<char> have;

  GramCache(const MatrixXd& N_, const KernelFn& k_)
      : N(N_), kernel(k_), cols(N_.rows()), have(N_.rows(), 0) {}

  const VectorXd& col(int i) {
    if (!have[i]) {
      cols[i] = kernel(N.row(i).transpose());
      have[i] = 1;
    }
    return cols[i];
  }

  double entry(int i, int j) { return N.row(i).dot(col(j)); }
};

}  // namespace

LcpSolution solve_ppm_kernel(const MatrixXd& N, int kernel_dim,
                             const KernelFn& apply_kernel, const VectorXd& r,
                             const IndexSet& warm_nonbasic,
                             const PpmOptions& opts) {
  const int n = static_cast<int>(N.rows());
  require(r.size() == n, ErrorCode::dimension_mismatch,
          "solve_ppm: N rows and r length disagree");
  check_finite(N, "N");
  check_finite(r, "r");

  LcpSolution sol;
  if (n == 0) return sol;

  const double tol =
      opts.tol > 0 ? opts.tol : 1e-10 * (1.0 + r.cwiseAbs().maxCoeff());
  const int max_piv = opts.max_pivots > 0 ? opts.max_pivots : 30 * n + 100;

  // trivial exit before any pivoting
  if (r.minCoeff() >= -tol) {
    sol.z = VectorXd::Zero(n);
    sol.w = r;
    return sol;
  }

  GramCache cache(N, apply_kernel);

  IndexSet bbar;
  for (int i : warm_nonbasic)
    if (i >= 0 && i < n && !contains(bbar, i)) bbar.push_back(i);
  std::sort(bbar.begin(), bbar.end());

  auto factor = [&](const IndexSet& set, MatrixXd& L) {
    if (static_cast<int>(set.size()) > kernel_dim) return false;
    const int s = static_cast<int>(set.size());
    MatrixXd G(s, s);
    for (int i = 0; i < s; ++i)
      for (int j = 0; j < s; ++j) G(i, j) = cache.entry(set[i], set[j]);
    return cholesky_factor(G, L);
  };

  MatrixXd L;
  // a stale warm set may be dependent under the current kernel
  while (!bbar.empty() && !factor(bbar, L)) bbar.pop_back();
  if (bbar.empty()) {
    int i0 = 0;
    for (int i = 1; i < n; ++i)
      if (r[i] < r[i0]) i0 = i;
    bbar.push_back(i0);
    if (!factor(bbar, L)) {
      bbar.clear();
      L.resize(0, 0);
    }
  }

  const bool have_warm = !bbar.empty() && !warm_nonbasic.empty();
  const double warm_tol =
      opts.warm_accept_tol > 0 ? std::max(opts.warm_accept_tol, tol) : tol;

  IndexSet rejected;
  VectorXd z_nb, w;
  for (int it = 0; it < max_piv; ++it) {
    const int s = static_cast<int>(bbar.size());
    if (s > 0 && !factor(bbar, L))
      throw IdynError(ErrorCode::singular_sub_block,
                      "solve_ppm: working set became singular");
    if (s > 0) {
      VectorXd b(s);
      for (int i = 0; i < s; ++i) b[i] = r[bbar[i]];
      z_nb = cholesky_solve(L, -b);
      VectorXd a = VectorXd::Zero(kernel_dim);
      for (int i = 0; i < s; ++i) a += cache.col(bbar[i]) * z_nb[i];
      w = N * a + r;
    } else {
      z_nb.resize(0);
      w = r;
    }

    // accept the carried working set at the looser bias tolerance
    if (it == 0 && have_warm &&
        (s == 0 || z_nb.minCoeff() >= -warm_tol) &&
        w.minCoeff() >= -warm_tol) {
      sol.z = VectorXd::Zero(n);
      for (int j = 0; j < s; ++j) sol.z[bbar[j]] = z_nb[j];
      sol.w = w;
      sol.nonbasic_set = bbar;
      return sol;
    }

    // candidate with the most negative w, lowest index on ties
    int enter = -1;
    double w_min = -tol;
    for (int i = 0; i < n; ++i) {
      if (contains(bbar, i) || contains(rejected, i)) continue;
      if (w[i] < w_min) {
        w_min = w[i];
        enter = i;
      }
    }

    if (enter < 0) {
      // no admissible index wants to enter
      bool any_negative = false;
      for (int i = 0; i < n; ++i)
        if (!contains(bbar, i) && w[i] < -tol) any_negative = true;
      if (any_negative)
        throw IdynError(ErrorCode::no_solution,
                        "solve_ppm: stalled; remaining negative w components "
                        "are unreachable from the working set");
      int jmin = -1;
      for (int j = 0; j < s; ++j)
        if (jmin < 0 || z_nb[j] < z_nb[jmin]) jmin = j;
      if (jmin >= 0 && z_nb[jmin] < -tol) {
        const int k = bbar[jmin];
        bbar.erase(bbar.begin() + jmin);
        sol.pivot_trace.push_back(-(k + 1));
        ++sol.pivot_count;
        rejected.clear();
        continue;
      }
      sol.z = VectorXd::Zero(n);
      for (int j = 0; j < s; ++j) sol.z[bbar[j]] = z_nb[j];
      sol.w = w;
      sol.nonbasic_set = bbar;
      return sol;
    }

    // try to bring `enter` into the non-basic set
    IndexSet grown = bbar;
    const int enter_pos = static_cast<int>(
        std::lower_bound(grown.begin(), grown.end(), enter) - grown.begin());
    grown.insert(grown.begin() + enter_pos, enter);
    MatrixXd Lg;
    if (!factor(grown, Lg)) {
      // degenerate pivot: the grown Gram is singular, so slide along its
      // null direction until a current member blocks, and exchange.  When
      // the entering row has no null component it cannot carry force and is
      // rejected outright.
      const int gs = static_cast<int>(grown.size());
      MatrixXd G(gs, gs);
      for (int i = 0; i < gs; ++i)
        for (int j = 0; j < gs; ++j) G(i, j) = cache.entry(grown[i], grown[j]);
      Eigen::JacobiSVD<MatrixXd> svd(G, Eigen::ComputeFullV);
      VectorXd y = svd.matrixV().col(gs - 1);
      if (std::abs(y[enter_pos]) < 1e-8) {
        rejected.push_back(enter);
        continue;
      }
      if (y[enter_pos] < 0) y = -y;
      int drop = -1;
      double best_ratio = 0;
      for (int i = 0; i < gs; ++i) {
        if (i == enter_pos || y[i] >= -1e-12) continue;
        // z value of this member before the insertion
        const int old_pos = i < enter_pos ? i : i - 1;
        const double ratio = std::max(z_nb[old_pos], 0.0) / (-y[i]);
        if (drop < 0 || ratio < best_ratio) {
          drop = i;
          best_ratio = ratio;
        }
      }
      if (drop < 0) {
        rejected.push_back(enter);
        continue;
      }
      const int k_drop = grown[drop];
      bbar = grown;
      bbar.erase(std::find(bbar.begin(), bbar.end(), k_drop));
      sol.pivot_trace.push_back(enter + 1);
      sol.pivot_trace.push_back(-(k_drop + 1));
      sol.pivot_count += 2;
      rejected.clear();
      continue;
    }
    const IndexSet old = bbar;
    bbar = grown;
    sol.pivot_trace.push_back(enter + 1);
    ++sol.pivot_count;
    // a z component computed before the insertion may want to leave
    int jmin = -1;
    for (int j = 0; j < s; ++j)
      if (jmin < 0 || z_nb[j] < z_nb[jmin]) jmin = j;
    if (jmin >= 0 && z_nb[jmin] < -tol) {
      const int k = old[jmin];
      bbar.erase(std::find(bbar.begin(), bbar.end(), k));
      sol.pivot_trace.push_back(-(k + 1));
      ++sol.pivot_count;
    }
    rejected.clear();
  }
  throw IdynError(ErrorCode::max_pivots_exceeded,
                  "solve_ppm: pivot budget exhausted");
}

LcpSolution solve_ppm(const MatrixXd& N, const Eigen::LLT<MatrixXd>& Mfac,
                      const VectorXd& fstar, const IndexSet& warm_nonbasic,
                      const PpmOptions& opts) {
  require(N.cols() == Mfac.matrixL().rows(), ErrorCode::dimension_mismatch,
          "solve_ppm: N columns and M order disagree");
  require(fstar.size() == N.cols(), ErrorCode::dimension_mismatch,
          "solve_ppm: fstar length");
  const int m = static_cast<int>(N.cols());
  const VectorXd u0 = Mfac.solve(fstar);
  const VectorXd r = N * u0;
  KernelFn kernel = [&Mfac](const VectorXd& x) { return Mfac.solve(x); };
  return solve_ppm_kernel(N, m, kernel, r, warm_nonbasic, opts);
}

namespace {

struct MinDiffContext {
  const MatrixXd& Q;       // reduced LCP matrix
  const VectorXd& r;       // reduced LCP vector
  const MatrixXd& Xz;      // x = x0_part + Xz z
  const VectorXd& x_part;
  const VectorXd& x0;
  double tol;
};

struct MinDiffResult {
  VectorXd x;
  VectorXd z;
  double dist = kInf;
};

MinDiffResult min_diff_leaf(const MinDiffContext& ctx, const IndexSet& bbar) {
  MinDiffResult res;
  const int t = static_cast<int>(ctx.r.size());
  const int s = static_cast<int>(bbar.size());
  VectorXd z = VectorXd::Zero(t);
  if (s > 0) {
    MatrixXd Qss(s, s);
    VectorXd rs(s);
    for (int i = 0; i < s; ++i) {
      rs[i] = ctx.r[bbar[i]];
      for (int j = 0; j < s; ++j) Qss(i, j) = ctx.Q(bbar[i], bbar[j]);
    }
    Eigen::FullPivLU<MatrixXd> lu(Qss);
    lu.setThreshold(1e-12);
    if (!lu.isInvertible()) return res;  // singular sub-system: skip
    const VectorXd zs = lu.solve(-rs);
    if (!zs.allFinite() || zs.minCoeff() < -ctx.tol) return res;
    for (int i = 0; i < s; ++i) z[bbar[i]] = zs[i];
  }
  const VectorXd w = ctx.Q * z + ctx.r;
  for (int i = 0; i < t; ++i)
    if (!contains(bbar, i) && w[i] < -ctx.tol) return res;
  res.x = ctx.x_part + ctx.Xz * z;
  res.z = z;
  res.dist = (res.x - ctx.x0).norm();
  return res;
}

MinDiffResult min_diff_recurse(const MinDiffContext& ctx, IndexSet& bbar,
                               int level) {
  if (level > 0) {
    MinDiffResult r1 = min_diff_recurse(ctx, bbar, level - 1);
    bbar.push_back(level - 1);
    MinDiffResult r2 = min_diff_recurse(ctx, bbar, level - 1);
    bbar.pop_back();
    return (r1.dist < r2.dist) ? r1 : r2;
  }
  IndexSet sorted = bbar;
  std::sort(sorted.begin(), sorted.end());
  return min_diff_leaf(ctx, sorted);
}

}  // namespace

std::pair<VectorXd, double> solve_min_diff(const Mlcp& m, const VectorXd& x0,
                                           int enumeration_cap, double tol,
                                           VectorXd* z_out) {
  const int t = m.num_complementary();
  require(t <= enumeration_cap, ErrorCode::enumeration_cap_exceeded,
          "solve_min_diff: too many complementarity variables to enumerate");
  require(x0.size() == m.num_unconstrained(), ErrorCode::dimension_mismatch,
          "solve_min_diff: x0 length");

  auto [lcp, rec] = mlcp_to_lcp(m);  // throws singular_a when A is singular
  const MatrixXd Xz = t > 0 ? MatrixXd(-rec.A_lu.solve(m.C))
                            : MatrixXd(m.num_unconstrained(), 0);
  const VectorXd x_part = rec.A_lu.solve(-m.g);

  MinDiffContext ctx{lcp.Q, lcp.r, Xz, x_part, x0, tol};
  IndexSet bbar;
  const MinDiffResult best = min_diff_recurse(ctx, bbar, t);
  require(best.dist < kInf, ErrorCode::no_solution,
          "solve_min_diff: no basis assignment yields a valid solution");
  if (z_out) *z_out = best.z;
  return {best.x, best.dist};
}

void write_lcp(const std::string& path, const Lcp& p) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::io_error, "write_lcp: cannot open " + path);
  const int n = p.order();
  out << n << "\n";
  char buf[64];
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", p.Q(i, j));
      out << buf << (j + 1 == n ? "" : " ");
    }
    out << "\n";
  }
  for (int j = 0; j < n; ++j) {
    std::snprintf(buf, sizeof(buf), "%.17g", p.r[j]);
    out << buf << (j + 1 == n ? "" : " ");
  }
  out << "\n";
  require(out.good(), ErrorCode::io_error, "write_lcp: write failed");
}

Lcp read_lcp(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::io_error, "read_lcp: cannot open " + path);
  int n = 0;
  in >> n;
  require(in.good() && n >= 0, ErrorCode::io_error, "read_lcp: bad header");
  Lcp p;
  p.Q.resize(n, n);
  p.r.resize(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) in >> p.Q(i, j);
  for (int j = 0; j < n; ++j) in >> p.r[j];
  require(!in.fail(), ErrorCode::io_error, "read_lcp: truncated file");
  return p;
}

}  // namespace idyn
