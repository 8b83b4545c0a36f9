/****************************************************************************
 * This library is distributed under the terms of the Apache V2.0 license
 * (obtainable from http://www.apache.org/licenses/LICENSE-2.0).
 ****************************************************************************/
#include "idyn/inverse_dynamics.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

namespace idyn {

ContactKey contact_key(const ContactPoint& c) {
  return {c.body_a, c.body_b, c.feature_a, c.feature_b};
}

IndexSet remap_warm_start(const std::vector<ContactKey>& prev_keys,
                          const IndexSet& prev_nonbasic,
                          const std::vector<ContactKey>& cur_keys) {
  IndexSet out;
  for (int i : prev_nonbasic) {
    if (i < 0 || i >= static_cast<int>(prev_keys.size())) continue;
    for (int j = 0; j < static_cast<int>(cur_keys.size()); ++j) {
      if (cur_keys[j] == prev_keys[i] && !contains(out, j)) {
        out.push_back(j);
        break;
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::pair<IndexSet, IndexSet> find_indices(const MatrixXd& M,
                                           const MatrixXd& P,
                                           const MatrixXd& S,
                                           const MatrixXd& T) {
  const int m = static_cast<int>(M.rows());
  require(P.cols() == m || P.rows() == 0, ErrorCode::dimension_mismatch,
          "find_indices: P columns");
  const int n = static_cast<int>(S.rows());
  require(T.rows() == n, ErrorCode::dimension_mismatch,
          "find_indices: S and T row counts differ");
  const auto Mllt = M.llt();
  require(Mllt.info() == Eigen::Success, ErrorCode::config_error,
          "find_indices: M is not positive definite");

  auto nonsingular = [&](const IndexSet& ssel, const IndexSet& tsel) {
    const int cols =
        static_cast<int>(P.rows() + ssel.size() + tsel.size());
    if (cols == 0) return true;
    if (cols > m) return false;
    MatrixXd X(m, cols);
    int at = 0;
    for (int r = 0; r < P.rows(); ++r) X.col(at++) = P.row(r).transpose();
    for (int r : ssel) X.col(at++) = S.row(r).transpose();
    for (int r : tsel) X.col(at++) = T.row(r).transpose();
    const MatrixXd G = X.transpose() * Mllt.solve(X);
    MatrixXd L;
    return cholesky_factor(G, L);
  };

  IndexSet ssel, tsel;
  for (int i = 0; i < n; ++i) {
    IndexSet strial = ssel;
    strial.push_back(i);
    if (nonsingular(strial, tsel)) ssel = strial;
    IndexSet ttrial = tsel;
    ttrial.push_back(i);
    if (nonsingular(ssel, ttrial)) tsel = ttrial;
  }
  return {ssel, tsel};
}

namespace {

// signed tangential impulses from pyramid components (exact for k <= 4)
void fold_pyramid(int k, const IndexSet& fin, int n_all, const VectorXd& fF,
                  VectorXd& fS, VectorXd& fT) {
  const int nf = static_cast<int>(fin.size());
  for (int fi = 0; fi < nf; ++fi) {
    double s = 0, t = 0;
    for (int j = 0; j < k; ++j) {
      const int pair = j / 2;
      const double sign = (j % 2 == 0) ? 1.0 : -1.0;
      double ca, sa;
      if (k <= 4) {
        ca = (pair == 0) ? 1.0 : 0.0;
        sa = (pair == 0) ? 0.0 : 1.0;
      } else {
        const double angle = M_PI * pair / (k / 2);
        ca = std::cos(angle);
        sa = std::sin(angle);
      }
      s += sign * ca * fF[j * nf + fi];
      t += sign * sa * fF[j * nf + fi];
    }
    if (fin[fi] < n_all) {
      fS[fin[fi]] = s;
      fT[fin[fi]] = t;
    }
  }
}

// contact-free inverse dynamics: solve [[M, -P'],[P, 0]] [v+; tau dt] = rhs
void unconstrained_idyn(const MultibodyState& st, const VectorXd& qdot_des,
                        double dt, VectorXd& v_plus, VectorXd& tau) {
  const int m = st.num_dofs();
  const int nq = st.num_actuated();
  MatrixXd A(m + nq, m + nq);
  A.setZero();
  A.topLeftCorner(m, m) = st.M;
  A.topRightCorner(m, nq) = -st.P.transpose();
  A.bottomLeftCorner(nq, m) = st.P;
  VectorXd rhs(m + nq);
  rhs.head(m) = st.M * st.v + dt * st.f_ext;
  rhs.tail(nq) = qdot_des;
  const VectorXd x = A.partialPivLu().solve(rhs);
  v_plus = x.head(m);
  tau = x.tail(nq) / dt;
}

// reduce the positive-normal support of a QP-model solution to at most m
// contacts: bundles (normal plus its tangentials) are rescaled along
// wrench-null combinations until the count drops, leaving v_plus and tau
// untouched
struct SupportGroup {
  int contact = 0;
  IndexSet z_cols;
};

void consolidate_support(const MatrixXd& R,
                         const std::vector<SupportGroup>& groups, VectorXd& z,
                         double tol) {
  const int m = static_cast<int>(R.rows());
  auto positive = [&]() {
    IndexSet out;
    for (int gi = 0; gi < static_cast<int>(groups.size()); ++gi)
      if (z[groups[gi].z_cols.front()] > tol) out.push_back(gi);
    return out;
  };
  for (int guard = 0; guard < 4 * static_cast<int>(groups.size()); ++guard) {
    const IndexSet sup = positive();
    if (static_cast<int>(sup.size()) <= m) return;
    MatrixXd Gm(m, static_cast<int>(sup.size()));
    for (int c = 0; c < static_cast<int>(sup.size()); ++c) {
      VectorXd w = VectorXd::Zero(m);
      for (int col : groups[sup[c]].z_cols) w += R.col(col) * z[col];
      Gm.col(c) = w;
    }
    Eigen::JacobiSVD<MatrixXd> svd(Gm, Eigen::ComputeFullV);
    VectorXd c = svd.matrixV().col(svd.matrixV().cols() - 1);
    if (c.minCoeff() > -1e-14) c = -c;
    double gamma = std::numeric_limits<double>::infinity();
    for (int i = 0; i < c.size(); ++i)
      if (c[i] < -1e-14) gamma = std::min(gamma, -1.0 / c[i]);
    if (!std::isfinite(gamma)) return;
    for (int i = 0; i < c.size(); ++i) {
      const double scale = std::max(0.0, 1.0 + gamma * c[i]);
      for (int col : groups[sup[i]].z_cols) z[col] *= scale;
    }
  }
}

}  // namespace

IdynResult idyn_no_slip(const IdynRequest& req, const IndexSet& warm) {
  const MultibodyState& st = req.state;
  const int m = st.num_dofs();
  const int nq = st.num_actuated();
  const int n = req.contacts.size();
  require(req.dt > 0, ErrorCode::config_error, "idyn_no_slip: dt > 0");
  require(req.qdot_des.size() == nq, ErrorCode::dimension_mismatch,
          "idyn_no_slip: qdot_des length");

  IdynResult res;
  if (n == 0) {
    unconstrained_idyn(st, req.qdot_des, req.dt, res.v_plus, res.tau);
    res.f_N.resize(0);
    res.f_S.resize(0);
    res.f_T.resize(0);
    return res;
  }

  const auto [ssel, tsel] = find_indices(st.M, st.P, req.contacts.S,
                                         req.contacts.T);
  const MatrixXd Ssel = select_rows(req.contacts.S, ssel);
  const MatrixXd Tsel = select_rows(req.contacts.T, tsel);
  const int ns = static_cast<int>(ssel.size());
  const int nt = static_cast<int>(tsel.size());
  const int p = m + nq + ns + nt;

  MatrixXd A(p, p);
  A.setZero();
  A.topLeftCorner(m, m) = st.M;
  A.block(0, m, m, nq) = -st.P.transpose();
  A.block(0, m + nq, m, ns) = -Ssel.transpose();
  A.block(0, m + nq + ns, m, nt) = -Tsel.transpose();
  A.block(m, 0, nq, m) = st.P;
  A.block(m + nq, 0, ns, m) = Ssel;
  A.block(m + nq + ns, 0, nt, m) = Tsel;
  const Eigen::PartialPivLU<MatrixXd> Alu(A);
  auto refined_solve = [&](const VectorXd& b) {
    VectorXd x = Alu.solve(b);
    for (int pass = 0; pass < 2; ++pass) x += Alu.solve(b - A * x);
    return x;
  };

  const VectorXd kappa = -req.dt * st.f_ext - st.M * st.v;
  VectorXd g = VectorXd::Zero(p);
  g.head(m) = kappa;
  g.segment(m, nq) = -req.qdot_des;

  const VectorXd x0 = refined_solve(-g);
  const VectorXd phi = req.contacts.gaps();
  const VectorXd r = phi / req.dt + req.contacts.N * x0.head(m);

  KernelFn kernel = [&](const VectorXd& y) {
    VectorXd rhs = VectorXd::Zero(p);
    rhs.head(m) = y;
    return VectorXd(refined_solve(rhs).head(m));
  };

  PpmOptions popts;
  popts.warm_accept_tol =
      req.opts.warm_bias_tol * (1.0 + r.cwiseAbs().maxCoeff());
  LcpSolution sol;
  try {
    sol = solve_ppm_kernel(req.contacts.N, m, kernel, r, warm, popts);
  } catch (const IdynError& err) {
    if (err.code() == ErrorCode::no_solution)
      throw IdynError(ErrorCode::inconsistent_desired_accel,
                      "idyn_no_slip: desired accelerations are inconsistent "
                      "with the rigid no-slip contact constraints");
    throw;
  }

  VectorXd rhs = -g;
  rhs.head(m) += req.contacts.N.transpose() * sol.z;
  const VectorXd x = refined_solve(rhs);

  res.v_plus = x.head(m);
  res.tau = x.segment(m, nq) / req.dt;
  res.f_N = sol.z;
  res.f_S = VectorXd::Zero(n);
  res.f_T = VectorXd::Zero(n);
  for (int i = 0; i < ns; ++i) res.f_S[ssel[i]] = x[m + nq + i];
  for (int i = 0; i < nt; ++i) res.f_T[tsel[i]] = x[m + nq + ns + i];
  res.nonbasic_set = sol.nonbasic_set;
  res.diagnostics.pivots = sol.pivot_count;
  res.diagnostics.regularization = sol.regularization_used;

  const double scale = 1.0 + res.v_plus.cwiseAbs().maxCoeff();
  if ((req.contacts.N * res.v_plus + phi / req.dt).minCoeff() <
      -1e3 * req.opts.tol_equality * scale)
    throw IdynError(ErrorCode::inconsistent_desired_accel,
                    "idyn_no_slip: retrieved velocities violate the "
                    "stabilized non-penetration bound");
  return res;
}

IdynResult consistency_fallback(const IdynRequest& req,
                                const IdynResult& predicted) {
  const MultibodyState& st = req.state;
  const int m = st.num_dofs();
  const int nq = st.num_actuated();
  const int n = req.contacts.size();
  const VectorXd phi = req.contacts.gaps();

  if (predicted.v_plus.size() == m && n > 0) {
    const double viol =
        (req.contacts.N * predicted.v_plus + phi / req.dt).minCoeff();
    if (viol >= -req.opts.tol_equality) return predicted;
  }

  const auto [ssel, tsel] = find_indices(st.M, st.P, req.contacts.S,
                                         req.contacts.T);
  const MatrixXd Ssel = select_rows(req.contacts.S, ssel);
  const MatrixXd Tsel = select_rows(req.contacts.T, tsel);
  const int nst = static_cast<int>(ssel.size() + tsel.size());
  MatrixXd ST(nst, m);
  ST.topRows(ssel.size()) = Ssel;
  ST.bottomRows(tsel.size()) = Tsel;

  const auto Mllt = st.M.llt();
  const VectorXd v_free = st.v + req.dt * Mllt.solve(st.f_ext);

  // eliminate the no-slip multipliers: v+ lives in the ST null space after
  // an oblique projection
  MatrixXd proj = MatrixXd::Identity(m, m);
  if (nst > 0) {
    const MatrixXd MinvST = Mllt.solve(ST.transpose());
    const MatrixXd Gst = ST * MinvST;
    proj -= MinvST * Gst.ldlt().solve(ST);
  }

  MatrixXd gen(m, nq + n);  // impulse directions for (tau dt, f_N)
  gen.leftCols(nq) = st.P.transpose();
  gen.rightCols(n) = req.contacts.N.transpose();
  const MatrixXd Vu = proj * Mllt.solve(gen);
  const VectorXd V0 = proj * v_free;

  Qp qp;
  const MatrixXd PVu = st.P * Vu;
  qp.H = PVu.transpose() * PVu;
  qp.H = 0.5 * (qp.H + qp.H.transpose());
  qp.c = PVu.transpose() * (st.P * V0 - req.qdot_des);
  qp.Aineq = req.contacts.N * Vu;
  qp.bineq = -phi / req.dt - req.contacts.N * V0;
  for (int i = 0; i < n; ++i) qp.lb_zero.push_back(nq + i);
  const QpResult qr = solve_qp(qp);

  IdynResult out;
  out.v_plus = V0 + Vu * qr.x;
  out.tau = qr.x.head(nq) / req.dt;
  out.f_N = qr.x.tail(n);
  out.f_S = VectorXd::Zero(n);
  out.f_T = VectorXd::Zero(n);
  if (nst > 0) {
    const MatrixXd MinvST = Mllt.solve(ST.transpose());
    const MatrixXd Gst = ST * MinvST;
    const VectorXd f_st = Gst.ldlt().solve(
        -(ST * (v_free + Mllt.solve(gen * qr.x))));
    for (int i = 0; i < static_cast<int>(ssel.size()); ++i)
      out.f_S[ssel[i]] = f_st[i];
    for (int i = 0; i < static_cast<int>(tsel.size()); ++i)
      out.f_T[tsel[i]] = f_st[ssel.size() + i];
  }
  out.diagnostics.consistency_fallback_used = true;
  out.diagnostics.pivots = qr.diagnostics.pivots;
  return out;
}

VectorXd idyn_solution_vector(const IdynRequest& req, const IdynResult& res) {
  VectorXd x(res.v_plus.size() + res.tau.size());
  x.head(res.v_plus.size()) = res.v_plus;
  x.tail(res.tau.size()) = req.dt * res.tau;
  return x;
}

IdynResult idyn_coulomb_lcp(const IdynRequest& req,
                            const std::optional<VectorXd>& x_prev) {
  const MultibodyState& st = req.state;
  const int m = st.num_dofs();
  const int nq = st.num_actuated();
  const int n = req.contacts.size();
  require(req.dt > 0, ErrorCode::config_error, "idyn_coulomb_lcp: dt > 0");

  IdynResult res;
  if (n == 0) {
    unconstrained_idyn(st, req.qdot_des, req.dt, res.v_plus, res.tau);
    res.f_N.resize(0);
    res.f_S.resize(0);
    res.f_T.resize(0);
    res.lambda.resize(0);
    return res;
  }
  for (const auto& c : req.contacts.contacts)
    require(std::isfinite(c.mu), ErrorCode::config_error,
            "idyn_coulomb_lcp: requires finite friction coefficients");

  const int k = req.contacts.k;
  const int p = m + nq;
  const int t = (k + 2) * n;

  Mlcp mlcp;
  mlcp.A.setZero(p, p);
  mlcp.A.topLeftCorner(m, m) = st.M;
  mlcp.A.topRightCorner(m, nq) = -st.P.transpose();
  mlcp.A.bottomLeftCorner(nq, m) = st.P;
  mlcp.C.setZero(p, t);
  mlcp.C.block(0, 0, m, n) = -req.contacts.N.transpose();
  mlcp.C.block(0, n, m, n * k) = -req.contacts.F.transpose();
  mlcp.D.setZero(t, p);
  mlcp.D.block(0, 0, n, m) = req.contacts.N;
  mlcp.D.block(n, 0, n * k, m) = req.contacts.F;
  mlcp.B.setZero(t, t);
  mlcp.B.block(n, n + n * k, n * k, n) = req.contacts.E.transpose();
  mlcp.B.block(n + n * k, n, n, n * k) = -req.contacts.E;
  for (int i = 0; i < n; ++i)
    mlcp.B(n + n * k + i, i) = req.contacts.contacts[i].mu;
  const VectorXd kappa = -req.dt * st.f_ext - st.M * st.v;
  mlcp.g.setZero(p);
  mlcp.g.head(m) = kappa;
  mlcp.g.segment(m, nq) = -req.qdot_des;
  mlcp.h.setZero(t);
  mlcp.h.head(n) = req.contacts.gaps() / req.dt;

  VectorXd x, z;
  if (x_prev && t <= req.opts.min_diff_cap) {
    require(x_prev->size() == p, ErrorCode::dimension_mismatch,
            "idyn_coulomb_lcp: x_prev length");
    auto [xm, dist] = solve_min_diff(mlcp, *x_prev, req.opts.min_diff_cap,
                                     req.opts.tol_complementarity, &z);
    (void)dist;
    x = xm;
  } else {
    if (x_prev) res.diagnostics.chatter_warning = true;
    auto [lcp, rec] = mlcp_to_lcp(mlcp);
    const LcpSolution sol = solve_lemke(lcp);
    z = sol.z;
    x = recover_unconstrained(rec, z);
    res.diagnostics.pivots = sol.pivot_count;
    res.diagnostics.regularization = sol.regularization_used;
  }

  res.v_plus = x.head(m);
  res.tau = x.tail(nq) / req.dt;
  res.f_N = z.head(n);
  res.f_S = VectorXd::Zero(n);
  res.f_T = VectorXd::Zero(n);
  IndexSet all;
  for (int i = 0; i < n; ++i) all.push_back(i);
  fold_pyramid(k, all, n, z.segment(n, n * k), res.f_S, res.f_T);
  res.lambda = z.tail(n) / req.dt;  // slip-speed surrogate in m/s
  return res;
}

namespace {

// wrench columns and bookkeeping shared by the Stage I/II pipeline
struct QpAssembly {
  IndexSet fin, inf, sel_s, sel_t;
  MatrixXd Ffin;  // pyramid rows of the finite-mu subset
  MatrixXd Ssel, Tsel;
  MatrixXd R;     // m x nz in the original dof order
  int nz = 0, nf = 0, ns = 0, nt = 0;
};

QpAssembly assemble_qp_columns(const MultibodyState& st, const ContactSet& cs,
                               bool pyramid) {
  QpAssembly a;
  const int m = st.num_dofs();
  const int n = cs.size();
  const int k = cs.k;
  for (int i = 0; i < n; ++i) {
    if (pyramid && !cs.contacts[i].no_slip())
      a.fin.push_back(i);
    else
      a.inf.push_back(i);
  }
  a.nf = static_cast<int>(a.fin.size());
  const MatrixXd Sinf = select_rows(cs.S, a.inf);
  const MatrixXd Tinf = select_rows(cs.T, a.inf);
  std::tie(a.sel_s, a.sel_t) =
      find_indices(st.M, st.P, Sinf, Tinf);
  a.Ssel = select_rows(Sinf, a.sel_s);
  a.Tsel = select_rows(Tinf, a.sel_t);
  a.ns = static_cast<int>(a.sel_s.size());
  a.nt = static_cast<int>(a.sel_t.size());
  a.Ffin.resize(a.nf * k, m);
  for (int j = 0; j < k; ++j)
    for (int fi = 0; fi < a.nf; ++fi)
      a.Ffin.row(j * a.nf + fi) = cs.F.row(j * n + a.fin[fi]);
  a.nz = n + a.nf * k + a.ns + a.nt;
  a.R.resize(m, a.nz);
  a.R.leftCols(n) = cs.N.transpose();
  a.R.block(0, n, m, a.nf * k) = a.Ffin.transpose();
  a.R.block(0, n + a.nf * k, m, a.ns) = a.Ssel.transpose();
  a.R.block(0, n + a.nf * k + a.ns, m, a.nt) = a.Tsel.transpose();
  return a;
}

void fill_result_from_z(const QpAssembly& a, const ContactSet& cs,
                        const VectorXd& z, IdynResult& res) {
  const int n = cs.size();
  res.f_N = z.head(n);
  res.f_S = VectorXd::Zero(n);
  res.f_T = VectorXd::Zero(n);
  fold_pyramid(cs.k, a.fin, n, z.segment(n, a.nf * cs.k), res.f_S, res.f_T);
  for (int i = 0; i < a.ns; ++i)
    res.f_S[a.inf[a.sel_s[i]]] = z[n + a.nf * cs.k + i];
  for (int i = 0; i < a.nt; ++i)
    res.f_T[a.inf[a.sel_t[i]]] = z[n + a.nf * cs.k + a.ns + i];
}

std::vector<SupportGroup> support_groups(const QpAssembly& a, int n, int k) {
  std::vector<SupportGroup> groups(n);
  for (int i = 0; i < n; ++i) {
    groups[i].contact = i;
    groups[i].z_cols.push_back(i);
  }
  for (int fi = 0; fi < a.nf; ++fi)
    for (int j = 0; j < k; ++j)
      groups[a.fin[fi]].z_cols.push_back(n + j * a.nf + fi);
  for (int i = 0; i < a.ns; ++i)
    groups[a.inf[a.sel_s[i]]].z_cols.push_back(n + a.nf * k + i);
  for (int i = 0; i < a.nt; ++i)
    groups[a.inf[a.sel_t[i]]].z_cols.push_back(n + a.nf * k + a.ns + i);
  return groups;
}

IdynResult stage_result(const Stage1Record& rec, const VectorXd& z,
                        const QpAssembly& a) {
  const int m = static_cast<int>(rec.base_idx.size() + rec.act_idx.size());
  const int nb = static_cast<int>(rec.base_idx.size());
  const int nq = static_cast<int>(rec.act_idx.size());
  IdynResult res;
  const VectorXd x_force =
      rec.G.llt().solve(rec.qdot_des - rec.kvec - rec.U * z) / rec.dt;
  res.tau = x_force + rec.f_id;
  const VectorXd vb = rec.Z * z + rec.p;
  res.v_plus = VectorXd::Zero(m);
  for (int i = 0; i < nb; ++i) res.v_plus[rec.base_idx[i]] = vb[i];
  for (int i = 0; i < nq; ++i)
    res.v_plus[rec.act_idx[i]] = rec.qdot_des[i];
  fill_result_from_z(a, rec.contacts, z, res);
  return res;
}

}  // namespace

static std::pair<IdynResult, Stage1Record> idyn_qp_stage1_impl(
    const IdynRequest& req, bool pyramid) {
  const MultibodyState& st = req.state;
  const int m = st.num_dofs();
  const int nq = st.num_actuated();
  const int n = req.contacts.size();
  require(req.dt > 0, ErrorCode::config_error, "idyn_qp: dt > 0");
  require(req.qdot_des.size() == nq, ErrorCode::dimension_mismatch,
          "idyn_qp: qdot_des length");

  Stage1Record rec;
  rec.pyramid = pyramid;
  rec.dt = req.dt;
  rec.opts = req.opts;
  rec.contacts = req.contacts;
  rec.n = n;
  rec.k = req.contacts.k;

  // permutation: unactuated "base" block first, actuated block last in the
  // row order of P
  std::vector<char> is_act(m, 0);
  for (int r = 0; r < nq; ++r) {
    int col = -1;
    for (int j = 0; j < m; ++j)
      if (st.P(r, j) == 1.0) col = j;
    require(col >= 0, ErrorCode::config_error, "idyn_qp: malformed P");
    rec.act_idx.push_back(col);
    is_act[col] = 1;
  }
  for (int j = 0; j < m; ++j)
    if (!is_act[j]) rec.base_idx.push_back(j);
  const int nb = static_cast<int>(rec.base_idx.size());
  IndexSet perm = rec.base_idx;
  perm.insert(perm.end(), rec.act_idx.begin(), rec.act_idx.end());

  MatrixXd Mp(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) Mp(i, j) = st.M(perm[i], perm[j]);
  VectorXd fe(m), vp(m);
  for (int i = 0; i < m; ++i) {
    fe[i] = st.f_ext[perm[i]];
    vp[i] = st.v[perm[i]];
  }
  const MatrixXd Minv = Mp.llt().solve(MatrixXd::Identity(m, m));
  rec.Mbb = Mp.topLeftCorner(nb, nb);
  rec.Mbq = Mp.topRightCorner(nb, nq);
  const MatrixXd Dblk = Minv.topLeftCorner(nb, nb);
  const MatrixXd Eblk = Minv.topRightCorner(nb, nq);
  rec.G = Minv.bottomRightCorner(nq, nq);
  rec.qdot_des = req.qdot_des;

  // joint forces solving the contact-free problem on the actuated block
  const VectorXd qddot_des = (req.qdot_des - vp.tail(nq)) / req.dt;
  rec.f_id = Mp.bottomRightCorner(nq, nq) * qddot_des - fe.tail(nq);

  VectorXd impulse = req.dt * fe;
  impulse.tail(nq) += req.dt * rec.f_id;
  const VectorXd j_vec = vp.head(nb) + Minv.topRows(nb) * impulse;
  rec.kvec = vp.tail(nq) + Minv.bottomRows(nq) * impulse;

  QpAssembly a = assemble_qp_columns(st, req.contacts, pyramid);
  MatrixXd Rp(m, a.nz);
  for (int i = 0; i < m; ++i) Rp.row(i) = a.R.row(perm[i]);
  rec.R = Rp;

  const auto Gllt = rec.G.llt();
  const MatrixXd topInv = Minv.topRows(nb);
  const MatrixXd botInv = Minv.bottomRows(nq);
  rec.Z = (topInv - Eblk * Gllt.solve(botInv)) * Rp;
  rec.p = j_vec + Eblk * Gllt.solve(req.qdot_des - rec.kvec);
  rec.U = botInv * Rp;
  rec.Hz = rec.Z.transpose() * rec.Mbb * rec.Z;
  rec.Hz = 0.5 * (rec.Hz + rec.Hz.transpose());
  rec.fin = a.fin;
  rec.inf = a.inf;
  rec.sel_s = a.sel_s;
  rec.sel_t = a.sel_t;
  rec.ns = a.ns;
  rec.nt = a.nt;

  IdynResult res;
  if (n == 0) {
    rec.z1.resize(0);
    res = stage_result(rec, rec.z1, a);
    rec.result = res;
    return {res, rec};
  }

  // the reduced Stage I QP over z
  Qp qp;
  qp.H = rec.Hz;
  qp.c = rec.Z.transpose() * (rec.Mbb * rec.p + rec.Mbq * req.qdot_des);
  MatrixXd Np(n, m);
  const MatrixXd& Ncs = req.contacts.N;
  for (int j = 0; j < m; ++j) Np.col(j) = Ncs.col(perm[j]);
  const MatrixXd Nb = Np.leftCols(nb);
  const MatrixXd Nq = Np.rightCols(nq);
  const VectorXd phi = req.contacts.gaps();
  qp.Aineq.setZero(n + a.nf, a.nz);
  qp.bineq.setZero(n + a.nf);
  qp.Aineq.topRows(n) = Nb * rec.Z;
  qp.bineq.head(n) = -phi / req.dt - Nb * rec.p - Nq * req.qdot_des;
  for (int fi = 0; fi < a.nf; ++fi) {
    qp.Aineq(n + fi, a.fin[fi]) = req.contacts.contacts[a.fin[fi]].mu;
    for (int j = 0; j < rec.k; ++j)
      qp.Aineq(n + fi, n + j * a.nf + fi) = -1.0;
  }
  for (int i = 0; i < n + a.nf * rec.k; ++i) qp.lb_zero.push_back(i);

  QpResult qr;
  try {
    qr = solve_qp(qp);
  } catch (const IdynError& err) {
    throw IdynError(ErrorCode::solver_failure,
                    std::string("idyn_qp stage 1: ") + err.what());
  }
  rec.z1 = qr.x;
  consolidate_support(rec.R, support_groups(a, n, rec.k), rec.z1,
                      req.opts.tol_cone);
  res = stage_result(rec, rec.z1, a);
  res.diagnostics.pivots = qr.diagnostics.pivots;
  res.diagnostics.regularization = qr.diagnostics.regularization;
  rec.result = res;
  return {res, rec};
}

std::pair<IdynResult, Stage1Record> idyn_qp_stage1(const IdynRequest& req) {
  return idyn_qp_stage1_impl(req, true);
}

IdynResult idyn_qp_stage2(const Stage1Record& stage1) {
  if (stage1.n == 0) return stage1.result;
  MatrixXd W = nullspace_basis(stage1.Hz, 1e-10);
  if (stage1.opts.nullspace_cap > 0 && W.cols() > stage1.opts.nullspace_cap)
    W = W.rightCols(stage1.opts.nullspace_cap);
  if (W.cols() == 0) {
    IdynResult out = stage1.result;
    out.diagnostics.stage2_applied = false;
    return out;
  }

  const int n = stage1.n;
  const int k = stage1.k;
  const int nf = static_cast<int>(stage1.fin.size());
  const MatrixXd B = stage1.G.llt().solve(stage1.U * W);
  const VectorXd tau1_imp = stage1.dt * stage1.result.tau;

  Qp qp;
  qp.H = B.transpose() * B;
  qp.H = 0.5 * (qp.H + qp.H.transpose());
  qp.c = -B.transpose() * tau1_imp;
  // nonnegativity of the constrained impulse components plus the friction
  // pyramid; the energy and non-penetration rows are redundant because
  // Z W = 0
  const int nn = n + nf * k;
  MatrixXd cone(nf, stage1.z1.size());
  cone.setZero();
  for (int fi = 0; fi < nf; ++fi) {
    cone(fi, stage1.fin[fi]) =
        stage1.contacts.contacts[stage1.fin[fi]].mu;
    for (int j = 0; j < k; ++j) cone(fi, n + j * nf + fi) = -1.0;
  }
  qp.Aineq.resize(nn + nf, W.cols());
  qp.bineq.resize(nn + nf);
  qp.Aineq.topRows(nn) = W.topRows(nn);
  qp.bineq.head(nn) = -stage1.z1.head(nn);
  qp.Aineq.bottomRows(nf) = cone * W;
  qp.bineq.tail(nf) = -cone * stage1.z1;

  QpResult qr;
  try {
    qr = solve_qp(qp);
  } catch (const IdynError& err) {
    throw IdynError(ErrorCode::solver_failure,
                    std::string("idyn_qp stage 2: ") + err.what());
  }

  VectorXd z2 = stage1.z1 + W * qr.x;
  QpAssembly a;
  a.fin = stage1.fin;
  a.inf = stage1.inf;
  a.sel_s = stage1.sel_s;
  a.sel_t = stage1.sel_t;
  a.ns = stage1.ns;
  a.nt = stage1.nt;
  a.nf = nf;
  a.nz = static_cast<int>(z2.size());
  a.R = stage1.R;
  consolidate_support(stage1.R, support_groups(a, n, k), z2,
                      stage1.opts.tol_cone);
  IdynResult res = stage_result(stage1, z2, a);
  res.diagnostics = stage1.result.diagnostics;
  res.diagnostics.stage2_applied = true;
  res.diagnostics.pivots += qr.diagnostics.pivots;
  return res;
}

IdynResult idyn_qp(const IdynRequest& req, bool stage2) {
  auto [res, rec] = idyn_qp_stage1_impl(req, true);
  if (!stage2) return res;
  return idyn_qp_stage2(rec);
}

IdynResult idyn_qp_no_slip(const IdynRequest& req, bool stage2) {
  auto [res, rec] = idyn_qp_stage1_impl(req, false);
  if (!stage2) return res;
  return idyn_qp_stage2(rec);
}

long long estimate_flops_stage1(int m, int nq, int n, int k,
                                FlopVariant variant) {
  require(m > 0 && nq > 0 && n >= 0 && k > 0, ErrorCode::config_error,
          "estimate_flops_stage1: sizes must be positive");
  require(nq <= m, ErrorCode::negative_base,
          "estimate_flops_stage1: nq exceeds m");
  const long long M = m, NQ = nq, N = n, K = k;
  const long long NB = M - NQ;
  if (variant == FlopVariant::plain) {
    const long long inner = M * (6 * (K * K + K + 1) * N * N +
                                 3 * N * (4 * (K + 1) * NQ - 1) +
                                 3 * NQ * NQ + 30 * NQ - 10) +
                            3 * M * M * (2 * (K + 1) * N + NQ + 7) +
                            3 * NQ * NQ * (2 * (K + 1) * N + 5) + M * M * M +
                            NQ * NQ * NQ - NQ + 3;
    return inner / 3;
  }
  const long long D = N * (N * K + 1);
  const long long t1 = (4 * M * M * M + 3 * M * M + 5 * M) / 6;
  const long long t2 = NQ * (NQ + 1) * (2 * NQ + 1) / 6;
  const long long t3 = NB * M + NQ * D * (2 * M - 1) + NB * M * (2 * NQ - 1) +
                       2 * NQ * NQ * M;
  const long long t4 =
      2 * NB * NQ + 2 * NQ * NQ + 3 * NQ + 2 * NB + 2 * M + 2 * M * NQ;
  const long long t5 = 2 * NB * NB * D - NB * D + 2 * NB * D * D - D * D;
  const long long t6 = D + NB * (2 * NB - 1);
  const long long t7 = (D + NQ) * (2 * NQ - 1);
  const long long t8 = N * N * (N * K + 1) * (2 * NB - 1);
  const long long t9 = N * (2 * M - 1);
  return t1 + t2 + t3 + t4 + t5 + t6 + t7 + t8 + t9;
}

}  // namespace idyn
