/****************************************************************************
 * This library is distributed under the terms of the Apache V2.0 license
 * (obtainable from http://www.apache.org/licenses/LICENSE-2.0).
 ****************************************************************************/
#pragma once

#include <optional>

#include "idyn/lcp.hpp"
#include "idyn/multibody.hpp"
#include "idyn/qp.hpp"

namespace idyn {

struct IdynOptions {
  double tol_equality = 1e-8;
  double tol_complementarity = 1e-8;
  double tol_cone = 1e-10;
  int min_diff_cap = 16;   // complementarity-variable bound for enumeration
  int nullspace_cap = 0;   // 0: unbounded; otherwise keep that many columns
  // support hysteresis for the warm-started no-slip path: the previous
  // working set is kept while its feasibility violation stays below this
  // slack, biasing consecutive solves toward the same contact forces
  double warm_bias_tol = 1e-4;
};

/// One inverse-dynamics query: realize qdot_des at the actuated joints at
/// t + dt while predicting the contact impulses.  qdot_des is the caller's
/// qdot + dt * qddot_des.
struct IdynRequest {
  MultibodyState state;
  ContactSet contacts;
  VectorXd qdot_des;
  double dt = 1e-3;
  IdynOptions opts;
};

struct IdynDiagnostics {
  int pivots = 0;
  double regularization = 0;
  bool stage2_applied = false;
  bool consistency_fallback_used = false;
  bool chatter_warning = false;
};

struct IdynResult {
  VectorXd tau;     // actuator forces (N, N m); impulses tau * dt internally
  VectorXd v_plus;  // predicted post-step generalized velocity
  VectorXd f_N, f_S, f_T;  // per-contact impulses (N s), tangentials signed
  VectorXd lambda;         // slip-speed surrogate (Coulomb LCP path only)
  IdynDiagnostics diagnostics;
  IndexSet nonbasic_set;   // warm-start carryover for the no-slip path
};

/// Identity of a contact across control steps, used to remap warm starts.
struct ContactKey {
  std::string body_a, body_b;
  int feature_a = -1, feature_b = -1;
  bool operator==(const ContactKey&) const = default;
};

ContactKey contact_key(const ContactPoint& c);

/// Carry a non-basic set across contact-set changes: surviving contacts are
/// remapped by body-pair identity and the rest is discarded.
IndexSet remap_warm_start(const std::vector<ContactKey>& prev_keys,
                          const IndexSet& prev_nonbasic,
                          const std::vector<ContactKey>& cur_keys);

/// Greedy row selection making [P', S'_S, T'_T] nonsingular under the
/// inv(M) metric; insertion order follows the contact index.
std::pair<IndexSet, IndexSet> find_indices(const MatrixXd& M,
                                           const MatrixXd& P,
                                           const MatrixXd& S,
                                           const MatrixXd& T);

/// No-slip inverse dynamics: assembles the mixed complementarity problem on
/// the rows chosen by find_indices, reduces it, and solves the normal-force
/// LCP with the warm-started structured pivoting solver.  Throws
/// inconsistent_desired_accel when the request cannot be met with rigid
/// contact; the caller should then run consistency_fallback.
IdynResult idyn_no_slip(const IdynRequest& req, const IndexSet& warm = {});

/// Recompute (v_plus, tau) deviating minimally from qdot_des subject to
/// dynamics, no-slip rows, and non-penetration; always feasible.
IdynResult consistency_fallback(const IdynRequest& req,
                                const IdynResult& predicted);

/// Coulomb-friction inverse dynamics through the copositive LCP with
/// (k+2)n variables.  When x_prev (previous [v_plus; tau * dt]) is given and
/// the problem is small enough, the minimum-difference enumeration picks the
/// solution closest to it; otherwise plain Lemke runs and a chatter warning
/// is flagged.
IdynResult idyn_coulomb_lcp(const IdynRequest& req,
                            const std::optional<VectorXd>& x_prev = {});

VectorXd idyn_solution_vector(const IdynRequest& req, const IdynResult& res);

/// Data Stage II needs from Stage I.
struct Stage1Record {
  bool pyramid = true;
  double dt = 1e-3;
  IndexSet base_idx, act_idx;  // dof permutation [base; actuated]
  MatrixXd Mbb, Mbq;
  MatrixXd G;                  // actuated block of inv(M)
  MatrixXd R;                  // permuted wrench columns, m-by-nz
  MatrixXd Z;                  // nb-by-nz
  VectorXd p;
  MatrixXd U;                  // nq-by-nz
  VectorXd kvec;
  VectorXd f_id;               // contact-free inverse dynamics force
  VectorXd qdot_des;
  MatrixXd Hz;                 // Z' Mbb Z
  VectorXd z1;                 // Stage I impulse solution
  IndexSet fin, inf;           // contact split by finite/infinite mu
  int n = 0, k = 4, ns = 0, nt = 0;
  IndexSet sel_s, sel_t;       // kept tangent rows for the no-slip subset
  IdynOptions opts;
  ContactSet contacts;
  IdynResult result;
};

/// Complementarity-free inverse dynamics, Stage I: dissipate kinetic energy
/// maximally over the reduced impulse variables.
std::pair<IdynResult, Stage1Record> idyn_qp_stage1(const IdynRequest& req);

/// Stage II: minimum-norm actuator torques over the nullspace of Z' A Z,
/// keeping the Stage I energy objective.
IdynResult idyn_qp_stage2(const Stage1Record& stage1);

/// Stage I (+ optional Stage II) convenience entry.
IdynResult idyn_qp(const IdynRequest& req, bool stage2 = true);

/// Stage I/II pipeline with the friction pyramid removed: tangential
/// impulses are free-signed.
IdynResult idyn_qp_no_slip(const IdynRequest& req, bool stage2 = true);

enum class FlopVariant { plain, optimized };

/// Closed-form setup cost of the Stage I model.
long long estimate_flops_stage1(int m, int nq, int n, int k,
                                FlopVariant variant);

}  // namespace idyn
