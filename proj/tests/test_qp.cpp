#include <doctest.h>

#include <random>

#include "idyn/qp.hpp"
#include "oracles.hpp"

using namespace idyn;

namespace {

// Active-set enumeration oracle: for every subset of the inequality rows
// (and lower bounds) treated as equalities, solve the equality-constrained
// stationarity system and keep feasible KKT points.
struct OracleResult {
  VectorXd x;
  double obj;
};

std::optional<OracleResult> qp_oracle(const Qp& q, double tol = 1e-9) {
  const int n = q.num_vars();
  const int k = q.num_ineq();
  const int nl = static_cast<int>(q.lb_zero.size());
  const int total = k + nl;
  std::optional<OracleResult> best;
  for (unsigned mask = 0; mask < (1u << total); ++mask) {
    std::vector<int> act;
    for (int i = 0; i < total; ++i)
      if (mask & (1u << i)) act.push_back(i);
    const int na = static_cast<int>(act.size());
    MatrixXd K(n + na, n + na);
    K.setZero();
    K.topLeftCorner(n, n) = q.H;
    VectorXd rhs(n + na);
    rhs.head(n) = -q.c;
    for (int a = 0; a < na; ++a) {
      VectorXd row;
      double b;
      if (act[a] < k) {
        row = q.Aineq.row(act[a]).transpose();
        b = q.bineq[act[a]];
      } else {
        row = VectorXd::Zero(n);
        row[q.lb_zero[act[a] - k]] = 1.0;
        b = 0.0;
      }
      K.block(n + a, 0, 1, n) = row.transpose();
      K.block(0, n + a, n, 1) = -row;
      rhs[n + a] = b;
    }
    Eigen::FullPivLU<MatrixXd> lu(K);
    lu.setThreshold(1e-12);
    if (!lu.isInvertible()) continue;
    const VectorXd sol = lu.solve(rhs);
    const VectorXd x = sol.head(n);
    const VectorXd mult = sol.tail(na);
    if (mult.size() > 0 && mult.minCoeff() < -tol) continue;  // not KKT
    bool feas = true;
    if (k > 0 && (q.Aineq * x - q.bineq).minCoeff() < -tol) feas = false;
    for (int i : q.lb_zero)
      if (x[i] < -tol) feas = false;
    if (!feas) continue;
    const double obj = 0.5 * x.dot(q.H * x) + q.c.dot(x);
    if (!best || obj < best->obj - 1e-12) best = OracleResult{x, obj};
  }
  return best;
}

}  // namespace

TEST_CASE("solve_qp scalar examples") {
  Qp q;
  q.H = MatrixXd::Identity(1, 1);
  q.c = VectorXd::Constant(1, -1.0);
  q.Aineq.resize(0, 1);
  q.bineq.resize(0);
  q.lb_zero = {0};
  CHECK(solve_qp(q).x[0] == doctest::Approx(1.0));

  // active bound x >= 2
  q.lb_zero.clear();
  q.Aineq = MatrixXd::Constant(1, 1, 1.0);
  q.bineq = VectorXd::Constant(1, 2.0);
  const QpResult r = solve_qp(q);
  CHECK(r.x[0] == doctest::Approx(2.0));
  CHECK(r.duals[0] == doctest::Approx(1.0));
}

TEST_CASE("solve_qp symmetric two-variable example") {
  Qp q;
  q.H = MatrixXd::Identity(2, 2);
  q.c = VectorXd::Zero(2);
  q.Aineq = MatrixXd::Constant(1, 2, 1.0);
  q.bineq = VectorXd::Constant(1, 2.0);
  const QpResult r = solve_qp(q);
  CHECK(r.x[0] == doctest::Approx(1.0));
  CHECK(r.x[1] == doctest::Approx(1.0));
}

TEST_CASE("solve_qp matches the active-set enumeration oracle") {
  std::mt19937 rng(4242);
  std::uniform_int_distribution<int> nd(1, 5), kd(0, 5);
  for (int trial = 0; trial < 80; ++trial) {
    Qp q;
    const int n = nd(rng);
    const int k = kd(rng);
    q.H = oracle::random_spd(rng, n, 1.0);
    q.c = oracle::random_vec(rng, n);
    q.Aineq = oracle::random_vec(rng, k * n).reshaped(k, n);
    // keep the feasible set nonempty: pass through a known point
    const VectorXd x_feas = oracle::random_vec(rng, n);
    q.bineq = q.Aineq * x_feas - VectorXd::Ones(k) * 0.1;
    const auto ref = qp_oracle(q, 1e-9);
    REQUIRE(ref.has_value());
    const QpResult r = solve_qp(q);
    const double obj = 0.5 * r.x.dot(q.H * r.x) + q.c.dot(r.x);
    CHECK(obj == doctest::Approx(ref->obj).epsilon(1e-7));
    CHECK((r.x - ref->x).norm() < 1e-6 * (1.0 + ref->x.norm()));
  }
}

TEST_CASE("psd lcp and its dual qp reach equal objectives") {
  std::mt19937 rng(77);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 5);
    Lcp p;
    p.Q = oracle::random_spd(rng, n, 0.2);
    p.r = oracle::random_vec(rng, n);
    const LcpSolution s = solve_lemke(p);
    const double lcp_obj = 0.5 * s.z.dot(p.Q * s.z) + p.r.dot(s.z);

    Qp q;
    q.H = p.Q;
    q.c = p.r;
    q.Aineq.resize(0, n);
    q.bineq.resize(0);
    for (int i = 0; i < n; ++i) q.lb_zero.push_back(i);
    const QpResult r = solve_qp(q);
    const double qp_obj = 0.5 * r.x.dot(q.H * r.x) + q.c.dot(r.x);
    CHECK(std::abs(lcp_obj - qp_obj) < 1e-8 * (1.0 + std::abs(qp_obj)));
  }
}

TEST_CASE("solve_qp flags infeasible and unbounded problems") {
  Qp q;
  q.H = MatrixXd::Identity(1, 1);
  q.c = VectorXd::Zero(1);
  q.Aineq.resize(2, 1);
  q.Aineq << 1, -1;
  q.bineq.resize(2);
  q.bineq << 1, 1;  // x >= 1 and x <= -1
  CHECK_THROWS_AS(solve_qp(q), IdynError);
  try {
    solve_qp(q);
  } catch (const IdynError& e) {
    CHECK(e.code() == ErrorCode::infeasible);
  }

  Qp u;
  u.H = MatrixXd::Zero(1, 1);
  u.c = VectorXd::Constant(1, 1.0);  // minimize x, unconstrained below
  u.Aineq.resize(0, 1);
  u.bineq.resize(0);
  try {
    solve_qp(u);
    CHECK(false);
  } catch (const IdynError& e) {
    CHECK(e.code() == ErrorCode::unbounded);
  }
}

TEST_CASE("nullspace_basis cases") {
  MatrixXd A(2, 2);
  A << 1, 0, 0, 0;
  const MatrixXd W = nullspace_basis(A);
  REQUIRE(W.cols() == 1);
  CHECK(std::abs(W(0, 0)) < 1e-14);
  CHECK(std::abs(std::abs(W(1, 0)) - 1.0) < 1e-14);

  CHECK(nullspace_basis(MatrixXd::Identity(3, 3)).cols() == 0);

  std::mt19937 rng(8);
  const VectorXd v = oracle::random_vec(rng, 4).normalized();
  const MatrixXd R1 = v * v.transpose();
  const MatrixXd W2 = nullspace_basis(R1);
  REQUIRE(W2.cols() == 3);
  CHECK((R1 * W2).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((W2.transpose() * W2 - MatrixXd::Identity(3, 3)).norm() < 1e-12);
  CHECK((v.transpose() * W2).cwiseAbs().maxCoeff() < 1e-10);
}
