#include <doctest.h>

#include <cstdio>
#include <random>

#include "idyn/lcp.hpp"
#include "oracles.hpp"

using namespace idyn;

namespace {

Mlcp make_mlcp(const MatrixXd& A, const MatrixXd& C, const MatrixXd& D,
               const MatrixXd& B, const VectorXd& g, const VectorXd& h) {
  Mlcp m;
  m.A = A;
  m.C = C;
  m.D = D;
  m.B = B;
  m.g = g;
  m.h = h;
  return m;
}

double mlcp_residual(const Mlcp& m, const VectorXd& x, const VectorXd& z) {
  const VectorXd eq = m.A * x + m.C * z + m.g;
  const VectorXd w = m.D * x + m.B * z + m.h;
  double res = eq.cwiseAbs().maxCoeff();
  res = std::max(res, std::max(0.0, -z.minCoeff()));
  res = std::max(res, std::max(0.0, -w.minCoeff()));
  res = std::max(res, std::abs(z.dot(w)));
  return res;
}

}  // namespace

TEST_CASE("mlcp_to_lcp scalar example") {
  MatrixXd A(1, 1), C(1, 1), D(1, 1), B(1, 1);
  A << 2;
  C << 1;
  D << -1;
  B << 0;
  VectorXd g(1), h(1);
  g << -2;
  h << 0;
  auto [lcp, rec] = mlcp_to_lcp(make_mlcp(A, C, D, B, g, h));
  CHECK(lcp.Q(0, 0) == doctest::Approx(0.5));
  CHECK(lcp.r[0] == doctest::Approx(-1.0));

  // hand substitution: z = 2 solves the reduced LCP, then x = 0
  VectorXd z(1);
  z << 2.0;
  const VectorXd x = recover_unconstrained(rec, z);
  CHECK(x[0] == doctest::Approx(0.0));
  CHECK(mlcp_residual(make_mlcp(A, C, D, B, g, h), x, z) < 1e-12);
}

TEST_CASE("mlcp_to_lcp decoupled and pure cases") {
  const MatrixXd I2 = MatrixXd::Identity(2, 2);
  VectorXd h(2);
  h << 1, 1;
  auto [lcp, rec] = mlcp_to_lcp(
      make_mlcp(I2, MatrixXd::Zero(2, 2), MatrixXd::Zero(2, 2), I2,
                VectorXd::Zero(2), h));
  CHECK((lcp.Q - I2).norm() == doctest::Approx(0.0));
  CHECK((lcp.r - h).norm() == doctest::Approx(0.0));

  // C = 0, D = 0: reduction is the identity on the pure part, and the
  // unconstrained recovery ignores z
  std::mt19937 rng(7);
  const MatrixXd B = oracle::random_spd(rng, 3);
  const VectorXd hb = oracle::random_vec(rng, 3);
  const MatrixXd A = oracle::random_spd(rng, 2);
  const VectorXd g = oracle::random_vec(rng, 2);
  auto [lcp2, rec2] = mlcp_to_lcp(
      make_mlcp(A, MatrixXd::Zero(2, 3), MatrixXd::Zero(3, 2), B, g, hb));
  CHECK((lcp2.Q - B).norm() == 0.0);
  CHECK((lcp2.r - hb).norm() == 0.0);
  const VectorXd x0 = recover_unconstrained(rec2, VectorXd::Zero(3));
  const VectorXd x1 = recover_unconstrained(rec2, VectorXd::Ones(3));
  CHECK((x0 - x1).norm() == doctest::Approx(0.0));
  CHECK((A * x0 + g).norm() < 1e-12);
}

TEST_CASE("mlcp_to_lcp rejects singular A") {
  MatrixXd A = MatrixXd::Zero(2, 2);
  A(0, 0) = 1;  // rank 1
  const Mlcp m = make_mlcp(A, MatrixXd::Zero(2, 1), MatrixXd::Zero(1, 2),
                           MatrixXd::Identity(1, 1), VectorXd::Zero(2),
                           VectorXd::Zero(1));
  CHECK_THROWS_WITH_AS(mlcp_to_lcp(m), doctest::Contains("singular"),
                       IdynError);
}

TEST_CASE("mlcp round trip satisfies the mixed conditions") {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const int p = 2 + static_cast<int>(rng() % 3);
    const int t = 1 + static_cast<int>(rng() % 3);
    const MatrixXd A = oracle::random_spd(rng, p);
    const MatrixXd C = oracle::random_vec(rng, p * t).reshaped(p, t);
    const MatrixXd D = -C.transpose();
    MatrixXd B = oracle::random_spd(rng, t, 1.0);
    const VectorXd g = oracle::random_vec(rng, p);
    const VectorXd h = oracle::random_vec(rng, t);
    const Mlcp m = make_mlcp(A, C, D, B, g, h);
    auto [lcp, rec] = mlcp_to_lcp(m);
    const LcpSolution s = solve_lemke(lcp);
    const VectorXd x = recover_unconstrained(rec, s.z);
    CHECK(mlcp_residual(m, x, s.z) < 1e-10);
  }
}

TEST_CASE("solve_lemke small examples") {
  SUBCASE("identity Q splits the sign of r") {
    Lcp p;
    p.Q = MatrixXd::Identity(2, 2);
    p.r.resize(2);
    p.r << -2, 3;
    const LcpSolution s = solve_lemke(p);
    CHECK(s.z[0] == doctest::Approx(2.0));
    CHECK(s.z[1] == doctest::Approx(0.0));
    CHECK(s.w[0] == doctest::Approx(0.0));
    CHECK(s.w[1] == doctest::Approx(3.0));
  }
  SUBCASE("nonnegative r has the trivial solution") {
    std::mt19937 rng(3);
    Lcp p;
    p.Q = oracle::random_vec(rng, 4).reshaped(2, 2);
    p.r.resize(2);
    p.r << 1, 2;
    const LcpSolution s = solve_lemke(p);
    CHECK(s.z.norm() == 0.0);
    CHECK((s.w - p.r).norm() == 0.0);
    CHECK(s.pivot_count == 0);
  }
  SUBCASE("coupled SPD system") {
    Lcp p;
    p.Q.resize(2, 2);
    p.Q << 2, 1, 1, 2;
    p.r.resize(2);
    p.r << -1, -1;
    // basis enumeration over all 2^2 supports gives the unique solution
    const auto sols = oracle::enumerate_lcp(p.Q, p.r);
    REQUIRE(sols.size() == 1);
    CHECK(sols[0].z[0] == doctest::Approx(1.0 / 3.0));
    const LcpSolution s = solve_lemke(p);
    CHECK(s.z[0] == doctest::Approx(1.0 / 3.0));
    CHECK(s.z[1] == doctest::Approx(1.0 / 3.0));
    CHECK(s.w.norm() < 1e-12);
  }
}

TEST_CASE("solve_lemke agrees with enumeration on random SPD problems") {
  std::mt19937 rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 6);
    Lcp p;
    p.Q = oracle::random_spd(rng, n);
    p.r = oracle::random_vec(rng, n);
    const LcpSolution s = solve_lemke(p);
    const auto rep = verify_solution(p, s, 1e-8);
    CHECK(rep.pass);
    const auto sols = oracle::enumerate_lcp(p.Q, p.r);
    REQUIRE(!sols.empty());
    bool matched = false;
    for (const auto& ref : sols)
      if ((ref.z - s.z).norm() < 1e-6) matched = true;
    CHECK(matched);
  }
}

TEST_CASE("solve_lemke ray termination on an infeasible instance") {
  // w = -z + r with r < 0 has no solution for any regularization that keeps
  // the problem meaningfully unchanged is not true; use a classic unsolvable
  // instance instead: Q strictly negative forces unbounded ray.
  Lcp p;
  p.Q.resize(2, 2);
  p.Q << 0, -1, -1, 0;
  p.r.resize(2);
  p.r << -1, -1;
  LemkeOptions opts;
  opts.tikhonov_schedule.clear();  // no shifts: must report the ray
  CHECK_THROWS_AS(solve_lemke(p, opts), IdynError);
}

TEST_CASE("solve_ppm trivial exit and closed-form single contact") {
  SUBCASE("nonnegative r exits with zero pivots") {
    MatrixXd N(2, 3);
    N << 0, 0, 1, 1, 0, 0;
    MatrixXd M = MatrixXd::Identity(3, 3);
    VectorXd fstar(3);
    fstar << 1, 0, 2;
    const LcpSolution s = solve_ppm(N, M.llt(), fstar, {});
    CHECK(s.z.norm() == 0.0);
    CHECK(s.pivot_count == 0);
    CHECK((s.w - N * fstar).norm() < 1e-15);
  }
  SUBCASE("unit point mass resting on a plane") {
    MatrixXd N(1, 3);
    N << 0, 0, 1;
    MatrixXd M = MatrixXd::Identity(3, 3);
    VectorXd fstar(3);
    fstar << 0, 0, -0.0098;  // gravity impulse over one millisecond
    const LcpSolution s = solve_ppm(N, M.llt(), fstar, {});
    // z = -r/Q with Q = 1, r = -0.0098
    CHECK(s.z[0] == doctest::Approx(0.0098));
    CHECK(std::abs(s.w[0]) < 1e-12);
    CHECK(s.nonbasic_set == IndexSet{0});
  }
}

TEST_CASE("solve_ppm warm start is a bitwise fixed point") {
  std::mt19937 rng(5);
  const int m = 4, n = 7;
  const MatrixXd N = oracle::random_vec(rng, n * m).reshaped(n, m);
  const MatrixXd M = oracle::random_spd(rng, m);
  const VectorXd fstar = oracle::random_vec(rng, m);
  const auto Mllt = M.llt();
  const LcpSolution first = solve_ppm(N, Mllt, fstar, {});
  const LcpSolution again = solve_ppm(N, Mllt, fstar, first.nonbasic_set);
  REQUIRE(first.z.size() == again.z.size());
  for (int i = 0; i < first.z.size(); ++i) {
    CHECK(first.z[i] == again.z[i]);  // bitwise
  }
  CHECK(again.pivot_count == 0);
  CHECK(again.nonbasic_set == first.nonbasic_set);
}

TEST_CASE("solve_ppm matches lemke and enumeration on SPD structures") {
  std::mt19937 rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const int m = 2 + static_cast<int>(rng() % 4);
    const int n = 1 + static_cast<int>(rng() % 6);
    const MatrixXd N = oracle::random_vec(rng, n * m).reshaped(n, m);
    const MatrixXd M = oracle::random_spd(rng, m);
    const VectorXd fstar = oracle::random_vec(rng, m);
    const LcpSolution s = solve_ppm(N, M.llt(), fstar, {});

    Lcp p;
    const MatrixXd Minv = M.inverse();
    p.Q = N * Minv * N.transpose();
    p.r = N * Minv * fstar;
    LcpSolution cand;
    cand.z = s.z;
    cand.w = p.Q * s.z + p.r;
    CHECK(verify_solution(p, cand, 1e-7).pass);

    // support bound from the rank argument: at most m positive components
    int positive = 0;
    for (int i = 0; i < n; ++i)
      if (s.z[i] > 1e-9) ++positive;
    CHECK(positive <= m);
  }
}

TEST_CASE("solve_min_diff prefers the valid solution nearest x0") {
  // pure LCP embedded with A = I and x carrying z
  MatrixXd A = MatrixXd::Identity(2, 2);
  MatrixXd C = -MatrixXd::Identity(2, 2);
  MatrixXd D = MatrixXd::Zero(2, 2);
  MatrixXd B(2, 2);
  B << 1, 1, 1, 1;
  VectorXd g = VectorXd::Zero(2);
  VectorXd h(2);
  h << -1, -1;
  const Mlcp m = make_mlcp(A, C, D, B, g, h);

  // enumeration oracle: valid extreme solutions of (B, h) are (1,0), (0,1)
  const auto sols = oracle::enumerate_lcp(B, h);
  REQUIRE(sols.size() == 2);

  VectorXd x0(2);
  x0 << 0.9, 0.1;
  auto [x, dist] = solve_min_diff(m, x0);
  CHECK(x[0] == doctest::Approx(1.0));
  CHECK(x[1] == doctest::Approx(0.0));
  CHECK(dist == doctest::Approx(std::hypot(0.1, 0.1)));

  x0 << 0.1, 0.9;
  auto [x2, dist2] = solve_min_diff(m, x0);
  CHECK(x2[0] == doctest::Approx(0.0));
  CHECK(x2[1] == doctest::Approx(1.0));
  CHECK(dist2 == doctest::Approx(std::hypot(0.1, 0.1)));
}

TEST_CASE("solve_min_diff returns the unique solution regardless of x0") {
  MatrixXd A = MatrixXd::Identity(2, 2);
  MatrixXd C = -MatrixXd::Identity(2, 2);
  MatrixXd D = MatrixXd::Zero(2, 2);
  MatrixXd B = MatrixXd::Identity(2, 2);
  VectorXd h(2);
  h << -2, 3;
  const Mlcp m = make_mlcp(A, C, D, B, VectorXd::Zero(2), h);
  VectorXd x0a(2), x0b(2);
  x0a << 100, -50;
  x0b << -3, 9;
  const auto ra = solve_min_diff(m, x0a);
  const auto rb = solve_min_diff(m, x0b);
  CHECK((ra.first - rb.first).norm() < 1e-12);
  CHECK(ra.first[0] == doctest::Approx(2.0));
  CHECK(ra.first[1] == doctest::Approx(0.0));
}

TEST_CASE("solve_min_diff error paths") {
  MatrixXd A = MatrixXd::Identity(20, 20);
  const Mlcp big = make_mlcp(A, MatrixXd::Zero(20, 20), MatrixXd::Zero(20, 20),
                             MatrixXd::Identity(20, 20), VectorXd::Zero(20),
                             VectorXd::Zero(20));
  CHECK_THROWS_AS(solve_min_diff(big, VectorXd::Zero(20)), IdynError);

  // no valid assignment: strictly negative w unreachable
  MatrixXd B(1, 1);
  B << 0;
  VectorXd h(1);
  h << -1;
  const Mlcp bad =
      make_mlcp(MatrixXd::Identity(1, 1), MatrixXd::Zero(1, 1),
                MatrixXd::Zero(1, 1), B, VectorXd::Zero(1), h);
  CHECK_THROWS_AS(solve_min_diff(bad, VectorXd::Zero(1)), IdynError);
}

TEST_CASE("verify_solution reports componentwise residuals") {
  Lcp p;
  p.Q.resize(2, 2);
  p.Q << 2, 1, 1, 2;
  p.r.resize(2);
  p.r << -1, -1;
  LcpSolution s;
  s.z.resize(2);
  s.z << 1.0 / 3.0, 1.0 / 3.0;
  s.w = p.Q * s.z + p.r;
  CHECK(verify_solution(p, s, 1e-12).pass);

  // perturb a basic coordinate: the equation residual follows the column norm
  LcpSolution pert = s;
  pert.z[0] += 1e-3;
  const auto rep = verify_solution(p, pert, 1e-12);
  CHECK(rep.equation == doctest::Approx(2e-3));  // max |Q column entry| * 1e-3
  CHECK(!rep.pass);

  LcpSolution neg = s;
  neg.z[1] = -1e-6;
  neg.w = p.Q * neg.z + p.r;
  const auto rep2 = verify_solution(p, neg, 1e-12);
  CHECK(rep2.z_negativity == doctest::Approx(1e-6));
}

TEST_CASE("lcp file dump round trips") {
  Lcp p;
  p.Q.resize(2, 2);
  p.Q << 2, 1, 1, 2.25;
  p.r.resize(2);
  p.r << -1, 0.125;
  const std::string path = "lcp_dump_test.txt";
  write_lcp(path, p);
  const Lcp q = read_lcp(path);
  CHECK((p.Q - q.Q).norm() == 0.0);
  CHECK((p.r - q.r).norm() == 0.0);
  std::remove(path.c_str());
}

TEST_CASE("baraff-class problems never stall the pivoting solver") {
  std::mt19937 rng(31337);
  for (int trial = 0; trial < 60; ++trial) {
    const int q = 2 + static_cast<int>(rng() % 4);
    const int pdim = q + static_cast<int>(rng() % 5);
    const MatrixXd H = oracle::random_vec(rng, pdim * q).reshaped(pdim, q);
    const MatrixXd Qm = oracle::random_spd(rng, q);
    const VectorXd wv = oracle::random_vec(rng, q);
    // LCP (H w, H inv(Q) H') posed through the structured solver
    const LcpSolution s = solve_ppm(H, Qm.llt(), Qm * wv, {});
    Lcp p;
    p.Q = H * Qm.inverse() * H.transpose();
    p.r = H * wv;
    LcpSolution cand;
    cand.z = s.z;
    cand.w = p.Q * s.z + p.r;
    CHECK(verify_solution(p, cand, 1e-7).pass);
  }
}
