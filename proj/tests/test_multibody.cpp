#include <doctest.h>

#include <random>

#include "idyn/multibody.hpp"
#include "oracles.hpp"

using namespace idyn;

namespace {

std::shared_ptr<Mechanism> point_mass_world(double mass = 1.0) {
  auto mech = std::make_shared<Mechanism>();
  PointMassDesc pm;
  pm.name = "ball";
  pm.mass = mass;
  pm.pos = Vector3d(0, 0, 0.5);
  pm.radius = 0.1;
  mech->point_masses.push_back(pm);
  mech->ground.push_back({Halfspace{}, 1.0});
  return mech;
}

std::shared_ptr<Mechanism> free_box_world(double mass = 4.8049) {
  auto mech = std::make_shared<Mechanism>();
  FreeBodyDesc box;
  box.name = "box";
  box.mass = mass;
  box.inertia = Vector3d(0.02, 0.02, 0.03);
  box.pos = Vector3d(0, 0, 0.05);
  for (double sx : {-1.0, 1.0})
    for (double sy : {-1.0, 1.0})
      box.spheres.push_back({Vector3d(0.08 * sx, 0.06 * sy, -0.03), 0.02});
  mech->free_bodies.push_back(box);
  mech->ground.push_back(
      {Halfspace{}, std::numeric_limits<double>::infinity()});
  return mech;
}

std::shared_ptr<Mechanism> double_pendulum() {
  auto mech = std::make_shared<Mechanism>();
  ChainDesc ch;
  ch.name = "arm";
  ch.base_z = 0.5;
  LinkDesc l1;
  l1.name = "upper";
  l1.length = 0.2;
  l1.mass = 0.4;
  l1.inertia = 0.4 * 0.2 * 0.2 / 12;
  l1.com = 0.1;
  LinkDesc l2 = l1;
  l2.name = "lower";
  l2.parent = 0;
  ch.links = {l1, l2};
  mech->chains.push_back(ch);
  return mech;
}

double newton_residual(const MultibodyState& st, const ContactSet& cs,
                       const VectorXd& tau, double dt, const StepResult& r) {
  VectorXd lhs = st.M * (r.v_plus - st.v);
  VectorXd rhs = dt * st.f_ext;
  if (tau.size() > 0) rhs += dt * st.P.transpose() * tau;
  for (int i = 0; i < cs.size(); ++i)
    rhs += cs.N.row(i).transpose() * r.f_N[i] +
           cs.S.row(i).transpose() * r.f_S[i] +
           cs.T.row(i).transpose() * r.f_T[i];
  return (lhs - rhs).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("point mass dynamics") {
  auto mech = point_mass_world();
  const auto st =
      assemble_dynamics(mech, initial_coords(*mech), initial_velocity(*mech));
  CHECK((st.M - MatrixXd::Identity(3, 3)).norm() == 0.0);
  CHECK(st.f_ext[0] == 0.0);
  CHECK(st.f_ext[2] == doctest::Approx(-9.8));
}

TEST_CASE("free box weight matches the configured anchor") {
  auto mech = free_box_world();
  const auto st =
      assemble_dynamics(mech, initial_coords(*mech), initial_velocity(*mech));
  const double weight = -st.f_ext[2];
  CHECK(std::abs(weight - 47.0882) < 1e-3);
  CHECK(st.M(0, 0) == doctest::Approx(4.8049));
}

TEST_CASE("double pendulum gravity equals the potential-energy gradient") {
  auto mech = double_pendulum();
  const auto& ch = mech->chains[0];
  auto potential = [&](double q1, double q2) {
    // independent forward kinematics for the two-link chain
    const double zj = ch.base_z;
    const double z1 = zj + ch.links[0].com * std::sin(q1);
    const double ztip = zj + ch.links[0].length * std::sin(q1);
    const double z2 = ztip + ch.links[1].com * std::sin(q1 + q2);
    return 9.8 * (ch.links[0].mass * z1 + ch.links[1].mass * z2);
  };
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    VectorXd q(2);
    q << u(rng), u(rng);
    const auto st = assemble_dynamics(mech, q, VectorXd::Zero(2));
    const double h = 1e-6;
    const double g1 = -(potential(q[0] + h, q[1]) - potential(q[0] - h, q[1])) /
                      (2 * h);
    const double g2 = -(potential(q[0], q[1] + h) - potential(q[0], q[1] - h)) /
                      (2 * h);
    CHECK(st.f_ext[0] == doctest::Approx(g1).epsilon(1e-6));
    CHECK(st.f_ext[1] == doctest::Approx(g2).epsilon(1e-6));
  }
}

TEST_CASE("velocity-product forces satisfy the metric identity") {
  // C(q,v) v = dM/dt v - 1/2 d(v'Mv)/dq
  auto mech = double_pendulum();
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (int trial = 0; trial < 10; ++trial) {
    VectorXd q(2), v(2);
    q << u(rng), u(rng);
    v << u(rng), u(rng);
    const auto st = assemble_dynamics(mech, q, v);
    const auto st0 = assemble_dynamics(mech, q, VectorXd::Zero(2));
    const VectorXd cor = st.f_ext - st0.f_ext;  // velocity-product part
    const double h = 1e-6;
    MatrixXd Mdot = MatrixXd::Zero(2, 2);
    VectorXd dT(2);
    for (int k = 0; k < 2; ++k) {
      VectorXd qp = q, qm = q;
      qp[k] += h;
      qm[k] -= h;
      const MatrixXd Mp = assemble_dynamics(mech, qp, v).M;
      const MatrixXd Mm = assemble_dynamics(mech, qm, v).M;
      Mdot += (Mp - Mm) / (2 * h) * v[k];
      dT[k] = 0.5 * v.dot(((Mp - Mm) / (2 * h)) * v);
    }
    const VectorXd expect = -(Mdot * v - dT);
    CHECK((cor - expect).cwiseAbs().maxCoeff() < 1e-5);
  }
}

TEST_CASE("forward_step_rigid basics") {
  auto mech = point_mass_world();
  const double dt = 0.01;
  SUBCASE("resting ball carries its weight") {
    VectorXd q = initial_coords(*mech);
    q[2] = 0.1;  // sphere radius puts it exactly on the plane
    const auto st = assemble_dynamics(mech, q, VectorXd::Zero(3));
    const auto contacts = detect_contacts(st, dt);
    REQUIRE(contacts.size() == 1);
    const auto cs = build_wrenches(st, contacts);
    const auto r = forward_step_rigid(st, cs, VectorXd(), dt,
                                      ContactModel::complementarity);
    CHECK(r.f_N[0] == doctest::Approx(1.0 * 9.8 * dt));
    CHECK(std::abs(r.v_plus[2]) < 1e-12);
    CHECK(newton_residual(st, cs, VectorXd(), dt, r) < 1e-9);
  }
  SUBCASE("ball in flight is ballistic") {
    const auto st = assemble_dynamics(mech, initial_coords(*mech),
                                      VectorXd::Zero(3));
    const auto contacts = detect_contacts(st, dt);
    CHECK(contacts.empty());
    const auto cs = build_wrenches(st, contacts);
    const auto r = forward_step_rigid(st, cs, VectorXd(), dt,
                                      ContactModel::complementarity);
    CHECK(r.v_plus[2] == doctest::Approx(-9.8 * dt));
  }
  SUBCASE("inelastic drop kills the normal velocity") {
    VectorXd q = initial_coords(*mech);
    q[2] = 0.1;
    VectorXd v = VectorXd::Zero(3);
    v[2] = -1.0;
    const auto st = assemble_dynamics(mech, q, v);
    const auto cs = build_wrenches(st, detect_contacts(st, dt));
    REQUIRE(cs.size() == 1);
    const auto r = forward_step_rigid(st, cs, VectorXd(), dt,
                                      ContactModel::complementarity_free);
    CHECK(std::abs(r.v_plus[2]) < 1e-10);
  }
}

TEST_CASE("forward_step_compliant examples") {
  auto mech = free_box_world();
  const double dt = 1e-3;
  SUBCASE("one millimetre of rest penetration carries the weight") {
    const double k = 47088.2;  // N/m
    VectorXd q = initial_coords(*mech);
    q[2] -= 0.001;  // feet 1 mm into the plane
    const auto st = assemble_dynamics(mech, q, VectorXd::Zero(6));
    const auto cs = build_wrenches(st, detect_contacts(st, dt));
    REQUIRE(cs.size() == 4);
    for (int i = 0; i < 4; ++i)
      CHECK(cs.contacts[i].gap == doctest::Approx(-0.001));
    const auto r =
        forward_step_compliant(st, cs, VectorXd(), dt, k / 4.0, 0.0);
    // spring force k * 0.001 per contact sums to the weight
    CHECK(r.f_N.sum() / dt == doctest::Approx(47.0882).epsilon(1e-4));
  }
  SUBCASE("no force without penetration") {
    const auto st = assemble_dynamics(mech, initial_coords(*mech),
                                      VectorXd::Zero(6));
    ContactPoint c;
    c.gap = 0.01;
    c.body_b = "box";
    const auto cs = build_wrenches(st, {c});
    const auto r = forward_step_compliant(st, cs, VectorXd(), dt, 1e4, 10);
    CHECK(r.f_N[0] == 0.0);
  }
  SUBCASE("pure damping case") {
    auto pm = point_mass_world();
    VectorXd q = initial_coords(*pm);
    q[2] = 0.1;
    VectorXd v = VectorXd::Zero(3);
    v[2] = -1.0;
    const auto st = assemble_dynamics(pm, q, v);
    const auto cs = build_wrenches(st, detect_contacts(st, dt));
    REQUIRE(cs.size() == 1);
    const auto r = forward_step_compliant(st, cs, VectorXd(), dt, 0.0, 10.0);
    CHECK(r.f_N[0] / dt == doctest::Approx(10.0));
  }
}

TEST_CASE("rigid step invariants on random drops") {
  std::mt19937 rng(2718);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double dt = 1e-3;
  int checked = 0;
  for (int trial = 0; trial < 60; ++trial) {
    auto mech = free_box_world(0.5 + 0.5 * (trial % 5));
    mech->ground[0].mu = (trial % 3 == 0)
                             ? std::numeric_limits<double>::infinity()
                             : 0.2 + 0.3 * (trial % 4);
    VectorXd q = initial_coords(*mech);
    q[2] = 0.05 + 0.002 * (trial % 3);  // at or above the surface
    VectorXd v(6);
    for (int i = 0; i < 6; ++i) v[i] = u(rng);
    if (v[2] > 0) v[2] = -v[2];
    const auto st = assemble_dynamics(mech, q, v);
    const auto cs = build_wrenches(st, detect_contacts(st, dt));
    if (cs.size() == 0) continue;
    for (auto model : {ContactModel::complementarity,
                       ContactModel::complementarity_free}) {
      const auto r = forward_step_rigid(st, cs, VectorXd(), dt, model);
      ++checked;
      CHECK(newton_residual(st, cs, VectorXd(), dt, r) < 1e-9);
      CHECK((cs.N * r.v_plus + cs.gaps() / dt).minCoeff() > -1e-8);
      // contact impulses stay inside the pyramid
      for (int i = 0; i < cs.size(); ++i) {
        const double mu = cs.contacts[i].mu;
        if (std::isfinite(mu))
          CHECK(std::abs(r.f_S[i]) + std::abs(r.f_T[i]) <=
                mu * r.f_N[i] + 1e-10);
      }
      // with tau = 0 the contact impulses never add energy relative to the
      // contact-free update
      if (model == ContactModel::complementarity_free &&
          cs.gaps().minCoeff() >= 0) {
        const VectorXd vtilde = st.v + dt * st.M.llt().solve(st.f_ext);
        CHECK(0.5 * r.v_plus.dot(st.M * r.v_plus) <=
              0.5 * vtilde.dot(st.M * vtilde) + 1e-10);
      }
    }
  }
  CHECK(checked >= 40);
}

TEST_CASE("a dropped ball settles and stays put") {
  auto mech = point_mass_world();
  VectorXd q = initial_coords(*mech);
  q[2] = 0.12;
  VectorXd v = VectorXd::Zero(3);
  const double dt = 1e-3;
  for (int step = 0; step < 200; ++step) {
    const auto st = assemble_dynamics(mech, q, v);
    const auto cs = build_wrenches(st, detect_contacts(st, dt));
    const auto r = forward_step_rigid(st, cs, VectorXd(), dt,
                                      ContactModel::complementarity);
    v = r.v_plus;
    q = integrate_coords(*mech, q, v, dt);
  }
  CHECK(q[2] == doctest::Approx(0.1).epsilon(1e-6));
  CHECK(std::abs(v[2]) < 1e-10);
}

TEST_CASE("mechanism json round trips") {
  auto mech = free_box_world();
  ChainDesc ch;
  ch.name = "leg";
  ch.floating = true;
  ch.base_z = 0.2;
  LinkDesc l;
  l.name = "shin";
  l.joint = JointType::prismatic;
  l.dir_angle = -1.2;
  l.spheres.push_back({Vector3d(0.01, 0, 0), 0.02});
  ch.links.push_back(l);
  mech->chains.push_back(ch);
  mech->ground[0].mu = std::numeric_limits<double>::infinity();

  const std::string text = mechanism_to_json(*mech);
  const Mechanism back = mechanism_from_json(text);
  CHECK(mechanism_to_json(back) == text);
  CHECK(back.chains[0].links[0].joint == JointType::prismatic);
  CHECK(!std::isfinite(back.ground[0].mu));

  auto shared = std::make_shared<Mechanism>(back);
  const auto st = assemble_dynamics(shared, initial_coords(back),
                                    initial_velocity(back));
  CHECK(st.num_dofs() == 6 + 3 + 1);
}

TEST_CASE("detect_contacts honors the velocity-scaled margin") {
  auto mech = point_mass_world();
  VectorXd q = initial_coords(*mech);
  q[2] = 0.1005;  // half a millimetre above the surface
  SUBCASE("slow approach leaves the pair inactive") {
    const auto st = assemble_dynamics(mech, q, VectorXd::Zero(3));
    CHECK(detect_contacts(st, 1e-3).empty());
  }
  SUBCASE("fast approach brings the pair in early") {
    VectorXd v = VectorXd::Zero(3);
    v[2] = -1.0;
    const auto st = assemble_dynamics(mech, q, v);
    CHECK(detect_contacts(st, 1e-3).size() == 1);
  }
}
