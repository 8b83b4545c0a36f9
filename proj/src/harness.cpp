/****************************************************************************
 * This library is distributed under the terms of the Apache V2.0 license
 * (obtainable from http://www.apache.org/licenses/LICENSE-2.0).
 ****************************************************************************/
#include "idyn/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <random>
#include <sstream>

namespace idyn {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Scenario make_resting_box() {
  // floating planar table on four actuated prismatic legs; indeterminate
  // four-contact support
  Scenario sc;
  auto mech = std::make_shared<Mechanism>();
  ChainDesc table;
  table.name = "table";
  table.floating = true;
  table.base_z = 0.06;
  table.base_mass = 4.7649;
  table.base_inertia = 0.012;
  const double leg_mass = 0.01;
  const double leg_len = 0.05;
  int idx = 0;
  for (double off : {-0.09, -0.03, 0.03, 0.09}) {
    LinkDesc leg;
    leg.name = "leg" + std::to_string(idx++);
    leg.parent = -1;
    leg.attach = Vector3d(off, 0, 0);
    leg.joint = JointType::prismatic;
    leg.dir_angle = -M_PI / 2;
    leg.length = leg_len;
    leg.mass = leg_mass;
    leg.inertia = 1e-6;
    leg.q0 = 0;
    leg.actuated = true;
    leg.spheres.push_back({Vector3d::Zero(), 0.01});
    table.links.push_back(leg);
  }
  mech->chains.push_back(table);
  mech->ground.push_back({Halfspace{}, 1.0});
  sc.mech = mech;
  sc.default_mu = 1.0;
  sc.dither = 1e-8;
  sc.shuffle_contacts = true;
  sc.kp = 400;
  sc.kv = 40;
  sc.trajectory = [](double, VectorXd& qd, VectorXd& vd, VectorXd& ad) {
    qd = VectorXd::Zero(4);
    vd = VectorXd::Zero(4);
    ad = VectorXd::Zero(4);
  };
  return sc;
}

Scenario make_sliding_block() {
  // planar block with actuated (x, theta) and an unactuated vertical axis;
  // the lateral reference exceeds what the friction cone can transmit
  Scenario sc;
  auto mech = std::make_shared<Mechanism>();
  PlanarBodyDesc block;
  block.name = "block";
  block.mass = 1.5;
  block.inertia = 2e-3;
  block.z = 0.03;
  block.actuated = true;
  block.actuated_dofs = {0, 2};
  block.spheres.push_back({Vector3d(-0.05, 0, -0.02), 0.01});
  block.spheres.push_back({Vector3d(0.05, 0, -0.02), 0.01});
  mech->planar_bodies.push_back(block);
  mech->ground.push_back({Halfspace{}, 0.1});
  sc.mech = mech;
  sc.default_mu = 0.1;
  sc.kp = 40;
  sc.kv = 10;
  sc.trajectory = [](double t, VectorXd& qd, VectorXd& vd, VectorXd& ad) {
    qd.resize(2);
    vd.resize(2);
    ad.resize(2);
    const double a = 2.0;  // beyond the mu g cone at mu = 0.1
    qd << 0.5 * a * t * t, 0.0;
    vd << a * t, 0.0;
    ad << a, 0.0;
  };
  return sc;
}

Scenario make_hopper() {
  Scenario sc;
  auto mech = std::make_shared<Mechanism>();
  ChainDesc hop;
  hop.name = "hopper";
  hop.floating = true;
  hop.base_mass = 1.2;
  hop.base_inertia = 4e-3;
  LinkDesc thigh;
  thigh.name = "thigh";
  thigh.parent = -1;
  thigh.joint = JointType::revolute;
  thigh.q0 = -1.9;
  thigh.length = 0.08;
  thigh.mass = 0.08;
  thigh.inertia = 0.08 * 0.08 * 0.08 / 12;
  thigh.com = 0.04;
  LinkDesc shank = thigh;
  shank.name = "shank";
  shank.parent = 0;
  shank.q0 = 0.8;
  shank.spheres.push_back({Vector3d::Zero(), 0.01});
  hop.links = {thigh, shank};
  // drop the base so the foot starts on the plane
  const double tip_dz =
      0.08 * std::sin(-1.9) + 0.08 * std::sin(-1.9 + 0.8);
  hop.base_z = -tip_dz + 0.01;
  mech->chains.push_back(hop);
  mech->ground.push_back({Halfspace{}, kInf});
  sc.mech = mech;
  sc.default_mu = kInf;
  sc.kp = 60;
  sc.kv = 10;
  sc.trajectory = [](double t, VectorXd& qd, VectorXd& vd, VectorXd& ad) {
    qd.resize(2);
    vd.resize(2);
    ad.resize(2);
    const double w = 2 * M_PI * 2.0, amp = 0.25;
    qd << -1.9 + amp * std::sin(w * t), 0.8 - amp * std::sin(w * t);
    vd << amp * w * std::cos(w * t), -amp * w * std::cos(w * t);
    ad << -amp * w * w * std::sin(w * t), amp * w * w * std::sin(w * t);
  };
  return sc;
}

Scenario make_pinch_grasp() {
  // two prismatic fingers squeezing a free planar puck held against gravity
  // by friction
  Scenario sc;
  auto mech = std::make_shared<Mechanism>();
  for (int side = 0; side < 2; ++side) {
    ChainDesc finger;
    finger.name = side == 0 ? "finger_l" : "finger_r";
    finger.base_x = side == 0 ? -0.08 : 0.08;
    finger.base_z = 0.05;
    finger.base_theta = side == 0 ? 0.0 : M_PI;
    LinkDesc rod;
    rod.name = "rod";
    rod.parent = -1;
    rod.joint = JointType::prismatic;
    rod.dir_angle = 0;
    rod.length = 0.03;
    rod.q0 = 0.02;
    rod.mass = 0.05;
    rod.inertia = 1e-6;
    rod.spheres.push_back({Vector3d::Zero(), 0.01});
    finger.links = {rod};
    mech->chains.push_back(finger);
  }
  PlanarBodyDesc puck;
  puck.name = "puck";
  puck.mass = 0.3;
  puck.inertia = 6e-5;
  puck.z = 0.05;
  puck.spheres.push_back({Vector3d::Zero(), 0.02});
  mech->planar_bodies.push_back(puck);
  mech->mu_pair = 1.0;
  sc.mech = mech;
  sc.default_mu = 1.0;
  sc.kp = 200;
  sc.kv = 28;
  sc.trajectory = [](double t, VectorXd& qd, VectorXd& vd, VectorXd& ad) {
    qd.resize(2);
    vd.resize(2);
    ad.resize(2);
    const double w = 2 * M_PI * 1.5, amp = 0.005;
    const double s = amp * std::sin(w * t);
    qd << 0.02 + s, 0.02 - s;  // translate the grip side to side
    vd << amp * w * std::cos(w * t), -amp * w * std::cos(w * t);
    ad << -amp * w * w * std::sin(w * t), amp * w * w * std::sin(w * t);
  };
  return sc;
}

Scenario make_free_flight() {
  Scenario sc;
  auto mech = std::make_shared<Mechanism>();
  ChainDesc arm;
  arm.name = "arm";
  arm.base_z = 0.5;
  LinkDesc l1;
  l1.name = "upper";
  l1.length = 0.1;
  l1.mass = 0.3;
  l1.inertia = 0.3 * 0.1 * 0.1 / 12;
  l1.com = 0.05;
  l1.q0 = -1.0;
  l1.v0 = 0.3 * 2 * M_PI * 1.2;  // match the reference at t = 0
  LinkDesc l2 = l1;
  l2.name = "lower";
  l2.parent = 0;
  l2.q0 = 0.5 + 0.4 * std::sin(0.5);
  l2.v0 = 0.4 * 2 * M_PI * 0.9 * std::cos(0.5);
  arm.links = {l1, l2};
  mech->chains.push_back(arm);
  sc.mech = mech;
  sc.kp = 60;
  sc.kv = 0.3;
  sc.trajectory = [](double t, VectorXd& qd, VectorXd& vd, VectorXd& ad) {
    qd.resize(2);
    vd.resize(2);
    ad.resize(2);
    const double w1 = 2 * M_PI * 1.2, w2 = 2 * M_PI * 0.9;
    qd << -1.0 + 0.3 * std::sin(w1 * t), 0.5 + 0.4 * std::sin(w2 * t + 0.5);
    vd << 0.3 * w1 * std::cos(w1 * t), 0.4 * w2 * std::cos(w2 * t + 0.5);
    ad << -0.3 * w1 * w1 * std::sin(w1 * t),
        -0.4 * w2 * w2 * std::sin(w2 * t + 0.5);
  };
  return sc;
}

}  // namespace

std::vector<std::string> scenario_names() {
  return {"resting_box", "sliding_block", "hopper_1leg", "pinch_grasp",
          "free_flight"};
}

Scenario make_scenario(const std::string& name, double mu_override) {
  Scenario sc;
  if (name == "resting_box")
    sc = make_resting_box();
  else if (name == "sliding_block")
    sc = make_sliding_block();
  else if (name == "hopper_1leg")
    sc = make_hopper();
  else if (name == "pinch_grasp")
    sc = make_pinch_grasp();
  else if (name == "free_flight")
    sc = make_free_flight();
  else
    throw IdynError(ErrorCode::config_error, "unknown scenario " + name);
  if (!std::isnan(mu_override)) {
    for (auto& g : sc.mech->ground) g.mu = mu_override;
    sc.mech->mu_pair = std::isfinite(mu_override) ? mu_override
                                                  : sc.mech->mu_pair;
    sc.default_mu = mu_override;
  }
  return sc;
}

namespace {

struct ControllerState {
  VectorXd integ_err;
  std::vector<ContactKey> warm_keys;
  IndexSet warm_set;
  std::optional<VectorXd> x_prev;
  std::vector<VectorXd> sensed;  // generalized contact impulses from the sim
  VectorXd last_tau;
};

VectorXd sensed_lag_controller(const MultibodyState& st,
                               const VectorXd& qdot_des, double dt,
                               const VectorXd& gc) {
  const int m = st.num_dofs();
  const int nq = st.num_actuated();
  MatrixXd A(m + nq, m + nq);
  A.setZero();
  A.topLeftCorner(m, m) = st.M;
  A.topRightCorner(m, nq) = -st.P.transpose();
  A.bottomLeftCorner(nq, m) = st.P;
  VectorXd rhs(m + nq);
  rhs.head(m) = st.M * st.v + dt * st.f_ext + gc;
  rhs.tail(nq) = qdot_des;
  const VectorXd x = A.partialPivLu().solve(rhs);
  return x.tail(nq) / dt;
}

ContactSet controller_contacts(const MultibodyState& st,
                               const std::vector<ContactPoint>& world,
                               double mu_ctrl) {
  std::vector<ContactPoint> pts = world;
  for (auto& c : pts) c.mu = mu_ctrl;
  return build_wrenches(st, pts);
}

struct ControllerOutput {
  VectorXd tau;
  double fN_pred_sum = 0;  // force units
  int pivots = 0;
  bool fallback = false;
};

ControllerOutput run_controller(const ControllerSpec& spec,
                                const MultibodyState& st,
                                const std::vector<ContactPoint>& world_pts,
                                const VectorXd& qdot_des, const VectorXd& e,
                                const VectorXd& edot, ControllerState& cst) {
  ControllerOutput out;
  const double dt = spec.dt;
  switch (spec.kind) {
    case ControllerKind::pid: {
      out.tau = spec.kp * e + spec.kv * edot + spec.ki * cst.integ_err;
      return out;
    }
    case ControllerKind::id_prev1:
    case ControllerKind::id_prev2: {
      const int lag = spec.kind == ControllerKind::id_prev1 ? 1 : 2;
      VectorXd gc = VectorXd::Zero(st.num_dofs());
      if (static_cast<int>(cst.sensed.size()) >= lag)
        gc = cst.sensed[cst.sensed.size() - lag];
      out.tau = sensed_lag_controller(st, qdot_des, dt, gc);
      return out;
    }
    case ControllerKind::id_now:
      break;
  }

  IdynRequest req;
  req.state = st;
  req.contacts = controller_contacts(st, world_pts, spec.mu);
  req.qdot_des = qdot_des;
  req.dt = dt;

  IdynResult res;
  if (spec.solver == SolverKind::lcp) {
    if (!std::isfinite(spec.mu)) {
      IndexSet warm;
      if (spec.warm_start) {
        std::vector<ContactKey> keys;
        for (const auto& c : req.contacts.contacts)
          keys.push_back(contact_key(c));
        warm = remap_warm_start(cst.warm_keys, cst.warm_set, keys);
      }
      try {
        res = idyn_no_slip(req, warm);
      } catch (const IdynError& err) {
        if (err.code() != ErrorCode::inconsistent_desired_accel) throw;
        res = consistency_fallback(req, IdynResult{});
        out.fallback = true;
      }
      cst.warm_keys.clear();
      for (const auto& c : req.contacts.contacts)
        cst.warm_keys.push_back(contact_key(c));
      cst.warm_set = res.nonbasic_set;
    } else {
      res = idyn_coulomb_lcp(req, spec.anti_chatter ? cst.x_prev
                                                    : std::optional<VectorXd>{});
      if (spec.anti_chatter) cst.x_prev = idyn_solution_vector(req, res);
    }
  } else {
    res = std::isfinite(spec.mu) ? idyn_qp(req, spec.stage2)
                                 : idyn_qp_no_slip(req, spec.stage2);
  }
  // raw retrieval may be inconsistent; repair it without re-solving.  The
  // trigger sits above the warm-start bias slack so sticky supports are not
  // re-opened every step.
  if (req.contacts.size() > 0 && !out.fallback && res.v_plus.size() > 0) {
    const double viol =
        (req.contacts.N * res.v_plus + req.contacts.gaps() / dt).minCoeff();
    if (viol < -1e-5) {
      res = consistency_fallback(req, res);
      out.fallback = res.diagnostics.consistency_fallback_used;
    }
  }
  out.tau = res.tau;
  out.fN_pred_sum = res.f_N.size() > 0 ? res.f_N.sum() / dt : 0.0;
  out.pivots = res.diagnostics.pivots;
  return out;
}

double mean_abs(const VectorXd& v) {
  return v.size() == 0 ? 0.0 : v.cwiseAbs().mean();
}

}  // namespace

ScenarioRun run_scenario(const ScenarioConfig& config) {
  Scenario sc = make_scenario(config.scenario, config.sim_mu);
  ControllerSpec spec = config.controller;
  if (spec.kp < 0) spec.kp = sc.kp;
  if (spec.kv < 0) spec.kv = sc.kv;
  if (spec.ki < 0) spec.ki = sc.ki;

  const double dt = spec.dt;
  const int steps = static_cast<int>(std::round(config.duration / dt));
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> jitter(-1.0, 1.0);

  VectorXd q = initial_coords(*sc.mech);
  VectorXd v = initial_velocity(*sc.mech);

  ControllerState cst;
  ScenarioRun run;
  run.series.reserve(steps);

  double sum_abs_ferr = 0, sum_sim_f = 0;
  for (int step = 0; step < steps; ++step) {
    const double t = step * dt;
    const auto st = assemble_dynamics(sc.mech, q, v);
    const int nq = st.num_actuated();
    if (cst.integ_err.size() == 0) cst.integ_err = VectorXd::Zero(nq);
    if (cst.last_tau.size() == 0) cst.last_tau = VectorXd::Zero(nq);

    auto world_pts = detect_contacts(st, dt);
    if (sc.shuffle_contacts)
      std::shuffle(world_pts.begin(), world_pts.end(), rng);
    // artificial duplicates load the controller only; the simulator keeps
    // the real contact set
    auto ctrl_pts = world_pts;
    for (int c = 1; c < config.contact_duplication; ++c)
      ctrl_pts.insert(ctrl_pts.end(), world_pts.begin(), world_pts.end());

    VectorXd qd, vd, ad;
    sc.trajectory(t, qd, vd, ad);
    const VectorXd q_act = actuated_positions(*sc.mech, q, st.P);
    const VectorXd v_act = st.P * v;
    const VectorXd e = qd - q_act;
    const VectorXd edot = vd - v_act;
    cst.integ_err += dt * e;

    VectorXd qddot_des = ad + spec.kp * e + spec.kv * edot +
                         spec.ki * cst.integ_err;
    if (sc.dither > 0)
      for (int i = 0; i < qddot_des.size(); ++i)
        qddot_des[i] += sc.dither * jitter(rng);
    const VectorXd qdot_des = v_act + dt * qddot_des;

    StepRecord recd;
    recd.t = t;
    recd.err_pos_mean = mean_abs(e);
    recd.err_vel_mean = mean_abs(edot);

    ControllerOutput ctrl;
    bool fault = false;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      ctrl = run_controller(spec, st, ctrl_pts, qdot_des, e, edot, cst);
    } catch (const IdynError&) {
      fault = true;
      ctrl.tau = cst.last_tau;
    }
    const auto t1 = std::chrono::steady_clock::now();
    if (config.measure_timing)
      recd.step_us =
          std::chrono::duration<double, std::micro>(t1 - t0).count();

    recd.tau_norm = mean_abs(ctrl.tau);
    recd.dtau_norm = step == 0 ? 0.0 : mean_abs(ctrl.tau - cst.last_tau);
    recd.fN_pred_sum = ctrl.fN_pred_sum;
    recd.pivots = ctrl.pivots;
    if (fault) ++run.summary.faults;
    if (ctrl.fallback) ++run.summary.fallbacks;
    cst.last_tau = ctrl.tau;

    // simulator step at the world friction
    const auto cs_world = build_wrenches(st, world_pts);
    StepResult simr;
    if (config.sim == SimKind::compliant)
      simr = forward_step_compliant(st, cs_world, ctrl.tau, dt,
                                    config.compliant_stiffness,
                                    config.compliant_damping);
    else
      simr = forward_step_rigid(st, cs_world, ctrl.tau, dt,
                                config.sim == SimKind::rigid_complementarity
                                    ? ContactModel::complementarity
                                    : ContactModel::complementarity_free);
    recd.fN_sim_sum = simr.f_N.size() > 0 ? simr.f_N.sum() / dt : 0.0;

    VectorXd gc = VectorXd::Zero(st.num_dofs());
    for (int i = 0; i < cs_world.size(); ++i)
      gc += cs_world.N.row(i).transpose() * simr.f_N[i] +
            cs_world.S.row(i).transpose() * simr.f_S[i] +
            cs_world.T.row(i).transpose() * simr.f_T[i];
    if (step == config.sensor_spike_step)
      gc.array() += config.sensor_spike;
    cst.sensed.push_back(gc);

    v = simr.v_plus;
    q = integrate_coords(*sc.mech, q, v, dt);

    sum_abs_ferr += std::abs(recd.fN_pred_sum - recd.fN_sim_sum);
    sum_sim_f += recd.fN_sim_sum;
    run.series.push_back(recd);
  }

  // summary statistics are plain means of the stored series
  auto& s = run.summary;
  const int n = static_cast<int>(run.series.size());
  for (const auto& r : run.series) {
    s.err_pos += r.err_pos_mean / n;
    s.err_vel += r.err_vel_mean / n;
    s.tau += r.tau_norm / n;
  }
  for (int i = 1; i < n; ++i) s.dtau += run.series[i].dtau_norm / (n - 1);
  s.force_abs_err = n > 0 ? sum_abs_ferr / n : 0;
  s.force_rel_err = sum_sim_f > 0 ? sum_abs_ferr / sum_sim_f : 0;
  return run;
}

namespace {

double quantile(std::vector<double> xs, double q) {
  if (xs.empty()) return 0;
  std::sort(xs.begin(), xs.end());
  return xs[static_cast<size_t>(q * (xs.size() - 1))];
}

// scheduler noise only ever adds time, so fit on a low quantile
TimingFit fit_points(const std::vector<std::pair<int, double>>& pts) {
  TimingFit fit;
  const int n = static_cast<int>(pts.size());
  if (n < 2) return fit;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  double lx = 0, ly = 0, lxx = 0, lxy = 0;
  for (const auto& [cx, cy] : pts) {
    const double x = cx, y = cy;
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    const double gx = std::log(x), gy = std::log(std::max(y, 1e-9));
    lx += gx;
    ly += gy;
    lxx += gx * gx;
    lxy += gx * gy;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double intercept = (sy - slope * sx) / n;
  double ss_res = 0, ss_tot = 0;
  for (const auto& [cx, cy] : pts) {
    const double pred = slope * cx + intercept;
    ss_res += (cy - pred) * (cy - pred);
    ss_tot += (cy - sy / n) * (cy - sy / n);
  }
  fit.linear_r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
  fit.loglog_slope = (n * lxy - lx * ly) / (n * lxx - lx * lx);
  return fit;
}

}  // namespace

TimingTable run_timing_sweep(const ScenarioConfig& config,
                             const std::vector<int>& contact_counts,
                             int steps_per_point) {
  TimingTable table;
  const Scenario probe = make_scenario(config.scenario, config.sim_mu);
  const auto st0 = assemble_dynamics(probe.mech, initial_coords(*probe.mech),
                                     initial_velocity(*probe.mech));
  const int base = static_cast<int>(
      detect_contacts(st0, config.controller.dt).size());
  require(base > 0, ErrorCode::config_error,
          "run_timing_sweep: scenario starts with no contacts");

  const std::vector<std::pair<std::string, ControllerSpec>> formulations = [&] {
    std::vector<std::pair<std::string, ControllerSpec>> out;
    ControllerSpec ns = config.controller;
    ns.kind = ControllerKind::id_now;
    ns.solver = SolverKind::lcp;
    ns.mu = kInf;
    out.push_back({"no_slip_ppm", ns});
    ControllerSpec cl = ns;
    cl.mu = std::isfinite(config.sim_mu) ? config.sim_mu : 1.0;
    out.push_back({"coulomb_lemke", cl});
    return out;
  }();

  for (const auto& [name, spec] : formulations) {
    std::vector<std::pair<int, double>> fit_pts;
    for (int count : contact_counts) {
      ScenarioConfig cfg = config;
      cfg.controller = spec;
      cfg.duration = steps_per_point * spec.dt;
      cfg.contact_duplication = std::max(1, count / base);
      cfg.measure_timing = true;
      const ScenarioRun run = run_scenario(cfg);
      std::vector<double> us;
      for (size_t i = 1; i < run.series.size(); ++i)  // skip cold caches
        us.push_back(run.series[i].step_us);
      TimingRow row;
      row.contacts = cfg.contact_duplication * base;
      row.median_us = quantile(us, 0.5);
      row.p95_us = quantile(us, 0.95);
      table.rows[name].push_back(row);
      fit_pts.push_back({row.contacts, quantile(us, 0.25)});
    }
    table.fits[name] = fit_points(fit_pts);
  }
  return table;
}

namespace {

const char* kCsvHeader =
    "t,err_pos_mean,err_vel_mean,tau_norm,dtau_norm,fN_pred_sum,fN_sim_sum,"
    "pivots,step_us";

nlohmann::json summary_json(const RunSummary& s) {
  return {{"err_pos", s.err_pos},       {"err_vel", s.err_vel},
          {"dtau", s.dtau},             {"tau", s.tau},
          {"force_abs_err", s.force_abs_err},
          {"force_rel_err", s.force_rel_err},
          {"faults", s.faults},         {"fallbacks", s.fallbacks}};
}

}  // namespace

void emit_report(const ScenarioRun& run, const std::string& path,
                 ReportFormat format) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::io_error, "emit_report: cannot open " + path);
  if (format == ReportFormat::csv) {
    out << kCsvHeader << "\n";
    char buf[340];
    for (const auto& r : run.series) {
      std::snprintf(buf, sizeof(buf),
                    "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%.17g",
                    r.t, r.err_pos_mean, r.err_vel_mean, r.tau_norm,
                    r.dtau_norm, r.fN_pred_sum, r.fN_sim_sum, r.pivots,
                    r.step_us);
      out << buf << "\n";
    }
  } else {
    nlohmann::json j;
    j["summary"] = summary_json(run.summary);
    j["series"] = nlohmann::json::array();
    for (const auto& r : run.series)
      j["series"].push_back({{"t", r.t},
                             {"err_pos_mean", r.err_pos_mean},
                             {"err_vel_mean", r.err_vel_mean},
                             {"tau_norm", r.tau_norm},
                             {"dtau_norm", r.dtau_norm},
                             {"fN_pred_sum", r.fN_pred_sum},
                             {"fN_sim_sum", r.fN_sim_sum},
                             {"pivots", r.pivots},
                             {"step_us", r.step_us}});
    out << j.dump(1) << "\n";
  }
  require(out.good(), ErrorCode::io_error, "emit_report: write failed");
}

ScenarioRun parse_report_json(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::io_error,
          "parse_report_json: cannot open " + path);
  nlohmann::json j;
  in >> j;
  ScenarioRun run;
  for (const auto& r : j.at("series")) {
    StepRecord rec;
    rec.t = r.at("t");
    rec.err_pos_mean = r.at("err_pos_mean");
    rec.err_vel_mean = r.at("err_vel_mean");
    rec.tau_norm = r.at("tau_norm");
    rec.dtau_norm = r.at("dtau_norm");
    rec.fN_pred_sum = r.at("fN_pred_sum");
    rec.fN_sim_sum = r.at("fN_sim_sum");
    rec.pivots = r.at("pivots");
    rec.step_us = r.at("step_us");
    run.series.push_back(rec);
  }
  const auto& s = j.at("summary");
  run.summary.err_pos = s.at("err_pos");
  run.summary.err_vel = s.at("err_vel");
  run.summary.dtau = s.at("dtau");
  run.summary.tau = s.at("tau");
  run.summary.force_abs_err = s.at("force_abs_err");
  run.summary.force_rel_err = s.at("force_rel_err");
  run.summary.faults = s.at("faults");
  run.summary.fallbacks = s.at("fallbacks");
  return run;
}

void emit_timing_report(const TimingTable& table, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::io_error,
          "emit_timing_report: cannot open " + path);
  nlohmann::json j;
  for (const auto& [name, rows] : table.rows) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rows)
      arr.push_back({{"contacts", r.contacts},
                     {"median_us", r.median_us},
                     {"p95_us", r.p95_us}});
    j["rows"][name] = arr;
    j["fits"][name] = {{"linear_r2", table.fits.at(name).linear_r2},
                       {"loglog_slope", table.fits.at(name).loglog_slope}};
  }
  out << j.dump(1) << "\n";
}

}  // namespace idyn
