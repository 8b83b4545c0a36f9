/****************************************************************************
 * This library is distributed under the terms of the Apache V2.0 license
 * (obtainable from http://www.apache.org/licenses/LICENSE-2.0).
 ****************************************************************************/
#pragma once

#include <cstdint>
#include <functional>
#include <map>

#include "idyn/inverse_dynamics.hpp"

namespace idyn {

enum class ControllerKind { pid, id_now, id_prev1, id_prev2 };
enum class SolverKind { lcp, qp };

struct ControllerSpec {
  ControllerKind kind = ControllerKind::id_now;
  SolverKind solver = SolverKind::lcp;
  // friction model the controller assumes; infinity selects no-slip
  double mu = std::numeric_limits<double>::infinity();
  double kp = -1, kv = -1, ki = -1;  // negative: use the scenario defaults
  double dt = 1e-3;
  bool stage2 = true;        // QP paths
  bool warm_start = true;    // no-slip path
  bool anti_chatter = false; // Coulomb path (enumeration, small n only)
};

enum class SimKind { rigid_complementarity, rigid_energy, compliant };

struct ScenarioConfig {
  std::string scenario = "resting_box";
  ControllerSpec controller;
  double duration = 1.0;
  std::uint64_t seed = 7;
  SimKind sim = SimKind::rigid_complementarity;
  double sim_mu = std::numeric_limits<double>::quiet_NaN();  // NaN: scenario default
  double compliant_stiffness = 47088.2;
  double compliant_damping = 200.0;
  int contact_duplication = 1;  // artificial contact copies per real contact
  bool measure_timing = true;
  // inject a one-step glitch into the sensed contact impulses (exercises the
  // sensing lag of the id-prev controllers); negative disables
  int sensor_spike_step = -1;
  double sensor_spike = 0.05;  // N s, applied on every generalized axis
};

struct StepRecord {
  double t = 0;
  double err_pos_mean = 0;
  double err_vel_mean = 0;
  double tau_norm = 0;   // mean |tau_j|
  double dtau_norm = 0;  // mean |tau_j - tau_j(previous)|
  double fN_pred_sum = 0;  // predicted summed normal force (N)
  double fN_sim_sum = 0;   // simulator summed normal force (N)
  int pivots = 0;
  double step_us = 0;      // controller wall clock
};

struct RunSummary {
  double err_pos = 0;   // E[E[|theta - theta_des|]]
  double err_vel = 0;
  double dtau = 0;      // E[|dtau|], first step excluded
  double tau = 0;       // E[|tau|]
  double force_abs_err = 0;
  double force_rel_err = 0;
  int faults = 0;
  int fallbacks = 0;
};

struct ScenarioRun {
  std::vector<StepRecord> series;
  RunSummary summary;
};

struct Scenario {
  std::shared_ptr<Mechanism> mech;
  // desired actuated position/velocity/acceleration at time t
  std::function<void(double, VectorXd&, VectorXd&, VectorXd&)> trajectory;
  double dither = 0;  // seeded perturbation added to the desired acceleration
  // present the detected contacts in a seeded arbitrary order each step, the
  // way a collision-detection pass would; identity-based warm starting and
  // the torque-smoothing stage are both order-invariant, a raw solve is not
  bool shuffle_contacts = false;
  double default_mu = std::numeric_limits<double>::infinity();
  double kp = 20, kv = 4, ki = 0;
};

std::vector<std::string> scenario_names();
Scenario make_scenario(const std::string& name, double mu_override);

ScenarioRun run_scenario(const ScenarioConfig& config);

struct TimingRow {
  int contacts = 0;
  double median_us = 0;
  double p95_us = 0;
};

struct TimingFit {
  double linear_r2 = 0;     // R^2 of median vs contact count
  double loglog_slope = 0;  // growth exponent from a log-log fit
};

struct TimingTable {
  std::map<std::string, std::vector<TimingRow>> rows;  // per formulation
  std::map<std::string, TimingFit> fits;
};

TimingTable run_timing_sweep(const ScenarioConfig& config,
                             const std::vector<int>& contact_counts,
                             int steps_per_point = 25);

enum class ReportFormat { csv, json };
void emit_report(const ScenarioRun& run, const std::string& path,
                 ReportFormat format);
ScenarioRun parse_report_json(const std::string& path);
void emit_timing_report(const TimingTable& table, const std::string& path);

}  // namespace idyn
