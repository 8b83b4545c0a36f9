/****************************************************************************
 * This library is distributed under the terms of the Apache V2.0 license
 * (obtainable from http://www.apache.org/licenses/LICENSE-2.0).
 ****************************************************************************/
#include <CLI11.hpp>
#include <fstream>
#include <iostream>

#include "idyn/acceptance.hpp"
#include "idyn/harness.hpp"

namespace {

using namespace idyn;

bool parse_friction(const std::string& text, double& mu) {
  if (text == "inf") {
    mu = std::numeric_limits<double>::infinity();
    return true;
  }
  if (text.rfind("mu=", 0) == 0) {
    try {
      mu = std::stod(text.substr(3));
      return mu >= 0;
    } catch (...) {
      return false;
    }
  }
  return false;
}

std::vector<int> parse_contact_counts(const std::string& text, int base) {
  std::vector<int> out;
  const auto dots = text.find("..");
  if (dots != std::string::npos) {
    const int lo = std::stoi(text.substr(0, dots));
    const int hi = std::stoi(text.substr(dots + 2));
    for (int c = lo; c <= hi; c += base) out.push_back(c);
    return out;
  }
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Inverse dynamics with rigid contact: scenario runner"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Run one scenario/controller pair");
  std::string scenario = "resting_box", controller = "id-now",
              solver = "lcp", friction = "inf", out_path = "run.csv",
              format = "csv", sim = "complementarity";
  double dt = 1e-3, duration = 5.0,
         sim_mu_opt = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t seed = 7;
  bool stage2 = true, warm = true, anti_chatter = false, timing = true;
  run->add_option("--scenario", scenario, "registered scenario name");
  run->add_option("--controller", controller, "pid|id-now|id-prev1|id-prev2");
  run->add_option("--solver", solver, "lcp|qp");
  run->add_option("--friction", friction, "mu=<v>|inf");
  run->add_option("--dt", dt, "control period (s)");
  run->add_option("--duration", duration, "run length (s)");
  run->add_option("--seed", seed, "rng seed");
  run->add_option("--out", out_path, "report file");
  run->add_option("--format", format, "csv|json");
  run->add_option("--sim", sim, "complementarity|energy|compliant");
  run->add_option("--sim-mu", sim_mu_opt, "override the world friction");
  run->add_flag("--stage2,!--no-stage2", stage2, "QP torque-smoothing stage");
  run->add_flag("--warm-start,!--no-warm-start", warm, "no-slip warm start");
  run->add_flag("--anti-chatter", anti_chatter,
                "Coulomb minimum-difference enumeration");
  run->add_flag("--timing,!--no-timing", timing,
                "record controller wall clock");

  // sweep-timing
  auto* sweep = app.add_subcommand("sweep-timing",
                                   "Controller runtime vs contact count");
  std::string sweep_scenario = "resting_box", contacts = "4..40",
              sweep_out = "timing.json";
  sweep->add_option("--scenario", sweep_scenario, "registered scenario name");
  sweep->add_option("--contacts", contacts, "range lo..hi or list");
  sweep->add_option("--out", sweep_out, "report file");

  // verify
  auto* verify = app.add_subcommand("verify", "Run the full property suite");

  // dump-mechanism
  auto* dump = app.add_subcommand(
      "dump-mechanism", "Write a scenario's mechanism description as JSON");
  std::string dump_scenario = "resting_box", dump_out = "mechanism.json";
  dump->add_option("--scenario", dump_scenario, "registered scenario name");
  dump->add_option("--out", dump_out, "output file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      ScenarioConfig cfg;
      cfg.scenario = scenario;
      cfg.duration = duration;
      cfg.seed = seed;
      cfg.sim_mu = sim_mu_opt;
      cfg.measure_timing = timing;
      if (sim == "complementarity")
        cfg.sim = SimKind::rigid_complementarity;
      else if (sim == "energy")
        cfg.sim = SimKind::rigid_energy;
      else if (sim == "compliant")
        cfg.sim = SimKind::compliant;
      else
        throw IdynError(ErrorCode::config_error, "bad --sim value");

      ControllerSpec& spec = cfg.controller;
      if (controller == "pid")
        spec.kind = ControllerKind::pid;
      else if (controller == "id-now")
        spec.kind = ControllerKind::id_now;
      else if (controller == "id-prev1")
        spec.kind = ControllerKind::id_prev1;
      else if (controller == "id-prev2")
        spec.kind = ControllerKind::id_prev2;
      else
        throw IdynError(ErrorCode::config_error, "bad --controller value");
      if (solver == "lcp")
        spec.solver = SolverKind::lcp;
      else if (solver == "qp")
        spec.solver = SolverKind::qp;
      else
        throw IdynError(ErrorCode::config_error, "bad --solver value");
      if (!parse_friction(friction, spec.mu))
        throw IdynError(ErrorCode::config_error, "bad --friction value");
      spec.dt = dt;
      spec.stage2 = stage2;
      spec.warm_start = warm;
      spec.anti_chatter = anti_chatter;

      const ScenarioRun result = run_scenario(cfg);
      emit_report(result, out_path,
                  format == "json" ? ReportFormat::json : ReportFormat::csv);
      std::cout << "wrote " << out_path << "  (steps " << result.series.size()
                << ", err_pos " << result.summary.err_pos
                << ", force_rel_err " << result.summary.force_rel_err
                << ", faults " << result.summary.faults << ")\n";
      return 0;
    }
    if (sweep->parsed()) {
      ScenarioConfig cfg;
      cfg.scenario = sweep_scenario;
      const Scenario sc = make_scenario(sweep_scenario, cfg.sim_mu);
      const auto st = assemble_dynamics(sc.mech, initial_coords(*sc.mech),
                                        initial_velocity(*sc.mech));
      const int base = static_cast<int>(
          detect_contacts(st, cfg.controller.dt).size());
      const auto counts = parse_contact_counts(contacts, std::max(base, 1));
      const TimingTable table = run_timing_sweep(cfg, counts);
      emit_timing_report(table, sweep_out);
      std::cout << "wrote " << sweep_out << "\n";
      for (const auto& [name, fit] : table.fits)
        std::cout << name << ": linear R2 " << fit.linear_r2
                  << ", log-log slope " << fit.loglog_slope << "\n";
      return 0;
    }
    if (verify->parsed()) {
      const int failed = run_acceptance(std::cout);
      return failed == 0 ? 0 : 2;
    }
    if (dump->parsed()) {
      const Scenario sc = make_scenario(
          dump_scenario, std::numeric_limits<double>::quiet_NaN());
      std::ofstream out(dump_out);
      if (!out.good())
        throw IdynError(ErrorCode::io_error, "cannot open " + dump_out);
      out << mechanism_to_json(*sc.mech) << "\n";
      std::cout << "wrote " << dump_out << "\n";
      return 0;
    }
  } catch (const idyn::IdynError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
