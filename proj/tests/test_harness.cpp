#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "idyn/harness.hpp"

using namespace idyn;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int line_count(const std::string& text) {
  int n = 0;
  for (char c : text)
    if (c == '\n') ++n;
  return n;
}

}  // namespace

TEST_CASE("emit_report shapes") {
  SUBCASE("an empty run writes only the header") {
    ScenarioRun run;
    emit_report(run, "empty.csv", ReportFormat::csv);
    const std::string text = slurp("empty.csv");
    CHECK(line_count(text) == 1);
    CHECK(text.rfind("t,err_pos_mean,err_vel_mean,tau_norm,dtau_norm,"
                     "fN_pred_sum,fN_sim_sum,pivots,step_us",
                     0) == 0);
    std::remove("empty.csv");
  }
  SUBCASE("a thousand-step run writes a header plus one row per step") {
    ScenarioConfig cfg;
    cfg.scenario = "free_flight";
    cfg.duration = 1.0;
    cfg.controller.kind = ControllerKind::id_now;
    const auto run = run_scenario(cfg);
    REQUIRE(run.series.size() == 1000);
    emit_report(run, "steps.csv", ReportFormat::csv);
    CHECK(line_count(slurp("steps.csv")) == 1001);
    std::remove("steps.csv");
  }
  SUBCASE("json reports round trip") {
    ScenarioConfig cfg;
    cfg.scenario = "free_flight";
    cfg.duration = 0.05;
    const auto run = run_scenario(cfg);
    emit_report(run, "run.json", ReportFormat::json);
    const auto back = parse_report_json("run.json");
    CHECK(back.series.size() == run.series.size());
    CHECK(back.summary.err_pos == run.summary.err_pos);
    CHECK(back.summary.dtau == run.summary.dtau);
    CHECK(back.summary.force_rel_err == run.summary.force_rel_err);
    for (size_t i = 0; i < run.series.size(); ++i)
      CHECK(back.series[i].tau_norm == run.series[i].tau_norm);
    std::remove("run.json");
  }
}

TEST_CASE("identical config and seed reproduce the report bitwise") {
  ScenarioConfig cfg;
  cfg.scenario = "resting_box";
  cfg.duration = 0.08;
  cfg.seed = 123;
  cfg.measure_timing = false;  // wall clock is the one nondeterministic input
  cfg.controller.solver = SolverKind::qp;
  cfg.controller.mu = 1.0;
  const auto a = run_scenario(cfg);
  const auto b = run_scenario(cfg);
  emit_report(a, "a.csv", ReportFormat::csv);
  emit_report(b, "b.csv", ReportFormat::csv);
  CHECK(slurp("a.csv") == slurp("b.csv"));
  std::remove("a.csv");
  std::remove("b.csv");
}

TEST_CASE("summary statistics are the means of the stored series") {
  ScenarioConfig cfg;
  cfg.scenario = "sliding_block";
  cfg.duration = 0.2;
  cfg.controller.mu = 0.1;
  const auto run = run_scenario(cfg);
  const int n = static_cast<int>(run.series.size());
  double ep = 0, ev = 0, tau = 0, dtau = 0;
  for (const auto& r : run.series) {
    ep += r.err_pos_mean / n;
    ev += r.err_vel_mean / n;
    tau += r.tau_norm / n;
  }
  for (int i = 1; i < n; ++i) dtau += run.series[i].dtau_norm / (n - 1);
  CHECK(run.summary.err_pos == doctest::Approx(ep).epsilon(1e-12));
  CHECK(run.summary.err_vel == doctest::Approx(ev).epsilon(1e-12));
  CHECK(run.summary.tau == doctest::Approx(tau).epsilon(1e-12));
  CHECK(run.summary.dtau == doctest::Approx(dtau).epsilon(1e-12));
}

TEST_CASE("sensed-force controllers lag by exactly their advertised steps") {
  // inject a one-step glitch into the sensed impulses and find the first
  // step whose torque differs from the unperturbed run
  auto first_divergence = [](ControllerKind kind, int spike_step) {
    ScenarioConfig cfg;
    cfg.scenario = "resting_box";
    cfg.duration = 0.012;
    cfg.measure_timing = false;
    cfg.controller.kind = kind;
    const auto base = run_scenario(cfg);
    cfg.sensor_spike_step = spike_step;
    const auto spiked = run_scenario(cfg);
    for (size_t i = 0; i < base.series.size(); ++i)
      if (std::abs(base.series[i].tau_norm - spiked.series[i].tau_norm) >
          1e-9)
        return static_cast<int>(i);
    return -1;
  };
  CHECK(first_divergence(ControllerKind::id_prev1, 4) == 5);
  CHECK(first_divergence(ControllerKind::id_prev2, 4) == 6);
  // the current-time predictive controller never reads the sensed series
  CHECK(first_divergence(ControllerKind::id_now, 4) == -1);
}

TEST_CASE("inverse dynamics tracks no worse than error feedback in flight") {
  ScenarioConfig cfg;
  cfg.scenario = "free_flight";
  cfg.duration = 1.0;
  cfg.measure_timing = false;
  cfg.controller.kind = ControllerKind::pid;
  const auto pid = run_scenario(cfg);
  cfg.controller.kind = ControllerKind::id_now;
  const auto idn = run_scenario(cfg);
  CHECK(idn.summary.err_pos <= pid.summary.err_pos);
  CHECK(idn.summary.err_pos < 0.05);
  CHECK(pid.summary.faults == 0);
  CHECK(idn.summary.faults == 0);
}

TEST_CASE("timing sweep reports per-count medians and fits") {
  ScenarioConfig cfg;
  cfg.scenario = "resting_box";
  const TimingTable t = run_timing_sweep(cfg, {4, 8, 12}, 6);
  REQUIRE(t.rows.count("no_slip_ppm") == 1);
  REQUIRE(t.rows.count("coulomb_lemke") == 1);
  for (const auto& [name, rows] : t.rows) {
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].contacts == 4);
    CHECK(rows[2].contacts == 12);
    for (const auto& r : rows) CHECK(r.median_us > 0);
  }
  emit_timing_report(t, "timing.json");
  CHECK(line_count(slurp("timing.json")) > 3);
  std::remove("timing.json");
}
