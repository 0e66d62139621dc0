#include <CLI11.hpp>

#include <Eigen/Dense>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "etmg/errors.hpp"
#include "etmg/graph.hpp"
#include "etmg/scenario.hpp"

namespace {

using namespace etmg;

std::optional<ProfileSet> maybe_load_profiles(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return load_profiles(path);
}

void print_metrics(const std::string& label, const RunMetrics& m) {
  std::printf("%s:\n", label.c_str());
  std::printf("  grid energy        %10.4f MWh\n", m.grid_energy_mwh);
  std::printf("  peak ESS power     %10.4f MW\n", m.peak_ess_mw);
  std::printf("  peak HP power      %10.4f MW\n", m.peak_hp_mw);
  std::printf("  HP power variance  %10.6f MW^2\n", m.hp_variance_mw2);
  std::printf("  used ESS capacity  %10.4f MWh\n", m.ess_capacity_used_mwh);
  std::printf("  total cost         %10.4f\n", m.total_cost);
}

int run_simulate(const std::string& config_path, const std::string& profiles_path,
                 const std::string& out_path) {
  const ScenarioConfig config = load_config(config_path);
  const BuiltScenario scenario = build_scenario(config, maybe_load_profiles(profiles_path));
  const SimulationTrace trace = run_scenario(scenario);
  write_trace(trace, scenario.model.dims, out_path);
  std::printf("simulated %d steps of '%s', trace written to %s\n", trace.step_count(),
              scenario.label.c_str(), out_path.c_str());
  print_metrics(scenario.label, compute_metrics(trace, scenario.model.dims,
                                                scenario.model.dt_h()));
  const double violation = max_constraint_violation(scenario.model, scenario.mpc, trace);
  std::printf("  worst constraint violation %.3e\n", violation);
  return 0;
}

int run_compare(const std::string& config_a, const std::string& config_b,
                const std::string& profiles_path, const std::string& out_dir) {
  const ScenarioConfig cfg_a = load_config(config_a);
  const ScenarioConfig cfg_b = load_config(config_b);
  const std::optional<ProfileSet> override_profiles = maybe_load_profiles(profiles_path);
  const BuiltScenario a = build_scenario(cfg_a, override_profiles);
  const BuiltScenario b = build_scenario(cfg_b, override_profiles);
  if (a.label == b.label) {
    throw ConfigError("compare needs two differently labelled scenarios");
  }
  if (a.profiles.res_mw != b.profiles.res_mw || a.profiles.load_mw != b.profiles.load_mw ||
      a.profiles.heat_mw != b.profiles.heat_mw) {
    throw ConfigError("compare requires identical load profiles in both scenarios");
  }

  std::filesystem::create_directories(out_dir);
  const SimulationTrace trace_a = run_scenario(a);
  const SimulationTrace trace_b = run_scenario(b);
  const std::filesystem::path dir(out_dir);
  write_trace(trace_a, a.model.dims, dir / ("trace_" + a.label + ".csv"));
  write_trace(trace_b, b.model.dims, dir / ("trace_" + b.label + ".csv"));

  const RunMetrics ma = compute_metrics(trace_a, a.model.dims, a.model.dt_h());
  const RunMetrics mb = compute_metrics(trace_b, b.model.dims, b.model.dt_h());
  write_comparison_summary(ma, mb, a.label, b.label, dir / "summary.csv");

  print_metrics(a.label, ma);
  print_metrics(b.label, mb);
  auto change = [](double va, double vb) {
    return std::abs(va) > 1e-12 ? (vb - va) / std::abs(va) * 100.0 : 0.0;
  };
  std::printf("%s vs %s:\n", b.label.c_str(), a.label.c_str());
  std::printf("  grid energy        %+8.2f %%\n", change(ma.grid_energy_mwh, mb.grid_energy_mwh));
  std::printf("  peak ESS power     %+8.2f %%\n", change(ma.peak_ess_mw, mb.peak_ess_mw));
  std::printf("  peak HP power      %+8.2f %%\n", change(ma.peak_hp_mw, mb.peak_hp_mw));
  std::printf("  HP power variance  %+8.2f %%\n", change(ma.hp_variance_mw2, mb.hp_variance_mw2));
  std::printf("  used ESS capacity  %+8.2f %%\n",
              change(ma.ess_capacity_used_mwh, mb.ess_capacity_used_mwh));
  std::printf("summary written to %s\n", (dir / "summary.csv").c_str());

  const double viol_a = max_constraint_violation(a.model, a.mpc, trace_a);
  const double viol_b = max_constraint_violation(b.model, b.mpc, trace_b);
  std::printf("worst constraint violation: %s %.3e, %s %.3e\n", a.label.c_str(), viol_a,
              b.label.c_str(), viol_b);
  return 0;
}

int run_validate(const std::string& config_path) {
  const ScenarioConfig config = load_config(config_path);
  const BuiltScenario scenario = build_scenario(config);

  const HydraulicReport report = validate_hydraulics(scenario.thermal_network);
  std::printf("hydraulics: max mass-balance residual %.3e m^3/s\n",
              report.max_abs_residual_m3s);
  for (int e = 0; e < report.edge_pressure_drop_pa.size(); ++e) {
    std::printf("  edge %d pressure drop %12.1f Pa\n", e, report.edge_pressure_drop_pa[e]);
  }

  // Uniform ambient temperature with no injections must be a fixed point.
  const EtmgModel& model = scenario.model;
  Eigen::VectorXd x = scenario.initial_state;
  x.tail(model.dims.n_thermal_states()).setConstant(config.ambient_c);
  Eigen::VectorXd d_t = Eigen::VectorXd::Zero(model.dims.n_thermal_dist());
  d_t[model.dims.n_thermal_dist() - 1] = config.ambient_c;
  const Eigen::VectorXd next =
      model.advance(x, Eigen::VectorXd::Zero(model.dims.n_controls()), d_t);
  const double drift = (next - x).cwiseAbs().maxCoeff();
  std::printf("ambient equilibrium drift per step: %.3e degC\n", drift);

  // Line flows of unit injection pairs must satisfy nodal conservation.
  const Eigen::MatrixXd incidence = build_incidence(scenario.electrical_network.graph());
  double worst = 0.0;
  for (int node = 1; node < model.dims.n_elec_nodes; ++node) {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(model.dims.n_elec_nodes);
    p[0] = 1.0;
    p[node] = -1.0;
    const Eigen::VectorXd flows = model.ptdf.matrix * p;
    worst = std::max(worst, (incidence * flows - p).cwiseAbs().maxCoeff());
  }
  std::printf("power-flow conservation residual: %.3e\n", worst);

  if (report.max_abs_residual_m3s > 1e-9 || drift > 1e-9 || worst > 1e-9) {
    std::fprintf(stderr, "validation checks failed\n");
    return 2;
  }
  std::printf("validation passed for '%s'\n", scenario.label.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Electro-thermal microgrid simulator and predictive operation controller"};
  app.require_subcommand(1);

  std::string config_path, profiles_path, out_path;
  std::string config_a, config_b, out_dir;

  CLI::App* simulate = app.add_subcommand("simulate", "Run one closed-loop scenario");
  simulate->add_option("--config", config_path, "Scenario configuration file")->required();
  simulate->add_option("--profiles", profiles_path, "Profile CSV overriding the configured source");
  simulate->add_option("--out", out_path, "Output trace CSV")->required();

  CLI::App* compare = app.add_subcommand("compare", "Run two scenarios on the same profiles");
  compare->add_option("--config-a", config_a, "First scenario configuration")->required();
  compare->add_option("--config-b", config_b, "Second scenario configuration")->required();
  compare->add_option("--profiles", profiles_path, "Profile CSV overriding both sources");
  compare->add_option("--out", out_dir, "Output directory")->required();

  CLI::App* validate = app.add_subcommand("validate", "Check a configuration without simulating");
  validate->add_option("--config", config_path, "Scenario configuration file")->required();

  try {
    app.parse(argc, argv);
    if (simulate->parsed()) return run_simulate(config_path, profiles_path, out_path);
    if (compare->parsed()) return run_compare(config_a, config_b, profiles_path, out_dir);
    if (validate->parsed()) return run_validate(config_path);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const etmg::InfeasibleError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const etmg::SolverError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const etmg::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
