#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "etmg/coupling.hpp"
#include "etmg/mpc.hpp"
#include "etmg/profiles.hpp"

namespace etmg {

/// Nominal operating point from which pipe flow, loss coefficient and
/// volume are derived for edges that do not state them explicitly.
struct CalibrationSpec {
  double nominal_heat_w = 3e6;
  double supply_temperature_c = 90.0;
  double spread_k = 30.0;
  double loss_fraction = 0.05;
  double pipe_length_m = 5000.0;
  double pipe_diameter_m = 0.1;
};

struct ThermalNodeSpec {
  std::string kind;  // "storage" | "crossing"
  double volume_m3 = 0.0;
};

struct ThermalEdgeSpec {
  int from = 0;
  int to = 0;
  std::string kind;  // "simple_pipe" | "consumer_exchanger" | "heat_pump_exchanger"
  std::optional<double> volume_m3;
  std::optional<double> flow_m3s;
  std::optional<double> loss_w_per_k;
  std::optional<double> length_m;
  std::optional<double> friction;
  std::optional<double> pump_pressure_pa;
};

struct ElectricalNodeSpec {
  std::string role;  // "pcc" | "ess" | "heat_pump" | "res" | "load"
  std::optional<double> capacity_mwh;
};

struct ElectricalLineSpec {
  int from = 0;
  int to = 0;
  double weight = 1.0;
};

struct HeatPumpSpec {
  int electrical_node = 0;
  int thermal_edge = 0;
  double cop = 3.0;
};

/// Thermal state reference: an edge temperature or a storage-node
/// temperature.
struct ThermalStateRef {
  std::string kind;  // "edge" | "node"
  int id = 0;
};

struct TrackedTemperatureSpec {
  ThermalStateRef state;
  double target_c = 90.0;
  double weight = 0.0;
};

struct MpcSpec {
  int horizon = 96;
  std::vector<TrackedTemperatureSpec> tracked;
  double grid_weight = 0.0;
  std::vector<double> ess_weights;
  std::vector<double> hp_weights;
  std::vector<double> hp_deviation_weights;
  std::vector<double> hp_move_weights;
  std::vector<double> hp_best_point_mw;
  double qp_tolerance = 1e-6;
  int qp_max_iterations = 20000;
};

struct BoundsSpec {
  double temperature_upper_c = 95.0;
  double temperature_lower_c = 55.0;
  double heated_lower_c = 90.0;
  std::vector<ThermalStateRef> heated;
  double line_mw = 1.2;
  double grid_mw = 1.2;
  double ess_mw = 1.2;
  double hp_lower_mw = -1.0;
  double hp_upper_mw = 0.0;
};

struct InitialSpec {
  std::vector<double> ess_mwh;
  std::string thermal_mode = "steady_supply";  // or "explicit"
  int pin_edge = 0;
  double pin_temperature_c = 90.0;
  std::vector<double> thermal_c;  // for "explicit"
  std::vector<double> hp_mw;      // previous heat-pump power at the first step
};

struct ProfileSourceSpec {
  std::string source = "synthesize";  // or "csv"
  ProfileParams synth;
  std::string csv_path;
};

struct ScenarioConfig {
  int schema_version = 1;
  std::string label;
  double timestep_minutes = 15.0;
  int simulation_steps = 96;
  Fluid fluid;
  double ambient_c = 10.0;
  std::optional<CalibrationSpec> calibration;
  std::vector<ThermalNodeSpec> thermal_nodes;
  std::vector<ThermalEdgeSpec> thermal_edges;
  std::vector<ElectricalNodeSpec> electrical_nodes;
  std::vector<ElectricalLineSpec> electrical_lines;
  std::vector<HeatPumpSpec> heat_pumps;
  MpcSpec mpc;
  BoundsSpec bounds;
  InitialSpec initial;
  ProfileSourceSpec profiles;
};

nlohmann::json config_to_json(const ScenarioConfig& config);
ScenarioConfig config_from_json(const nlohmann::json& j);
ScenarioConfig load_config(const std::filesystem::path& path);
void write_config(const ScenarioConfig& config, const std::filesystem::path& path);

/// Everything a closed-loop run needs, assembled from a configuration.
struct BuiltScenario {
  std::string label;
  ThermalNetwork thermal_network;
  ContinuousThermalModel thermal_model;
  ElectricalNetwork electrical_network;
  EtmgModel model;
  MpcConfig mpc;
  ProfileSet profiles;
  Forecast forecast;
  Eigen::VectorXd initial_state;
  Eigen::VectorXd initial_hp_mw;
  int simulation_steps = 0;
};

/// Validates referential integrity, assembles the networks and the combined
/// model, resolves bounds and the initial state. `profile_override`, when
/// given, replaces the configured profile source (the CLI --profiles flag).
BuiltScenario build_scenario(const ScenarioConfig& config,
                             const std::optional<ProfileSet>& profile_override = std::nullopt);

SimulationTrace run_scenario(const BuiltScenario& scenario);

/// Trace CSV: header `k,u_et,u_es,u_ehp,x_e,T_e1,...,cost_lt,cost_ect,
/// cost_ecs,cost_echp,cost_lhp` with unit columns numbered when a group has
/// more than one member. Full double precision, byte-identical for
/// identical runs.
void write_trace(const SimulationTrace& trace, const EtmgDims& dims,
                 const std::filesystem::path& path);

/// Closed-loop summary figures used by the scenario comparison.
struct RunMetrics {
  double grid_energy_mwh = 0.0;
  double peak_ess_mw = 0.0;
  double peak_hp_mw = 0.0;
  double hp_variance_mw2 = 0.0;
  double ess_capacity_used_mwh = 0.0;
  double total_cost = 0.0;
};

RunMetrics compute_metrics(const SimulationTrace& trace, const EtmgDims& dims, double dt_h);

void write_comparison_summary(const RunMetrics& a, const RunMetrics& b,
                              const std::string& label_a, const std::string& label_b,
                              const std::filesystem::path& path);

}  // namespace etmg
