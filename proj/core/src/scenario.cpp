#include "etmg/scenario.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "etmg/errors.hpp"

namespace etmg {

using nlohmann::json;

namespace {

std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

[[noreturn]] void fail(const std::string& context, const std::string& what) {
  throw ConfigError(context + ": " + what);
}

const json& member(const json& j, const char* key, const std::string& context) {
  const auto it = j.find(key);
  if (it == j.end()) fail(context, std::string("missing field '") + key + "'");
  return *it;
}

template <typename T>
T get(const json& j, const char* key, const std::string& context) {
  try {
    return member(j, key, context).get<T>();
  } catch (const json::exception& e) {
    fail(context, std::string("field '") + key + "': " + e.what());
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  const auto it = j.find(key);
  if (it == j.end()) return fallback;
  return it->get<T>();
}

json ref_to_json(const ThermalStateRef& r) { return json{{r.kind, r.id}}; }

ThermalStateRef ref_from_json(const json& j, const std::string& context) {
  ThermalStateRef r;
  if (j.contains("edge")) {
    r.kind = "edge";
    r.id = get<int>(j, "edge", context);
  } else if (j.contains("node")) {
    r.kind = "node";
    r.id = get<int>(j, "node", context);
  } else {
    fail(context, "thermal state reference needs an 'edge' or 'node' id");
  }
  return r;
}

}  // namespace

json config_to_json(const ScenarioConfig& c) {
  json j;
  j["schema_version"] = c.schema_version;
  j["label"] = c.label;
  j["timestep_minutes"] = c.timestep_minutes;
  j["simulation_steps"] = c.simulation_steps;
  j["fluid"] = {{"density_kg_m3", c.fluid.density_kg_m3},
                {"heat_capacity_j_kg_k", c.fluid.heat_capacity_j_kg_k}};
  j["ambient_c"] = c.ambient_c;
  if (c.calibration) {
    j["calibration"] = {{"nominal_heat_w", c.calibration->nominal_heat_w},
                        {"supply_temperature_c", c.calibration->supply_temperature_c},
                        {"spread_k", c.calibration->spread_k},
                        {"loss_fraction", c.calibration->loss_fraction},
                        {"pipe_length_m", c.calibration->pipe_length_m},
                        {"pipe_diameter_m", c.calibration->pipe_diameter_m}};
  }
  j["thermal_nodes"] = json::array();
  for (const auto& n : c.thermal_nodes) {
    json node{{"kind", n.kind}};
    if (n.kind == "storage") node["volume_m3"] = n.volume_m3;
    j["thermal_nodes"].push_back(node);
  }
  j["thermal_edges"] = json::array();
  for (const auto& e : c.thermal_edges) {
    json edge{{"from", e.from}, {"to", e.to}, {"kind", e.kind}};
    if (e.volume_m3) edge["volume_m3"] = *e.volume_m3;
    if (e.flow_m3s) edge["flow_m3s"] = *e.flow_m3s;
    if (e.loss_w_per_k) edge["loss_w_per_k"] = *e.loss_w_per_k;
    if (e.length_m) edge["length_m"] = *e.length_m;
    if (e.friction) edge["friction"] = *e.friction;
    if (e.pump_pressure_pa) edge["pump_pressure_pa"] = *e.pump_pressure_pa;
    j["thermal_edges"].push_back(edge);
  }
  j["electrical_nodes"] = json::array();
  for (const auto& n : c.electrical_nodes) {
    json node{{"role", n.role}};
    if (n.capacity_mwh) node["capacity_mwh"] = *n.capacity_mwh;
    j["electrical_nodes"].push_back(node);
  }
  j["electrical_lines"] = json::array();
  for (const auto& l : c.electrical_lines) {
    j["electrical_lines"].push_back({{"from", l.from}, {"to", l.to}, {"weight", l.weight}});
  }
  j["heat_pumps"] = json::array();
  for (const auto& hp : c.heat_pumps) {
    j["heat_pumps"].push_back({{"electrical_node", hp.electrical_node},
                               {"thermal_edge", hp.thermal_edge},
                               {"cop", hp.cop}});
  }
  json mpc;
  mpc["horizon"] = c.mpc.horizon;
  mpc["tracked"] = json::array();
  for (const auto& t : c.mpc.tracked) {
    json tracked = ref_to_json(t.state);
    tracked["target_c"] = t.target_c;
    tracked["weight"] = t.weight;
    mpc["tracked"].push_back(tracked);
  }
  mpc["grid_weight"] = c.mpc.grid_weight;
  mpc["ess_weights"] = c.mpc.ess_weights;
  mpc["hp_weights"] = c.mpc.hp_weights;
  mpc["hp_deviation_weights"] = c.mpc.hp_deviation_weights;
  mpc["hp_move_weights"] = c.mpc.hp_move_weights;
  mpc["hp_best_point_mw"] = c.mpc.hp_best_point_mw;
  mpc["qp_tolerance"] = c.mpc.qp_tolerance;
  mpc["qp_max_iterations"] = c.mpc.qp_max_iterations;
  j["mpc"] = mpc;

  json bounds;
  bounds["temperature_upper_c"] = c.bounds.temperature_upper_c;
  bounds["temperature_lower_c"] = c.bounds.temperature_lower_c;
  bounds["heated_lower_c"] = c.bounds.heated_lower_c;
  bounds["heated"] = json::array();
  for (const auto& h : c.bounds.heated) bounds["heated"].push_back(ref_to_json(h));
  bounds["line_mw"] = c.bounds.line_mw;
  bounds["grid_mw"] = c.bounds.grid_mw;
  bounds["ess_mw"] = c.bounds.ess_mw;
  bounds["hp_lower_mw"] = c.bounds.hp_lower_mw;
  bounds["hp_upper_mw"] = c.bounds.hp_upper_mw;
  j["bounds"] = bounds;

  json initial;
  initial["ess_mwh"] = c.initial.ess_mwh;
  initial["thermal_mode"] = c.initial.thermal_mode;
  if (c.initial.thermal_mode == "steady_supply") {
    initial["pin_edge"] = c.initial.pin_edge;
    initial["pin_temperature_c"] = c.initial.pin_temperature_c;
  } else {
    initial["thermal_c"] = c.initial.thermal_c;
  }
  if (!c.initial.hp_mw.empty()) initial["hp_mw"] = c.initial.hp_mw;
  j["initial"] = initial;

  json profiles;
  profiles["source"] = c.profiles.source;
  if (c.profiles.source == "synthesize") {
    const ProfileParams& p = c.profiles.synth;
    json synth;
    synth["solar_peak_mw"] = p.solar_peak_mw;
    synth["solar_center_h"] = p.solar_center_h;
    synth["solar_halfwidth_h"] = p.solar_halfwidth_h;
    synth["load_base_mw"] = p.load_base_mw;
    synth["load_peaks"] = json::array();
    for (const auto& pk : p.load_peaks) {
      synth["load_peaks"].push_back({{"amplitude_mw", pk.amplitude_mw},
                                     {"center_h", pk.center_h},
                                     {"sigma_h", pk.sigma_h}});
    }
    synth["heat_base_mw"] = p.heat_base_mw;
    synth["heat_peaks"] = json::array();
    for (const auto& pk : p.heat_peaks) {
      synth["heat_peaks"].push_back({{"amplitude_mw", pk.amplitude_mw},
                                     {"center_h", pk.center_h},
                                     {"sigma_h", pk.sigma_h}});
    }
    profiles["synth"] = synth;
  } else {
    profiles["csv_path"] = c.profiles.csv_path;
  }
  j["profiles"] = profiles;
  return j;
}

namespace {

std::vector<ProfilePeak> peaks_from_json(const json& arr, const std::string& context) {
  std::vector<ProfilePeak> out;
  for (const auto& p : arr) {
    ProfilePeak peak;
    peak.amplitude_mw = get<double>(p, "amplitude_mw", context);
    peak.center_h = get<double>(p, "center_h", context);
    peak.sigma_h = get<double>(p, "sigma_h", context);
    out.push_back(peak);
  }
  return out;
}

}  // namespace

ScenarioConfig config_from_json(const json& j) {
  const std::string ctx = "scenario config";
  ScenarioConfig c;
  c.schema_version = get<int>(j, "schema_version", ctx);
  if (c.schema_version != 1) {
    fail(ctx, "unsupported schema_version " + std::to_string(c.schema_version));
  }
  c.label = get<std::string>(j, "label", ctx);
  c.timestep_minutes = get<double>(j, "timestep_minutes", ctx);
  c.simulation_steps = get<int>(j, "simulation_steps", ctx);
  const json& fluid = member(j, "fluid", ctx);
  c.fluid.density_kg_m3 = get<double>(fluid, "density_kg_m3", "fluid");
  c.fluid.heat_capacity_j_kg_k = get<double>(fluid, "heat_capacity_j_kg_k", "fluid");
  c.ambient_c = get<double>(j, "ambient_c", ctx);

  if (j.contains("calibration")) {
    const json& cal = j["calibration"];
    CalibrationSpec spec;
    spec.nominal_heat_w = get<double>(cal, "nominal_heat_w", "calibration");
    spec.supply_temperature_c = get<double>(cal, "supply_temperature_c", "calibration");
    spec.spread_k = get<double>(cal, "spread_k", "calibration");
    spec.loss_fraction = get<double>(cal, "loss_fraction", "calibration");
    spec.pipe_length_m = get<double>(cal, "pipe_length_m", "calibration");
    spec.pipe_diameter_m = get<double>(cal, "pipe_diameter_m", "calibration");
    c.calibration = spec;
  }

  for (const auto& n : member(j, "thermal_nodes", ctx)) {
    ThermalNodeSpec spec;
    spec.kind = get<std::string>(n, "kind", "thermal_nodes");
    spec.volume_m3 = get_or<double>(n, "volume_m3", 0.0);
    c.thermal_nodes.push_back(spec);
  }
  for (const auto& e : member(j, "thermal_edges", ctx)) {
    ThermalEdgeSpec spec;
    spec.from = get<int>(e, "from", "thermal_edges");
    spec.to = get<int>(e, "to", "thermal_edges");
    spec.kind = get<std::string>(e, "kind", "thermal_edges");
    if (e.contains("volume_m3")) spec.volume_m3 = e["volume_m3"].get<double>();
    if (e.contains("flow_m3s")) spec.flow_m3s = e["flow_m3s"].get<double>();
    if (e.contains("loss_w_per_k")) spec.loss_w_per_k = e["loss_w_per_k"].get<double>();
    if (e.contains("length_m")) spec.length_m = e["length_m"].get<double>();
    if (e.contains("friction")) spec.friction = e["friction"].get<double>();
    if (e.contains("pump_pressure_pa")) spec.pump_pressure_pa = e["pump_pressure_pa"].get<double>();
    c.thermal_edges.push_back(spec);
  }
  for (const auto& n : member(j, "electrical_nodes", ctx)) {
    ElectricalNodeSpec spec;
    spec.role = get<std::string>(n, "role", "electrical_nodes");
    if (n.contains("capacity_mwh")) spec.capacity_mwh = n["capacity_mwh"].get<double>();
    c.electrical_nodes.push_back(spec);
  }
  for (const auto& l : member(j, "electrical_lines", ctx)) {
    ElectricalLineSpec spec;
    spec.from = get<int>(l, "from", "electrical_lines");
    spec.to = get<int>(l, "to", "electrical_lines");
    spec.weight = get<double>(l, "weight", "electrical_lines");
    c.electrical_lines.push_back(spec);
  }
  for (const auto& hp : member(j, "heat_pumps", ctx)) {
    HeatPumpSpec spec;
    spec.electrical_node = get<int>(hp, "electrical_node", "heat_pumps");
    spec.thermal_edge = get<int>(hp, "thermal_edge", "heat_pumps");
    spec.cop = get<double>(hp, "cop", "heat_pumps");
    c.heat_pumps.push_back(spec);
  }

  const json& mpc = member(j, "mpc", ctx);
  c.mpc.horizon = get<int>(mpc, "horizon", "mpc");
  for (const auto& t : get_or<json>(mpc, "tracked", json::array())) {
    TrackedTemperatureSpec spec;
    spec.state = ref_from_json(t, "mpc.tracked");
    spec.target_c = get<double>(t, "target_c", "mpc.tracked");
    spec.weight = get<double>(t, "weight", "mpc.tracked");
    c.mpc.tracked.push_back(spec);
  }
  c.mpc.grid_weight = get<double>(mpc, "grid_weight", "mpc");
  c.mpc.ess_weights = get<std::vector<double>>(mpc, "ess_weights", "mpc");
  c.mpc.hp_weights = get<std::vector<double>>(mpc, "hp_weights", "mpc");
  c.mpc.hp_deviation_weights = get<std::vector<double>>(mpc, "hp_deviation_weights", "mpc");
  c.mpc.hp_move_weights = get<std::vector<double>>(mpc, "hp_move_weights", "mpc");
  c.mpc.hp_best_point_mw = get<std::vector<double>>(mpc, "hp_best_point_mw", "mpc");
  c.mpc.qp_tolerance = get_or<double>(mpc, "qp_tolerance", 1e-6);
  c.mpc.qp_max_iterations = get_or<int>(mpc, "qp_max_iterations", 20000);

  const json& bounds = member(j, "bounds", ctx);
  c.bounds.temperature_upper_c = get<double>(bounds, "temperature_upper_c", "bounds");
  c.bounds.temperature_lower_c = get<double>(bounds, "temperature_lower_c", "bounds");
  c.bounds.heated_lower_c = get<double>(bounds, "heated_lower_c", "bounds");
  for (const auto& h : get_or<json>(bounds, "heated", json::array())) {
    c.bounds.heated.push_back(ref_from_json(h, "bounds.heated"));
  }
  c.bounds.line_mw = get<double>(bounds, "line_mw", "bounds");
  c.bounds.grid_mw = get<double>(bounds, "grid_mw", "bounds");
  c.bounds.ess_mw = get<double>(bounds, "ess_mw", "bounds");
  c.bounds.hp_lower_mw = get<double>(bounds, "hp_lower_mw", "bounds");
  c.bounds.hp_upper_mw = get<double>(bounds, "hp_upper_mw", "bounds");

  const json& initial = member(j, "initial", ctx);
  c.initial.ess_mwh = get<std::vector<double>>(initial, "ess_mwh", "initial");
  c.initial.thermal_mode = get<std::string>(initial, "thermal_mode", "initial");
  if (c.initial.thermal_mode == "steady_supply") {
    c.initial.pin_edge = get<int>(initial, "pin_edge", "initial");
    c.initial.pin_temperature_c = get<double>(initial, "pin_temperature_c", "initial");
  } else if (c.initial.thermal_mode == "explicit") {
    c.initial.thermal_c = get<std::vector<double>>(initial, "thermal_c", "initial");
  } else {
    fail("initial", "thermal_mode must be 'steady_supply' or 'explicit'");
  }
  c.initial.hp_mw = get_or<std::vector<double>>(initial, "hp_mw", {});

  const json& profiles = member(j, "profiles", ctx);
  c.profiles.source = get<std::string>(profiles, "source", "profiles");
  if (c.profiles.source == "synthesize") {
    const json& synth = member(profiles, "synth", "profiles");
    ProfileParams& p = c.profiles.synth;
    p.solar_peak_mw = get<double>(synth, "solar_peak_mw", "profiles.synth");
    p.solar_center_h = get<double>(synth, "solar_center_h", "profiles.synth");
    p.solar_halfwidth_h = get<double>(synth, "solar_halfwidth_h", "profiles.synth");
    p.load_base_mw = get<double>(synth, "load_base_mw", "profiles.synth");
    p.load_peaks = peaks_from_json(get_or<json>(synth, "load_peaks", json::array()),
                                   "profiles.synth.load_peaks");
    p.heat_base_mw = get<double>(synth, "heat_base_mw", "profiles.synth");
    p.heat_peaks = peaks_from_json(get_or<json>(synth, "heat_peaks", json::array()),
                                   "profiles.synth.heat_peaks");
  } else if (c.profiles.source == "csv") {
    c.profiles.csv_path = get<std::string>(profiles, "csv_path", "profiles");
  } else {
    fail("profiles", "source must be 'synthesize' or 'csv'");
  }
  return c;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void write_config(const ScenarioConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
  out << config_to_json(config).dump(2) << "\n";
}

namespace {

ThermalEdgeKind edge_kind_from_string(const std::string& kind, int edge_id) {
  if (kind == "simple_pipe") return ThermalEdgeKind::SimplePipe;
  if (kind == "consumer_exchanger") return ThermalEdgeKind::ConsumerExchanger;
  if (kind == "heat_pump_exchanger") return ThermalEdgeKind::HeatPumpExchanger;
  throw ConfigError("thermal edge " + std::to_string(edge_id) + ": unknown kind '" + kind + "'");
}

int resolve_thermal_state(const ThermalStateRef& ref, const ContinuousThermalModel& model,
                          const std::string& context) {
  if (ref.kind == "edge") {
    if (ref.id < 0 || ref.id >= model.edge_count) {
      fail(context, "edge id " + std::to_string(ref.id) + " out of range");
    }
    return ref.id;
  }
  if (ref.kind == "node") {
    const auto it =
        std::find(model.storage_nodes.begin(), model.storage_nodes.end(), ref.id);
    if (it == model.storage_nodes.end()) {
      fail(context, "node id " + std::to_string(ref.id) + " is not a storage node");
    }
    return model.edge_count + static_cast<int>(it - model.storage_nodes.begin());
  }
  fail(context, "unknown thermal state kind '" + ref.kind + "'");
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

BuiltScenario build_scenario(const ScenarioConfig& config,
                             const std::optional<ProfileSet>& profile_override) {
  if (config.timestep_minutes <= 0.0) throw ConfigError("timestep must be positive");
  if (config.simulation_steps < 1) throw ConfigError("simulation_steps must be at least 1");
  const double dt_s = config.timestep_minutes * 60.0;

  std::optional<CaseStudyCalibration> calib;
  if (config.calibration) {
    calib = calibrate_case_study(config.calibration->nominal_heat_w,
                                 config.calibration->supply_temperature_c,
                                 config.calibration->spread_k, config.calibration->loss_fraction,
                                 config.calibration->pipe_length_m,
                                 config.calibration->pipe_diameter_m, config.fluid,
                                 config.ambient_c);
  }

  // Thermal network.
  std::vector<ThermalNode> nodes;
  for (std::size_t i = 0; i < config.thermal_nodes.size(); ++i) {
    const ThermalNodeSpec& spec = config.thermal_nodes[i];
    ThermalNode node;
    if (spec.kind == "storage") {
      node.kind = ThermalNodeKind::Storage;
      node.volume_m3 = spec.volume_m3;
    } else if (spec.kind == "crossing") {
      node.kind = ThermalNodeKind::Crossing;
      node.volume_m3 = 0.0;
    } else {
      throw ConfigError("thermal node " + std::to_string(i) + ": unknown kind '" + spec.kind +
                        "'");
    }
    nodes.push_back(node);
  }
  std::vector<std::pair<int, int>> thermal_pairs;
  std::vector<ThermalEdge> edges;
  for (std::size_t i = 0; i < config.thermal_edges.size(); ++i) {
    const ThermalEdgeSpec& spec = config.thermal_edges[i];
    thermal_pairs.emplace_back(spec.from, spec.to);
    ThermalEdge edge;
    edge.kind = edge_kind_from_string(spec.kind, static_cast<int>(i));
    const bool pipe = edge.kind == ThermalEdgeKind::SimplePipe;
    auto require_field = [&](const std::optional<double>& field, double calibrated,
                             bool has_default, const char* name) {
      if (field) return *field;
      if (calib && has_default) return calibrated;
      throw ConfigError("thermal edge " + std::to_string(i) + ": missing '" + name +
                        "' and no calibration block to derive it from");
    };
    edge.volume_m3 =
        require_field(spec.volume_m3, calib ? calib->pipe_volume_m3 : 0.0, pipe, "volume_m3");
    edge.flow_m3s =
        require_field(spec.flow_m3s, calib ? calib->flow_m3s : 0.0, true, "flow_m3s");
    edge.loss_w_per_k = spec.loss_w_per_k
                            ? *spec.loss_w_per_k
                            : (pipe ? require_field(spec.loss_w_per_k,
                                                    calib ? calib->loss_w_per_k : 0.0, true,
                                                    "loss_w_per_k")
                                    : 0.0);
    edge.hydraulics.length_m =
        spec.length_m.value_or(pipe && config.calibration ? config.calibration->pipe_length_m
                                                          : 10.0);
    edge.hydraulics.friction = spec.friction.value_or(0.0);
    edge.hydraulics.pump_pressure_pa = spec.pump_pressure_pa.value_or(0.0);
    edges.push_back(edge);
  }
  ThermalNetwork thermal_network(
      DirectedGraph(static_cast<int>(nodes.size()), thermal_pairs), edges, nodes, config.fluid,
      config.ambient_c);

  // Heat pumps, ordered by electrical node.
  std::vector<HeatPumpSpec> pumps = config.heat_pumps;
  std::sort(pumps.begin(), pumps.end(), [](const HeatPumpSpec& a, const HeatPumpSpec& b) {
    return a.electrical_node < b.electrical_node;
  });
  HeatPumpBank bank;
  bank.cop.resize(static_cast<Eigen::Index>(pumps.size()));
  for (std::size_t i = 0; i < pumps.size(); ++i) {
    bank.cop[static_cast<Eigen::Index>(i)] = pumps[i].cop;
    bank.thermal_edges.push_back(pumps[i].thermal_edge);
    bank.electrical_nodes.push_back(pumps[i].electrical_node);
  }

  std::vector<int> demand_edges;
  for (int e = 0; e < thermal_network.edge_count(); ++e) {
    if (thermal_network.edges()[e].kind == ThermalEdgeKind::ConsumerExchanger) {
      demand_edges.push_back(e);
    }
  }
  ContinuousThermalModel thermal_model =
      assemble_continuous_thermal(thermal_network, bank.thermal_edges, demand_edges);

  // Electrical network.
  std::vector<ElectricalRole> roles;
  std::vector<double> capacities;
  for (std::size_t i = 0; i < config.electrical_nodes.size(); ++i) {
    const ElectricalNodeSpec& spec = config.electrical_nodes[i];
    if (spec.role == "pcc") {
      roles.push_back(ElectricalRole::Pcc);
    } else if (spec.role == "ess") {
      roles.push_back(ElectricalRole::Storage);
      if (!spec.capacity_mwh || *spec.capacity_mwh <= 0.0) {
        throw ConfigError("electrical node " + std::to_string(i) +
                          ": storage units need a positive capacity_mwh");
      }
      capacities.push_back(*spec.capacity_mwh);
    } else if (spec.role == "heat_pump") {
      roles.push_back(ElectricalRole::HeatPump);
    } else if (spec.role == "res") {
      roles.push_back(ElectricalRole::Renewable);
    } else if (spec.role == "load") {
      roles.push_back(ElectricalRole::Load);
    } else {
      throw ConfigError("electrical node " + std::to_string(i) + ": unknown role '" + spec.role +
                        "'");
    }
  }
  std::vector<std::pair<int, int>> line_pairs;
  Eigen::VectorXd weights(static_cast<Eigen::Index>(config.electrical_lines.size()));
  for (std::size_t i = 0; i < config.electrical_lines.size(); ++i) {
    line_pairs.emplace_back(config.electrical_lines[i].from, config.electrical_lines[i].to);
    weights[static_cast<Eigen::Index>(i)] = config.electrical_lines[i].weight;
  }
  ElectricalNetwork electrical_network(
      DirectedGraph(static_cast<int>(roles.size()), line_pairs), weights, roles);

  EtmgModel model = assemble_etmg(thermal_model, electrical_network, bank, dt_s);
  const EtmgDims& dims = model.dims;

  // Profiles and forecast.
  const int needed = config.simulation_steps + config.mpc.horizon;
  ProfileSet profiles;
  if (profile_override) {
    profiles = *profile_override;
  } else if (config.profiles.source == "synthesize") {
    ProfileParams params = config.profiles.synth;
    params.steps = needed;
    params.dt_minutes = config.timestep_minutes;
    profiles = synthesize_profiles(params);
  } else {
    profiles = load_profiles(config.profiles.csv_path);
  }
  if (profiles.steps() < needed) {
    std::ostringstream msg;
    msg << "profiles cover " << profiles.steps() << " steps, need " << needed;
    throw ConfigError(msg.str());
  }
  if (profiles.res_mw.cols() != dims.n_res || profiles.load_mw.cols() != dims.n_load ||
      profiles.heat_mw.cols() != dims.n_demand) {
    throw ConfigError("profile columns do not match the unit counts of the network");
  }
  Forecast forecast = to_forecast(profiles, config.ambient_c);

  // Operation problem configuration.
  MpcConfig mpc;
  mpc.horizon = config.mpc.horizon;
  for (const TrackedTemperatureSpec& t : config.mpc.tracked) {
    mpc.tracked_states.push_back(resolve_thermal_state(t.state, thermal_model, "mpc.tracked"));
  }
  mpc.tracked_weights.resize(static_cast<Eigen::Index>(config.mpc.tracked.size()));
  mpc.tracked_targets.resize(static_cast<Eigen::Index>(config.mpc.tracked.size()));
  for (std::size_t i = 0; i < config.mpc.tracked.size(); ++i) {
    mpc.tracked_weights[static_cast<Eigen::Index>(i)] = config.mpc.tracked[i].weight;
    mpc.tracked_targets[static_cast<Eigen::Index>(i)] = config.mpc.tracked[i].target_c;
  }
  mpc.grid_weight = config.mpc.grid_weight;
  mpc.ess_weights = to_vector(config.mpc.ess_weights);
  mpc.hp_weights = to_vector(config.mpc.hp_weights);
  mpc.hp_deviation_weights = to_vector(config.mpc.hp_deviation_weights);
  mpc.hp_move_weights = to_vector(config.mpc.hp_move_weights);
  mpc.hp_best_point_mw = to_vector(config.mpc.hp_best_point_mw);

  const int n_x = dims.n_states();
  mpc.state_lower.resize(n_x);
  mpc.state_upper.resize(n_x);
  for (int s = 0; s < dims.n_ess; ++s) {
    mpc.state_lower[s] = 0.0;
    mpc.state_upper[s] = capacities[s];
  }
  mpc.state_lower.tail(dims.n_thermal_states()).setConstant(config.bounds.temperature_lower_c);
  mpc.state_upper.tail(dims.n_thermal_states()).setConstant(config.bounds.temperature_upper_c);
  for (const ThermalStateRef& h : config.bounds.heated) {
    const int idx = resolve_thermal_state(h, thermal_model, "bounds.heated");
    mpc.state_lower[dims.n_ess + idx] = config.bounds.heated_lower_c;
  }
  mpc.line_lower = Eigen::VectorXd::Constant(dims.n_elec_lines, -config.bounds.line_mw);
  mpc.line_upper = Eigen::VectorXd::Constant(dims.n_elec_lines, config.bounds.line_mw);
  mpc.control_lower.resize(dims.n_controls());
  mpc.control_upper.resize(dims.n_controls());
  mpc.control_lower[0] = -config.bounds.grid_mw;
  mpc.control_upper[0] = config.bounds.grid_mw;
  mpc.control_lower.segment(1, dims.n_ess).setConstant(-config.bounds.ess_mw);
  mpc.control_upper.segment(1, dims.n_ess).setConstant(config.bounds.ess_mw);
  mpc.control_lower.tail(dims.n_hp).setConstant(config.bounds.hp_lower_mw);
  mpc.control_upper.tail(dims.n_hp).setConstant(config.bounds.hp_upper_mw);
  mpc.qp.tol = config.mpc.qp_tolerance;
  mpc.qp.max_iter = config.mpc.qp_max_iterations;
  mpc.validate(dims);

  // Initial state.
  if (static_cast<int>(config.initial.ess_mwh.size()) != dims.n_ess) {
    throw ConfigError("initial.ess_mwh does not match the number of storage units");
  }
  Eigen::VectorXd x0(n_x);
  x0.head(dims.n_ess) = to_vector(config.initial.ess_mwh);
  if (config.initial.thermal_mode == "steady_supply") {
    const int pin_idx = resolve_thermal_state({"edge", config.initial.pin_edge}, thermal_model,
                                              "initial.pin_edge");
    const auto [x_t, hp_w] = steady_state_with_pinned_temperature(
        thermal_model, forecast.thermal.row(0).transpose(), pin_idx,
        config.initial.pin_temperature_c);
    (void)hp_w;
    x0.tail(dims.n_thermal_states()) = x_t;
  } else {
    if (static_cast<int>(config.initial.thermal_c.size()) != dims.n_thermal_states()) {
      throw ConfigError("initial.thermal_c does not match the thermal state count");
    }
    x0.tail(dims.n_thermal_states()) = to_vector(config.initial.thermal_c);
  }
  Eigen::VectorXd hp0 = mpc.hp_best_point_mw;
  if (!config.initial.hp_mw.empty()) {
    if (static_cast<int>(config.initial.hp_mw.size()) != dims.n_hp) {
      throw ConfigError("initial.hp_mw does not match the number of heat pumps");
    }
    hp0 = to_vector(config.initial.hp_mw);
  }

  return BuiltScenario{config.label,
                       std::move(thermal_network),
                       std::move(thermal_model),
                       std::move(electrical_network),
                       std::move(model),
                       std::move(mpc),
                       std::move(profiles),
                       std::move(forecast),
                       std::move(x0),
                       std::move(hp0),
                       config.simulation_steps};
}

SimulationTrace run_scenario(const BuiltScenario& scenario) {
  return receding_horizon_run(scenario.model, scenario.mpc, scenario.forecast,
                              scenario.simulation_steps, scenario.initial_state,
                              scenario.initial_hp_mw);
}

void write_trace(const SimulationTrace& trace, const EtmgDims& dims,
                 const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open " + path.string() + " for writing");

  std::string header = "k,u_et";
  auto group = [&header](const char* name, int count, bool always_number = false) {
    for (int i = 0; i < count; ++i) {
      header += ',';
      header += name;
      if (count > 1 || always_number) header += std::to_string(i + 1);
    }
  };
  group("u_es", dims.n_ess);
  group("u_ehp", dims.n_hp);
  group("x_e", dims.n_ess);
  group("T_e", dims.n_thermal_edges, true);
  group("T_n", dims.n_thermal_storages, true);
  group("p_ee", dims.n_elec_lines, true);
  header += ",cost_lt,cost_ect,cost_ecs,cost_echp,cost_lhp";
  out << header << "\n";

  for (std::size_t k = 0; k < trace.steps.size(); ++k) {
    const TraceStep& step = trace.steps[k];
    out << k;
    for (int c = 0; c < dims.n_controls(); ++c) out << ',' << format_value(step.control[c]);
    for (int s = 0; s < dims.n_ess; ++s) out << ',' << format_value(step.state[s]);
    for (int t = 0; t < dims.n_thermal_states(); ++t) {
      out << ',' << format_value(step.state[dims.n_ess + t]);
    }
    for (int l = 0; l < dims.n_elec_lines; ++l) {
      out << ',' << format_value(step.line_power_mw[l]);
    }
    out << ',' << format_value(step.costs.temperature);
    out << ',' << format_value(step.costs.grid);
    out << ',' << format_value(step.costs.ess);
    out << ',' << format_value(step.costs.heat_pump_power);
    out << ',' << format_value(step.costs.heat_pump_efficiency);
    out << "\n";
  }
}

RunMetrics compute_metrics(const SimulationTrace& trace, const EtmgDims& dims, double dt_h) {
  RunMetrics m;
  if (trace.steps.empty()) return m;

  double hp_sum = 0.0;
  double hp_sq_sum = 0.0;
  int hp_samples = 0;
  double soc_min = trace.steps.front().state.head(dims.n_ess).sum();
  double soc_max = soc_min;
  for (const TraceStep& step : trace.steps) {
    m.grid_energy_mwh += step.control[0] * dt_h;
    if (dims.n_ess > 0) {
      m.peak_ess_mw =
          std::max(m.peak_ess_mw, step.control.segment(1, dims.n_ess).cwiseAbs().maxCoeff());
      const double soc = step.state.head(dims.n_ess).sum();
      soc_min = std::min(soc_min, soc);
      soc_max = std::max(soc_max, soc);
    }
    for (int h = 0; h < dims.n_hp; ++h) {
      const double u = step.control[1 + dims.n_ess + h];
      m.peak_hp_mw = std::max(m.peak_hp_mw, std::abs(u));
      hp_sum += u;
      hp_sq_sum += u * u;
      ++hp_samples;
    }
    m.total_cost += step.costs.total();
  }
  if (dims.n_ess > 0 && trace.final_state.size() > 0) {
    const double soc = trace.final_state.head(dims.n_ess).sum();
    soc_min = std::min(soc_min, soc);
    soc_max = std::max(soc_max, soc);
  }
  if (hp_samples > 0) {
    const double mean = hp_sum / hp_samples;
    m.hp_variance_mw2 = hp_sq_sum / hp_samples - mean * mean;
  }
  if (dims.n_ess > 0) m.ess_capacity_used_mwh = soc_max - soc_min;
  return m;
}

void write_comparison_summary(const RunMetrics& a, const RunMetrics& b,
                              const std::string& label_a, const std::string& label_b,
                              const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
  out << "metric," << label_a << ',' << label_b << ",change_percent\n";
  auto row = [&out](const char* name, double va, double vb) {
    const double change = std::abs(va) > 1e-12 ? (vb - va) / std::abs(va) * 100.0 : 0.0;
    out << name << ',' << format_value(va) << ',' << format_value(vb) << ','
        << format_value(change) << "\n";
  };
  row("grid_energy_mwh", a.grid_energy_mwh, b.grid_energy_mwh);
  row("peak_ess_mw", a.peak_ess_mw, b.peak_ess_mw);
  row("peak_hp_mw", a.peak_hp_mw, b.peak_hp_mw);
  row("hp_variance_mw2", a.hp_variance_mw2, b.hp_variance_mw2);
  row("ess_capacity_used_mwh", a.ess_capacity_used_mwh, b.ess_capacity_used_mwh);
  row("total_cost", a.total_cost, b.total_cost);
}

}  // namespace etmg
