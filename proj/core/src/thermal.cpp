#include "etmg/thermal.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "etmg/errors.hpp"

namespace etmg {

ThermalNetwork::ThermalNetwork(DirectedGraph graph, std::vector<ThermalEdge> edges,
                               std::vector<ThermalNode> nodes, Fluid fluid, double ambient_c)
    : graph_(std::move(graph)),
      edges_(std::move(edges)),
      nodes_(std::move(nodes)),
      fluid_(fluid),
      ambient_c_(ambient_c) {
  if (static_cast<int>(edges_.size()) != graph_.edge_count()) {
    throw ConfigError("thermal edge data does not match the graph edge count");
  }
  if (static_cast<int>(nodes_.size()) != graph_.node_count()) {
    throw ConfigError("thermal node data does not match the graph node count");
  }
  if (fluid_.density_kg_m3 <= 0.0 || fluid_.heat_capacity_j_kg_k <= 0.0) {
    throw ConfigError("fluid density and heat capacity must be positive");
  }
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    const ThermalEdge& e = edges_[i];
    std::ostringstream msg;
    if (e.volume_m3 <= 0.0) {
      msg << "thermal edge " << i << " must have positive volume";
      throw ConfigError(msg.str());
    }
    if (e.flow_m3s <= 0.0) {
      msg << "thermal edge " << i
          << " has non-positive flow; orientation must be aligned with the flow";
      throw ConfigError(msg.str());
    }
    if (e.loss_w_per_k < 0.0) {
      msg << "thermal edge " << i << " has a negative loss coefficient";
      throw ConfigError(msg.str());
    }
    if (e.hydraulics.length_m <= 0.0 || e.hydraulics.friction < 0.0 ||
        e.hydraulics.pump_pressure_pa < 0.0) {
      msg << "thermal edge " << i << " has invalid hydraulic parameters";
      throw ConfigError(msg.str());
    }
  }
  for (std::size_t l = 0; l < nodes_.size(); ++l) {
    const ThermalNode& n = nodes_[l];
    if (n.kind == ThermalNodeKind::Storage && n.volume_m3 <= 0.0) {
      std::ostringstream msg;
      msg << "storage node " << l << " must have positive volume";
      throw ConfigError(msg.str());
    }
    if (n.kind == ThermalNodeKind::Crossing && n.volume_m3 != 0.0) {
      std::ostringstream msg;
      msg << "crossing node " << l << " must have zero volume";
      throw ConfigError(msg.str());
    }
  }
}

std::vector<int> ThermalNetwork::storage_nodes() const {
  std::vector<int> out;
  for (int l = 0; l < graph_.node_count(); ++l) {
    if (is_storage(l)) out.push_back(l);
  }
  return out;
}

HydraulicReport validate_hydraulics(const ThermalNetwork& net, double tol) {
  const DirectedGraph& g = net.graph();
  HydraulicReport report;
  report.node_mass_residual_m3s = Eigen::VectorXd::Zero(g.node_count());
  report.edge_pressure_drop_pa = Eigen::VectorXd::Zero(g.edge_count());

  for (int j = 0; j < g.edge_count(); ++j) {
    const ThermalEdge& e = net.edges()[j];
    report.node_mass_residual_m3s[g.sink(j)] += e.flow_m3s;
    report.node_mass_residual_m3s[g.source(j)] -= e.flow_m3s;
    const double q = e.flow_m3s;
    report.edge_pressure_drop_pa[j] =
        e.hydraulics.length_m * (-e.hydraulics.friction * net.fluid().density_kg_m3 *
                                     std::abs(q) * q +
                                 e.hydraulics.pump_pressure_pa);
  }
  report.max_abs_residual_m3s = report.node_mass_residual_m3s.cwiseAbs().maxCoeff();

  for (int l = 0; l < g.node_count(); ++l) {
    if (std::abs(report.node_mass_residual_m3s[l]) > tol) {
      std::ostringstream msg;
      msg << "mass balance violated at node " << l << ": residual "
          << report.node_mass_residual_m3s[l] << " m^3/s";
      throw ConfigError(msg.str());
    }
  }
  return report;
}

double edge_heat_loss(double edge_c, double ambient_c, double loss_w_per_k) {
  if (loss_w_per_k < 0.0) {
    throw std::invalid_argument("loss coefficient must be nonnegative");
  }
  return loss_w_per_k * (edge_c - ambient_c);
}

CaseStudyCalibration calibrate_case_study(double nominal_heat_w, double supply_c,
                                          double spread_k, double loss_fraction,
                                          double pipe_length_m, double pipe_diameter_m,
                                          const Fluid& fluid, double ambient_c) {
  if (nominal_heat_w <= 0.0 || pipe_length_m <= 0.0 || pipe_diameter_m <= 0.0 ||
      loss_fraction < 0.0) {
    throw ConfigError("calibration inputs must be positive");
  }
  if (spread_k == 0.0) {
    throw ConfigError("calibration spread must be nonzero");
  }
  if (supply_c == ambient_c) {
    throw ConfigError("calibration supply temperature equals the ambient temperature");
  }
  CaseStudyCalibration out;
  out.flow_m3s = nominal_heat_w / (fluid.volumetric_heat_capacity() * spread_k);
  out.loss_w_per_k = loss_fraction * nominal_heat_w / (supply_c - ambient_c);
  const double radius = 0.5 * pipe_diameter_m;
  out.pipe_volume_m3 = std::numbers::pi * radius * radius * pipe_length_m;
  return out;
}

ContinuousThermalModel assemble_continuous_thermal(const ThermalNetwork& net,
                                                   const std::vector<int>& hp_edges,
                                                   const std::vector<int>& demand_edges) {
  validate_hydraulics(net);

  const DirectedGraph& g = net.graph();
  const int n_e = g.edge_count();
  const double rho_c = net.fluid().volumetric_heat_capacity();

  auto check_role = [&](const std::vector<int>& ids, ThermalEdgeKind kind, const char* label) {
    for (int id : ids) {
      if (id < 0 || id >= n_e) {
        std::ostringstream msg;
        msg << label << " edge id " << id << " out of range";
        throw ConfigError(msg.str());
      }
      if (net.edges()[id].kind != kind) {
        std::ostringstream msg;
        msg << "edge " << id << " is not a " << label << " heat exchanger";
        throw ConfigError(msg.str());
      }
    }
  };
  check_role(hp_edges, ThermalEdgeKind::HeatPumpExchanger, "heat pump");
  check_role(demand_edges, ThermalEdgeKind::ConsumerExchanger, "consumer");
  for (int id : hp_edges) {
    if (std::find(demand_edges.begin(), demand_edges.end(), id) != demand_edges.end()) {
      std::ostringstream msg;
      msg << "edge " << id << " assigned both heat pump and consumer roles";
      throw ConfigError(msg.str());
    }
  }

  // Crossings are eliminated by one level of perfect mixing; an edge joining
  // two crossings would require composing eliminations and is rejected.
  for (int j = 0; j < n_e; ++j) {
    if (!net.is_storage(g.source(j)) && !net.is_storage(g.sink(j))) {
      std::ostringstream msg;
      msg << "edge " << j << " connects crossing " << g.source(j) << " to crossing "
          << g.sink(j) << "; cascaded crossings are not supported";
      throw ConfigError(msg.str());
    }
  }
  for (int l = 0; l < g.node_count(); ++l) {
    if (net.is_storage(l)) continue;
    const auto [incoming, outgoing] = in_out_edge_sets(g, l);
    if (incoming.empty() || outgoing.empty()) {
      std::ostringstream msg;
      msg << "crossing node " << l << " must have at least one inflow and one outflow";
      throw ConfigError(msg.str());
    }
  }

  const std::vector<int> storages = net.storage_nodes();
  const int n_s = static_cast<int>(storages.size());
  const int n_x = n_e + n_s;

  Eigen::VectorXd flow(n_e);
  for (int j = 0; j < n_e; ++j) flow[j] = net.edges()[j].flow_m3s;

  // Edge-to-edge coupling through crossings, plus the per-edge decay.
  Eigen::MatrixXd edge_coupling = Eigen::MatrixXd::Zero(n_e, n_e);
  for (int i = 0; i < n_e; ++i) {
    const ThermalEdge& e = net.edges()[i];
    edge_coupling(i, i) = -flow[i] - e.loss_w_per_k / rho_c;
    const int l = g.source(i);
    if (net.is_storage(l)) continue;
    const auto [incoming, outgoing] = in_out_edge_sets(g, l);
    double total_out = 0.0;
    for (int o : outgoing) total_out += flow[o];
    if (total_out <= 0.0) {
      std::ostringstream msg;
      msg << "crossing node " << l << " has zero total outflow";
      throw ConfigError(msg.str());
    }
    for (int j : incoming) {
      edge_coupling(i, j) += flow[i] * flow[j] / total_out;
    }
  }

  // Incidence restricted to storage rows, split by orientation.
  const Eigen::MatrixXd F = build_incidence(g);
  const auto [F_plus, F_minus] = split_incidence(F);
  Eigen::MatrixXd Fs_plus(n_s, n_e);
  Eigen::MatrixXd Fs_minus(n_s, n_e);
  for (int s = 0; s < n_s; ++s) {
    Fs_plus.row(s) = F_plus.row(storages[s]);
    Fs_minus.row(s) = F_minus.row(storages[s]);
  }

  Eigen::MatrixXd blocks(n_x, n_x);
  blocks.topLeftCorner(n_e, n_e) = edge_coupling;
  blocks.topRightCorner(n_e, n_s) = flow.asDiagonal() * Fs_minus.transpose();
  blocks.bottomLeftCorner(n_s, n_e) = Fs_plus * flow.asDiagonal();
  blocks.bottomRightCorner(n_s, n_s) =
      Eigen::MatrixXd((Fs_plus * flow).asDiagonal()) * -1.0;

  Eigen::VectorXd inertia(n_x);
  for (int j = 0; j < n_e; ++j) inertia[j] = rho_c * net.edges()[j].volume_m3;
  for (int s = 0; s < n_s; ++s) inertia[n_e + s] = rho_c * net.nodes()[storages[s]].volume_m3;

  ContinuousThermalModel model;
  model.A = rho_c * inertia.cwiseInverse().asDiagonal() * blocks;
  model.B = Eigen::MatrixXd::Zero(n_x, static_cast<int>(hp_edges.size()));
  for (std::size_t c = 0; c < hp_edges.size(); ++c) {
    model.B(hp_edges[c], static_cast<int>(c)) = 1.0 / inertia[hp_edges[c]];
  }
  model.E = Eigen::MatrixXd::Zero(n_x, static_cast<int>(demand_edges.size()) + 1);
  for (std::size_t c = 0; c < demand_edges.size(); ++c) {
    model.E(demand_edges[c], static_cast<int>(c)) = 1.0 / inertia[demand_edges[c]];
  }
  for (int j = 0; j < n_e; ++j) {
    model.E(j, static_cast<int>(demand_edges.size())) = net.edges()[j].loss_w_per_k / inertia[j];
  }
  model.edge_count = n_e;
  model.storage_count = n_s;
  model.storage_nodes = storages;
  model.hp_edges = hp_edges;
  model.demand_edges = demand_edges;
  model.inertia_j_per_k = inertia;
  return model;
}

std::pair<Eigen::VectorXd, double> steady_state_with_pinned_temperature(
    const ContinuousThermalModel& model, const Eigen::VectorXd& disturbance,
    int pin_index, double pin_value) {
  if (model.B.cols() != 1) {
    throw ConfigError("steady-state pinning requires exactly one heat-pump input");
  }
  if (disturbance.size() != model.E.cols()) {
    throw ConfigError("steady-state disturbance has the wrong dimension");
  }
  const int n = model.state_count();
  if (pin_index < 0 || pin_index >= n) {
    throw ConfigError("steady-state pin index out of range");
  }

  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + 1, n + 1);
  K.topLeftCorner(n, n) = model.A;
  K.topRightCorner(n, 1) = model.B;
  K(n, pin_index) = 1.0;
  Eigen::VectorXd rhs(n + 1);
  rhs.head(n) = -model.E * disturbance;
  rhs[n] = pin_value;

  Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
  if (!lu.isInvertible()) {
    throw ConfigError("steady-state system is singular; cannot pin the requested state");
  }
  const Eigen::VectorXd sol = lu.solve(rhs);
  return {sol.head(n), sol[n]};
}

}  // namespace etmg
