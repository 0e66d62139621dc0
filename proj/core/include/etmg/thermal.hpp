#pragma once

#include <Eigen/Core>
#include <utility>
#include <vector>

#include "etmg/graph.hpp"

namespace etmg {

enum class ThermalEdgeKind { SimplePipe, HeatPumpExchanger, ConsumerExchanger };
enum class ThermalNodeKind { Storage, Crossing };

/// Steady-state hydraulic description of one edge. The pressure quantities
/// are diagnostic only and never enter the temperature state model.
struct HydraulicParams {
  double length_m = 1.0;
  double friction = 0.0;          // pressure-loss coefficient of the momentum balance
  double pump_pressure_pa = 0.0;  // > 0 only if the edge contains a pump
};

/// Pipe or heat-exchanger edge carrying water at a constant volumetric flow.
/// The stored orientation is aligned with the flow direction, so flow > 0.
struct ThermalEdge {
  ThermalEdgeKind kind = ThermalEdgeKind::SimplePipe;
  double volume_m3 = 0.0;
  double flow_m3s = 0.0;
  double loss_w_per_k = 0.0;
  HydraulicParams hydraulics;
};

struct ThermalNode {
  ThermalNodeKind kind = ThermalNodeKind::Crossing;
  double volume_m3 = 0.0;  // > 0 for storage nodes, 0 for crossings
};

struct Fluid {
  double density_kg_m3 = 987.0;
  double heat_capacity_j_kg_k = 4182.0;

  double volumetric_heat_capacity() const { return density_kg_m3 * heat_capacity_j_kg_k; }
};

/// District-heating network: directed graph plus per-edge and per-node data.
class ThermalNetwork {
 public:
  ThermalNetwork(DirectedGraph graph, std::vector<ThermalEdge> edges,
                 std::vector<ThermalNode> nodes, Fluid fluid, double ambient_c);

  const DirectedGraph& graph() const { return graph_; }
  const std::vector<ThermalEdge>& edges() const { return edges_; }
  const std::vector<ThermalNode>& nodes() const { return nodes_; }
  const Fluid& fluid() const { return fluid_; }
  double ambient_c() const { return ambient_c_; }

  int edge_count() const { return static_cast<int>(edges_.size()); }
  bool is_storage(int node) const { return nodes_[node].kind == ThermalNodeKind::Storage; }
  /// Node ids of the storage units, ascending. Their order fixes the
  /// ordering of the storage temperature states.
  std::vector<int> storage_nodes() const;

 private:
  DirectedGraph graph_;
  std::vector<ThermalEdge> edges_;
  std::vector<ThermalNode> nodes_;
  Fluid fluid_;
  double ambient_c_;
};

/// Mass-balance residuals per node and pressure drops per edge.
struct HydraulicReport {
  Eigen::VectorXd node_mass_residual_m3s;  // inflow minus outflow
  Eigen::VectorXd edge_pressure_drop_pa;
  double max_abs_residual_m3s = 0.0;
};

/// Checks steady-state mass conservation at every node and evaluates the
/// momentum-balance pressure drop per edge. Throws if any node residual
/// exceeds `tol`, naming the node.
HydraulicReport validate_hydraulics(const ThermalNetwork& net, double tol = 1e-9);

/// Heat flow lost to the environment by an edge at temperature `edge_c`.
double edge_heat_loss(double edge_c, double ambient_c, double loss_w_per_k);

/// Flow, loss coefficient and pipe volume matching a nominal operating point:
/// flow moves `nominal_heat_w` across a `spread_k` temperature difference,
/// the loss coefficient dissipates `loss_fraction` of the nominal heat at the
/// supply temperature, and the volume is that of a cylindrical pipe.
struct CaseStudyCalibration {
  double flow_m3s = 0.0;
  double loss_w_per_k = 0.0;
  double pipe_volume_m3 = 0.0;
};

CaseStudyCalibration calibrate_case_study(double nominal_heat_w, double supply_c,
                                          double spread_k, double loss_fraction,
                                          double pipe_length_m, double pipe_diameter_m,
                                          const Fluid& fluid, double ambient_c);

/// Continuous-time model of the thermal layer,
///   d/dt [T_e; T_ns] = A [T_e; T_ns] + B u + E d,
/// with states ordered edge temperatures first, storage temperatures after
/// (storage nodes ascending). u holds the injected heat flows of the heat
/// pump edges (W), d holds the heat flows of the consumer edges (W, negative
/// for extraction) followed by the ambient temperature.
struct ContinuousThermalModel {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd E;
  int edge_count = 0;
  int storage_count = 0;
  std::vector<int> storage_nodes;  // node id per storage state
  std::vector<int> hp_edges;       // edge id per control column
  std::vector<int> demand_edges;   // edge id per disturbance column
  Eigen::VectorXd inertia_j_per_k; // rho*c*V per state, the diagonal of J

  int state_count() const { return edge_count + storage_count; }
};

ContinuousThermalModel assemble_continuous_thermal(const ThermalNetwork& net,
                                                   const std::vector<int>& hp_edges,
                                                   const std::vector<int>& demand_edges);

/// Steady state of the thermal model with one heat-pump input, with the
/// state at `pin_index` held at `pin_value`. Solves A x + B u + E d = 0
/// together with the pin for (x, u). Requires exactly one control column.
std::pair<Eigen::VectorXd, double> steady_state_with_pinned_temperature(
    const ContinuousThermalModel& model, const Eigen::VectorXd& disturbance,
    int pin_index, double pin_value);

}  // namespace etmg
