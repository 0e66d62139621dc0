#pragma once

#include <Eigen/Core>
#include <vector>

#include "etmg/graph.hpp"

namespace etmg {

/// Unit attached to an electrical node. Nodes are numbered ascending by
/// role: the point of common coupling first, then storage units, heat
/// pumps, renewable infeeds and loads.
enum class ElectricalRole { Pcc, Storage, HeatPump, Renewable, Load };

/// Electrical grid under the DC power flow approximation. The graph
/// orientation is arbitrary; it only fixes the sign of the line flows.
/// `line_params` holds the per-line products of susceptance and the two
/// terminal voltage amplitudes.
class ElectricalNetwork {
 public:
  ElectricalNetwork(DirectedGraph graph, Eigen::VectorXd line_params,
                    std::vector<ElectricalRole> roles);

  const DirectedGraph& graph() const { return graph_; }
  const Eigen::VectorXd& line_params() const { return line_params_; }
  const std::vector<ElectricalRole>& roles() const { return roles_; }

  int node_count() const { return graph_.node_count(); }
  int line_count() const { return graph_.edge_count(); }
  int count(ElectricalRole role) const;
  /// Node ids with the given role, ascending.
  std::vector<int> nodes_with_role(ElectricalRole role) const;

 private:
  DirectedGraph graph_;
  Eigen::VectorXd line_params_;
  std::vector<ElectricalRole> roles_;
};

/// Linear map from balanced nodal injections to line flows.
struct PtdfMap {
  Eigen::MatrixXd matrix;  // line_count x node_count

  int line_count() const { return static_cast<int>(matrix.rows()); }
  int node_count() const { return static_cast<int>(matrix.cols()); }
};

/// Power transfer distribution factors, built from the reduced network
/// Laplacian with the last node as angle reference.
PtdfMap assemble_ptdf(const ElectricalNetwork& net);

/// Line flows for a balanced injection vector. Throws if the injections do
/// not sum to zero within `balance_tol`.
Eigen::VectorXd line_flows(const PtdfMap& ptdf, const Eigen::VectorXd& injections_mw,
                           double balance_tol = 1e-6);

/// Sum of the nodal injections; zero for an admissible operating point.
double check_balance(const Eigen::VectorXd& injections_mw);

/// Stored energy after one sample of constant storage power. Positive power
/// charges the storage.
Eigen::VectorXd ess_step(const Eigen::VectorXd& state_mwh, const Eigen::VectorXd& power_mw,
                         double dt_h);

}  // namespace etmg
