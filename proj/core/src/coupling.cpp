#include "etmg/coupling.hpp"

#include <cmath>
#include <sstream>

#include "etmg/discretize.hpp"
#include "etmg/errors.hpp"

namespace etmg {

namespace {
constexpr double kWattPerMw = 1e6;
}

Eigen::VectorXd heat_pump_map(const Eigen::VectorXd& hp_power_mw, const Eigen::VectorXd& cop) {
  if (hp_power_mw.size() != cop.size()) {
    throw std::invalid_argument("heat pump power and cop dimensions differ");
  }
  return -(cop.asDiagonal() * hp_power_mw);
}

Eigen::VectorXd EtmgModel::injections(const Eigen::VectorXd& control,
                                      const Eigen::VectorXd& elec_disturbance) const {
  if (control.size() != dims.n_controls() || elec_disturbance.size() != dims.n_elec_dist()) {
    throw std::invalid_argument("injection inputs have inconsistent dimensions");
  }
  Eigen::VectorXd p(dims.n_elec_nodes);
  p[0] = control[0];
  p.segment(1, dims.n_ess) = -control.segment(1, dims.n_ess);
  p.segment(1 + dims.n_ess, dims.n_hp) = control.tail(dims.n_hp);
  p.tail(dims.n_elec_dist()) = elec_disturbance;
  return p;
}

Eigen::MatrixXd EtmgModel::control_injection_map() const {
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(dims.n_elec_nodes, dims.n_controls());
  M(0, 0) = 1.0;
  for (int s = 0; s < dims.n_ess; ++s) M(1 + s, 1 + s) = -1.0;
  for (int h = 0; h < dims.n_hp; ++h) M(1 + dims.n_ess + h, 1 + dims.n_ess + h) = 1.0;
  return M;
}

Eigen::MatrixXd EtmgModel::disturbance_injection_map() const {
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(dims.n_elec_nodes, dims.n_elec_dist());
  const int offset = 1 + dims.n_ess + dims.n_hp;
  for (int d = 0; d < dims.n_elec_dist(); ++d) M(offset + d, d) = 1.0;
  return M;
}

Eigen::VectorXd EtmgModel::advance(const Eigen::VectorXd& state, const Eigen::VectorXd& control,
                                   const Eigen::VectorXd& thermal_disturbance) const {
  if (state.size() != dims.n_states() || control.size() != dims.n_controls() ||
      thermal_disturbance.size() != dims.n_thermal_dist()) {
    throw std::invalid_argument("state map inputs have inconsistent dimensions");
  }
  return A * state + B * control + E * thermal_disturbance;
}

EtmgModel assemble_etmg(const ContinuousThermalModel& thermal, const ElectricalNetwork& electrical,
                        const HeatPumpBank& pumps, double dt_s) {
  if (dt_s <= 0.0) {
    throw ConfigError("sample time must be positive");
  }
  EtmgDims dims;
  dims.n_ess = electrical.count(ElectricalRole::Storage);
  dims.n_thermal_edges = thermal.edge_count;
  dims.n_thermal_storages = thermal.storage_count;
  dims.n_hp = static_cast<int>(thermal.hp_edges.size());
  dims.n_demand = static_cast<int>(thermal.demand_edges.size());
  dims.n_res = electrical.count(ElectricalRole::Renewable);
  dims.n_load = electrical.count(ElectricalRole::Load);
  dims.n_elec_nodes = electrical.node_count();
  dims.n_elec_lines = electrical.line_count();

  if (pumps.size() != dims.n_hp ||
      static_cast<int>(pumps.thermal_edges.size()) != dims.n_hp ||
      static_cast<int>(pumps.electrical_nodes.size()) != dims.n_hp) {
    throw ConfigError("heat pump bank does not match the heat-pump edge count (control block)");
  }
  if (electrical.count(ElectricalRole::HeatPump) != dims.n_hp) {
    throw ConfigError("electrical heat-pump nodes do not match the pump count (control block)");
  }
  if ((pumps.cop.array() <= 0.0).any()) {
    throw ConfigError("heat pump coefficients of performance must be positive");
  }
  const std::vector<int> hp_nodes = electrical.nodes_with_role(ElectricalRole::HeatPump);
  for (int j = 0; j < dims.n_hp; ++j) {
    if (pumps.electrical_nodes[j] != hp_nodes[j]) {
      std::ostringstream msg;
      msg << "pump " << j << " must bind electrical node " << hp_nodes[j]
          << " (pumps are ordered by node)";
      throw ConfigError(msg.str());
    }
    if (pumps.thermal_edges[j] != thermal.hp_edges[j]) {
      std::ostringstream msg;
      msg << "pump " << j << " binds thermal edge " << pumps.thermal_edges[j]
          << " but the thermal model has edge " << thermal.hp_edges[j]
          << " in that slot (control block)";
      throw ConfigError(msg.str());
    }
  }

  const DiscretizedModel disc = zoh_discretize(thermal.A, thermal.B, thermal.E, dt_s);
  const int n_xt = thermal.state_count();
  const int n_x = dims.n_states();
  const double dt_h = dt_s / 3600.0;

  EtmgModel model;
  model.A = Eigen::MatrixXd::Zero(n_x, n_x);
  model.A.topLeftCorner(dims.n_ess, dims.n_ess).setIdentity();
  model.A.bottomRightCorner(n_xt, n_xt) = disc.A;

  model.B = Eigen::MatrixXd::Zero(n_x, dims.n_controls());
  model.B.block(0, 1, dims.n_ess, dims.n_ess) =
      dt_h * Eigen::MatrixXd::Identity(dims.n_ess, dims.n_ess);
  model.B.bottomRightCorner(n_xt, dims.n_hp) =
      -kWattPerMw * disc.B * pumps.cop.asDiagonal();

  model.E = Eigen::MatrixXd::Zero(n_x, dims.n_thermal_dist());
  model.E.bottomLeftCorner(n_xt, dims.n_demand) = kWattPerMw * disc.E.leftCols(dims.n_demand);
  model.E.bottomRightCorner(n_xt, 1) = disc.E.rightCols(1);

  model.ptdf = assemble_ptdf(electrical);
  model.dims = dims;
  model.dt_s = dt_s;
  model.cop = pumps.cop;
  model.ess_nodes = electrical.nodes_with_role(ElectricalRole::Storage);
  model.hp_nodes = hp_nodes;
  model.thermal_inertia_j_per_k = thermal.inertia_j_per_k;
  return model;
}

PlantStep plant_step(const EtmgModel& model, const Eigen::VectorXd& state,
                     const Eigen::VectorXd& control, const Eigen::VectorXd& thermal_disturbance,
                     const Eigen::VectorXd& elec_disturbance, double balance_tol) {
  const Eigen::VectorXd p = model.injections(control, elec_disturbance);
  const double residual = check_balance(p);
  if (std::abs(residual) > balance_tol) {
    std::ostringstream msg;
    msg << "global power balance violated by " << residual << " MW";
    throw std::invalid_argument(msg.str());
  }
  PlantStep out;
  out.state = model.advance(state, control, thermal_disturbance);
  out.nodal_power_mw = p;
  out.line_power_mw = model.ptdf.matrix * p;
  return out;
}

}  // namespace etmg
