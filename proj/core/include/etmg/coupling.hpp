#pragma once

#include <Eigen/Core>
#include <vector>

#include "etmg/electrical.hpp"
#include "etmg/thermal.hpp"

namespace etmg {

/// Heat pumps coupling electrical nodes to thermal edges. Pumps are listed
/// in ascending order of their electrical node; `thermal_edges[j]` is the
/// exchanger edge fed by pump j and `cop[j]` its coefficient of performance.
struct HeatPumpBank {
  Eigen::VectorXd cop;
  std::vector<int> thermal_edges;
  std::vector<int> electrical_nodes;

  int size() const { return static_cast<int>(cop.size()); }
};

/// Heat flows produced by the pumps for a given electrical draw
/// (nonpositive by convention): u_t = -diag(cop) * u_hp.
Eigen::VectorXd heat_pump_map(const Eigen::VectorXd& hp_power_mw, const Eigen::VectorXd& cop);

struct EtmgDims {
  int n_ess = 0;
  int n_thermal_edges = 0;
  int n_thermal_storages = 0;
  int n_hp = 0;
  int n_demand = 0;
  int n_res = 0;
  int n_load = 0;
  int n_elec_nodes = 0;
  int n_elec_lines = 0;

  int n_states() const { return n_ess + n_thermal_edges + n_thermal_storages; }
  int n_thermal_states() const { return n_thermal_edges + n_thermal_storages; }
  int n_controls() const { return 1 + n_ess + n_hp; }
  int n_thermal_dist() const { return n_demand + 1; }
  int n_elec_dist() const { return n_res + n_load; }
};

/// Discrete-time model of the coupled microgrid.
///
/// State x = [x_e; T_e; T_ns] (MWh, then degC), control
/// u = [u_grid; u_ess; u_hp] (MW), thermal disturbance
/// d_t = [consumer heat flows (MW_th, negative extracts); ambient (degC)].
/// Thermal quantities are SI internally; the exposed matrices work on the
/// MW/MWh boundary units, with the conversion folded into B and E.
///
/// Sign conventions: u_ess > 0 charges the storage and consumes grid power,
/// u_hp <= 0 draws power and injects -cop*u_hp of heat.
struct EtmgModel {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd E;
  PtdfMap ptdf;
  EtmgDims dims;
  double dt_s = 0.0;
  Eigen::VectorXd cop;
  std::vector<int> ess_nodes;
  std::vector<int> hp_nodes;
  Eigen::VectorXd thermal_inertia_j_per_k;

  double dt_h() const { return dt_s / 3600.0; }

  /// Nodal injection vector [u_grid; -u_ess; u_hp; d_e] in MW.
  Eigen::VectorXd injections(const Eigen::VectorXd& control,
                             const Eigen::VectorXd& elec_disturbance) const;

  /// Maps a control vector to its contribution to the nodal injections.
  Eigen::MatrixXd control_injection_map() const;
  /// Maps the electrical disturbances to their injection entries.
  Eigen::MatrixXd disturbance_injection_map() const;

  /// One application of the state map, without the power-flow algebra.
  Eigen::VectorXd advance(const Eigen::VectorXd& state, const Eigen::VectorXd& control,
                          const Eigen::VectorXd& thermal_disturbance) const;
};

EtmgModel assemble_etmg(const ContinuousThermalModel& thermal, const ElectricalNetwork& electrical,
                        const HeatPumpBank& pumps, double dt_s);

/// One closed-loop plant step: successor state, nodal injections and line
/// flows. Throws if the control/disturbance pair violates the global power
/// balance by more than `balance_tol`.
struct PlantStep {
  Eigen::VectorXd state;
  Eigen::VectorXd nodal_power_mw;
  Eigen::VectorXd line_power_mw;
};

PlantStep plant_step(const EtmgModel& model, const Eigen::VectorXd& state,
                     const Eigen::VectorXd& control, const Eigen::VectorXd& thermal_disturbance,
                     const Eigen::VectorXd& elec_disturbance, double balance_tol = 1e-6);

}  // namespace etmg
