#pragma once

#include <Eigen/Core>
#include <vector>

#include "etmg/coupling.hpp"
#include "etmg/qp.hpp"

namespace etmg {

/// Weights, targets and operating limits defining the horizon problem.
/// Tracked states are indices into the thermal state block (edges first,
/// then storages). All weights are nonnegative; bounds may be infinite.
struct MpcConfig {
  int horizon = 96;

  std::vector<int> tracked_states;
  Eigen::VectorXd tracked_weights;
  Eigen::VectorXd tracked_targets;

  double grid_weight = 0.0;
  Eigen::VectorXd ess_weights;
  Eigen::VectorXd hp_weights;
  Eigen::VectorXd hp_deviation_weights;
  Eigen::VectorXd hp_move_weights;
  Eigen::VectorXd hp_best_point_mw;

  Eigen::VectorXd state_lower;
  Eigen::VectorXd state_upper;
  Eigen::VectorXd line_lower;
  Eigen::VectorXd line_upper;
  Eigen::VectorXd control_lower;
  Eigen::VectorXd control_upper;

  QpSettings qp;

  void validate(const EtmgDims& dims) const;
};

/// Known disturbances per step: thermal rows hold the consumer heat flows
/// (negative extracts) followed by the ambient temperature; electrical rows
/// hold renewable and load injections (loads negative).
struct Forecast {
  Eigen::MatrixXd thermal;
  Eigen::MatrixXd electrical;

  int steps() const { return static_cast<int>(thermal.rows()); }
};

double stage_cost_temperature(const Eigen::VectorXd& tracked, const Eigen::VectorXd& targets,
                              const Eigen::VectorXd& weights);
double stage_cost_economic(const Eigen::VectorXd& power, const Eigen::VectorXd& weights);
double stage_cost_heatpump(const Eigen::VectorXd& hp_power, const Eigen::VectorXd& hp_prev,
                           const Eigen::VectorXd& hp_best, const Eigen::VectorXd& dev_weights,
                           const Eigen::VectorXd& move_weights);

struct StageCosts {
  double temperature = 0.0;
  double grid = 0.0;
  double ess = 0.0;
  double heat_pump_power = 0.0;
  double heat_pump_efficiency = 0.0;

  double total() const {
    return temperature + grid + ess + heat_pump_power + heat_pump_efficiency;
  }
};

struct AssembledQp {
  QpProblem qp;
  /// Constant objective offset so that horizon cost = qp objective + constant.
  double constant = 0.0;
};

/// Dense condensed formulation of the horizon problem. States are expressed
/// affinely in the stacked control sequence, so the decision vector is
/// U = [u(0); ...; u(N-1)] and the prediction matrices are built once and
/// reused across receding-horizon steps.
class CondensedMpc {
 public:
  CondensedMpc(const EtmgModel& model, MpcConfig config);

  /// Fills the QP for initial state `x0`, previous heat-pump power
  /// `hp_prev`, and forecast rows starting at `start`.
  AssembledQp assemble(const Eigen::VectorXd& x0, const Eigen::VectorXd& hp_prev,
                       const Forecast& forecast, int start = 0) const;

  int horizon() const { return config_.horizon; }
  int control_dim() const { return model_.dims.n_controls(); }
  int decision_dim() const { return config_.horizon * control_dim(); }
  /// Stacked state prediction matrix (rows are x(1)..x(N)).
  const Eigen::MatrixXd& prediction_matrix() const { return gamma_; }
  const EtmgModel& model() const { return model_; }
  const MpcConfig& config() const { return config_; }

 private:
  const EtmgModel& model_;
  MpcConfig config_;
  Eigen::MatrixXd gamma_;        // (N*n_x) x (N*m)
  Eigen::MatrixXd line_control_; // line flows per control, one step
  Eigen::MatrixXd line_dist_;    // line flows per electrical disturbance
  Eigen::MatrixXd h_;            // constant quadratic cost
  Eigen::MatrixXd a_in_;         // constant inequality matrix
  Eigen::MatrixXd a_eq_;         // balance equalities
  Eigen::VectorXd balance_row_;  // per-step balance coefficients
};

/// One-shot condensation of the horizon problem.
QpProblem build_qp(const EtmgModel& model, const MpcConfig& config, const Eigen::VectorXd& x0,
                   const Eigen::VectorXd& hp_prev, const Forecast& forecast);

struct TraceStep {
  Eigen::VectorXd state;
  Eigen::VectorXd control;
  Eigen::VectorXd nodal_power_mw;
  Eigen::VectorXd line_power_mw;
  StageCosts costs;
  int qp_iterations = 0;
  double qp_objective = 0.0;
  bool qp_polished = false;
};

struct SimulationTrace {
  std::vector<TraceStep> steps;
  Eigen::VectorXd final_state;

  int step_count() const { return static_cast<int>(steps.size()); }
};

/// Closed loop: at every step the horizon problem is solved, the first
/// control applied to the plant, and the window shifted. The forecast must
/// cover `k_sim + horizon` steps. Throws InfeasibleError or SolverError
/// with the failing step on solver trouble.
SimulationTrace receding_horizon_run(const EtmgModel& model, const MpcConfig& config,
                                     const Forecast& profiles, int k_sim,
                                     const Eigen::VectorXd& x_init,
                                     const Eigen::VectorXd& hp_init);

/// Largest violation of state, line, control or balance constraints over a
/// recorded trace (MW / MWh / degC units).
double max_constraint_violation(const EtmgModel& model, const MpcConfig& config,
                                const SimulationTrace& trace);

}  // namespace etmg
