#include "etmg/mpc.hpp"

#include <cmath>
#include <sstream>

#include "etmg/errors.hpp"

namespace etmg {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

void check_weight_vector(const Eigen::VectorXd& w, int expected, const char* name) {
  if (w.size() != expected) {
    std::ostringstream msg;
    msg << name << " has " << w.size() << " entries, expected " << expected;
    throw ConfigError(msg.str());
  }
  if ((w.array() < 0.0).any()) {
    throw ConfigError(std::string(name) + " must be nonnegative");
  }
}

void check_bounds(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi, int expected,
                  const char* name) {
  if (lo.size() != expected || hi.size() != expected) {
    throw ConfigError(std::string(name) + " bounds have the wrong dimension");
  }
  for (int i = 0; i < expected; ++i) {
    if (lo[i] > hi[i]) {
      std::ostringstream msg;
      msg << name << " bounds crossed at entry " << i;
      throw ConfigError(msg.str());
    }
  }
}

}  // namespace

void MpcConfig::validate(const EtmgDims& dims) const {
  require(horizon >= 1, "horizon must be at least one step");
  require(tracked_states.size() == static_cast<std::size_t>(tracked_weights.size()) &&
              tracked_states.size() == static_cast<std::size_t>(tracked_targets.size()),
          "tracked temperature set, weights and targets must have equal sizes");
  for (int idx : tracked_states) {
    require(idx >= 0 && idx < dims.n_thermal_states(),
            "tracked state index outside the thermal state block");
  }
  require((tracked_weights.array() >= 0.0).all(), "tracking weights must be nonnegative");
  require(grid_weight >= 0.0, "grid weight must be nonnegative");
  check_weight_vector(ess_weights, dims.n_ess, "storage weights");
  check_weight_vector(hp_weights, dims.n_hp, "heat pump power weights");
  check_weight_vector(hp_deviation_weights, dims.n_hp, "heat pump deviation weights");
  check_weight_vector(hp_move_weights, dims.n_hp, "heat pump move weights");
  require(hp_best_point_mw.size() == dims.n_hp, "heat pump best point has the wrong dimension");
  check_bounds(state_lower, state_upper, dims.n_states(), "state");
  check_bounds(line_lower, line_upper, dims.n_elec_lines, "line");
  check_bounds(control_lower, control_upper, dims.n_controls(), "control");
}

double stage_cost_temperature(const Eigen::VectorXd& tracked, const Eigen::VectorXd& targets,
                              const Eigen::VectorXd& weights) {
  if (tracked.size() != targets.size() || tracked.size() != weights.size()) {
    throw std::invalid_argument("temperature stage cost dimensions differ");
  }
  const Eigen::VectorXd dev = tracked - targets;
  return dev.dot(weights.cwiseProduct(dev));
}

double stage_cost_economic(const Eigen::VectorXd& power, const Eigen::VectorXd& weights) {
  if (power.size() != weights.size()) {
    throw std::invalid_argument("economic stage cost dimensions differ");
  }
  return power.dot(weights.cwiseProduct(power));
}

double stage_cost_heatpump(const Eigen::VectorXd& hp_power, const Eigen::VectorXd& hp_prev,
                           const Eigen::VectorXd& hp_best, const Eigen::VectorXd& dev_weights,
                           const Eigen::VectorXd& move_weights) {
  if (hp_power.size() != hp_prev.size() || hp_power.size() != hp_best.size() ||
      hp_power.size() != dev_weights.size() || hp_power.size() != move_weights.size()) {
    throw std::invalid_argument("heat pump stage cost dimensions differ");
  }
  const Eigen::VectorXd dev = hp_power - hp_best;
  const Eigen::VectorXd move = hp_power - hp_prev;
  return dev.dot(dev_weights.cwiseProduct(dev)) + move.dot(move_weights.cwiseProduct(move));
}

CondensedMpc::CondensedMpc(const EtmgModel& model, MpcConfig config)
    : model_(model), config_(std::move(config)) {
  config_.validate(model_.dims);
  const int N = config_.horizon;
  const int n_x = model_.dims.n_states();
  const int m = model_.dims.n_controls();
  const int n_lines = model_.dims.n_elec_lines;
  const int n_ess = model_.dims.n_ess;
  const int n_hp = model_.dims.n_hp;

  // State prediction: row block k holds x(k+1) = A^{k} x0 + sum_j A^{k-j} B u(j) + ...
  gamma_ = Eigen::MatrixXd::Zero(N * n_x, N * m);
  gamma_.block(0, 0, n_x, m) = model_.B;
  for (int k = 1; k < N; ++k) {
    gamma_.middleRows(k * n_x, n_x).leftCols(k * m).noalias() =
        model_.A * gamma_.middleRows((k - 1) * n_x, n_x).leftCols(k * m);
    gamma_.block(k * n_x, k * m, n_x, m) = model_.B;
  }

  line_control_ = model_.ptdf.matrix * model_.control_injection_map();
  line_dist_ = model_.ptdf.matrix * model_.disturbance_injection_map();

  // Quadratic cost, constant across receding-horizon steps.
  Eigen::MatrixXd quad = Eigen::MatrixXd::Zero(N * m, N * m);
  Eigen::VectorXd control_diag = Eigen::VectorXd::Zero(m);
  control_diag[0] = config_.grid_weight;
  control_diag.segment(1, n_ess) = config_.ess_weights;
  control_diag.tail(n_hp) = config_.hp_weights + config_.hp_deviation_weights;
  for (int k = 0; k < N; ++k) {
    quad.block(k * m, k * m, m, m).diagonal() += control_diag;
  }
  const int hp_off = 1 + n_ess;
  for (int k = 0; k < N; ++k) {
    // Move penalty couples consecutive heat-pump blocks; the k = 0 term
    // references the previous applied control and is linear-only here.
    quad.block(k * m + hp_off, k * m + hp_off, n_hp, n_hp).diagonal() +=
        config_.hp_move_weights;
    if (k >= 1) {
      quad.block((k - 1) * m + hp_off, (k - 1) * m + hp_off, n_hp, n_hp).diagonal() +=
          config_.hp_move_weights;
      Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(n_hp, n_hp);
      cross.diagonal() = -config_.hp_move_weights;
      quad.block(k * m + hp_off, (k - 1) * m + hp_off, n_hp, n_hp) += cross;
      quad.block((k - 1) * m + hp_off, k * m + hp_off, n_hp, n_hp) += cross;
    }
  }

  const int n_tr = static_cast<int>(config_.tracked_states.size());
  if (n_tr > 0) {
    // Stage k = 0 depends only on x0; tracked stages run k = 1..N-1.
    for (int k = 1; k < N; ++k) {
      Eigen::MatrixXd rows(n_tr, k * m);
      for (int t = 0; t < n_tr; ++t) {
        const int state_idx = n_ess + config_.tracked_states[t];
        rows.row(t) = gamma_.row((k - 1) * n_x + state_idx).head(k * m);
      }
      quad.topLeftCorner(k * m, k * m).noalias() +=
          rows.transpose() * config_.tracked_weights.asDiagonal() * rows;
    }
  }

  h_ = 2.0 * quad;
  h_.diagonal().array() += 1e-9;  // keeps flat control directions strictly convex

  // Inequality rows: control boxes, then state boxes, then line limits.
  const int rows_ctrl = N * m;
  const int rows_state = N * n_x;
  const int rows_line = N * n_lines;
  a_in_ = Eigen::MatrixXd::Zero(rows_ctrl + rows_state + rows_line, N * m);
  a_in_.topRows(rows_ctrl).setIdentity();
  a_in_.middleRows(rows_ctrl, rows_state) = gamma_;
  for (int k = 0; k < N; ++k) {
    a_in_.block(rows_ctrl + rows_state + k * n_lines, k * m, n_lines, m) = line_control_;
  }

  balance_row_ = Eigen::VectorXd::Zero(m);
  balance_row_[0] = 1.0;
  balance_row_.segment(1, n_ess).setConstant(-1.0);
  balance_row_.tail(n_hp).setConstant(1.0);
  a_eq_ = Eigen::MatrixXd::Zero(N, N * m);
  for (int k = 0; k < N; ++k) {
    a_eq_.block(k, k * m, 1, m) = balance_row_.transpose();
  }
}

AssembledQp CondensedMpc::assemble(const Eigen::VectorXd& x0, const Eigen::VectorXd& hp_prev,
                                   const Forecast& forecast, int start) const {
  const int N = config_.horizon;
  const int n_x = model_.dims.n_states();
  const int m = model_.dims.n_controls();
  const int n_lines = model_.dims.n_elec_lines;
  const int n_ess = model_.dims.n_ess;
  const int n_hp = model_.dims.n_hp;
  const int hp_off = 1 + n_ess;

  if (x0.size() != n_x) throw ConfigError("initial state has the wrong dimension");
  if (hp_prev.size() != n_hp) throw ConfigError("previous heat-pump power has the wrong dimension");
  if (start < 0 || forecast.steps() < start + N) {
    throw ConfigError("forecast does not cover the horizon");
  }
  if (forecast.thermal.cols() != model_.dims.n_thermal_dist() ||
      forecast.electrical.cols() != model_.dims.n_elec_dist()) {
    throw ConfigError("forecast disturbance columns do not match the model");
  }

  AssembledQp out;
  QpProblem& qp = out.qp;
  qp.H = h_;
  qp.g = Eigen::VectorXd::Zero(N * m);
  qp.A_eq = a_eq_;
  qp.b_eq.resize(N);
  qp.A_in = a_in_;
  const int rows_ctrl = N * m;
  const int rows_state = N * n_x;
  const int rows_line = N * n_lines;
  qp.lb.resize(rows_ctrl + rows_state + rows_line);
  qp.ub.resize(qp.lb.size());

  for (int k = 0; k < N; ++k) {
    qp.lb.segment(k * m, m) = config_.control_lower;
    qp.ub.segment(k * m, m) = config_.control_upper;
  }

  // Zero-input state response over the window.
  Eigen::MatrixXd free_state(N + 1, n_x);
  free_state.row(0) = x0.transpose();
  for (int k = 0; k < N; ++k) {
    free_state.row(k + 1) =
        (model_.A * free_state.row(k).transpose() +
         model_.E * forecast.thermal.row(start + k).transpose())
            .transpose();
  }
  for (int k = 0; k < N; ++k) {
    qp.lb.segment(rows_ctrl + k * n_x, n_x) =
        config_.state_lower - free_state.row(k + 1).transpose();
    qp.ub.segment(rows_ctrl + k * n_x, n_x) =
        config_.state_upper - free_state.row(k + 1).transpose();
  }

  for (int k = 0; k < N; ++k) {
    const Eigen::VectorXd shift =
        line_dist_ * forecast.electrical.row(start + k).transpose();
    qp.lb.segment(rows_ctrl + rows_state + k * n_lines, n_lines) = config_.line_lower - shift;
    qp.ub.segment(rows_ctrl + rows_state + k * n_lines, n_lines) = config_.line_upper - shift;
    qp.b_eq[k] = -forecast.electrical.row(start + k).sum();
  }

  // Linear cost and constant offset.
  double constant = 0.0;
  const int n_tr = static_cast<int>(config_.tracked_states.size());
  if (n_tr > 0) {
    Eigen::VectorXd tracked0(n_tr);
    for (int t = 0; t < n_tr; ++t) {
      tracked0[t] = x0[n_ess + config_.tracked_states[t]];
    }
    constant += stage_cost_temperature(tracked0, config_.tracked_targets,
                                       config_.tracked_weights);
    for (int k = 1; k < N; ++k) {
      Eigen::VectorXd dev(n_tr);
      for (int t = 0; t < n_tr; ++t) {
        const int state_idx = n_ess + config_.tracked_states[t];
        dev[t] = free_state(k, state_idx) - config_.tracked_targets[t];
      }
      constant += dev.dot(config_.tracked_weights.cwiseProduct(dev));
      const Eigen::VectorXd weighted = 2.0 * config_.tracked_weights.cwiseProduct(dev);
      for (int t = 0; t < n_tr; ++t) {
        const int state_idx = n_ess + config_.tracked_states[t];
        qp.g.head(k * m).noalias() +=
            weighted[t] * gamma_.row((k - 1) * n_x + state_idx).head(k * m).transpose();
      }
    }
  }
  for (int k = 0; k < N; ++k) {
    qp.g.segment(k * m + hp_off, n_hp) -=
        2.0 * config_.hp_deviation_weights.cwiseProduct(config_.hp_best_point_mw);
  }
  constant += static_cast<double>(N) *
              config_.hp_best_point_mw.dot(
                  config_.hp_deviation_weights.cwiseProduct(config_.hp_best_point_mw));
  qp.g.segment(hp_off, n_hp) -= 2.0 * config_.hp_move_weights.cwiseProduct(hp_prev);
  constant += hp_prev.dot(config_.hp_move_weights.cwiseProduct(hp_prev));

  out.constant = constant;
  qp.validate();
  return out;
}

QpProblem build_qp(const EtmgModel& model, const MpcConfig& config, const Eigen::VectorXd& x0,
                   const Eigen::VectorXd& hp_prev, const Forecast& forecast) {
  return CondensedMpc(model, config).assemble(x0, hp_prev, forecast).qp;
}

namespace {

// Best-effort attribution of an infeasible solve to a constraint family
// from the largest dual component at abort time.
std::string violated_family(const QpSolution& sol, const EtmgDims& dims, int horizon) {
  const int m = dims.n_controls();
  const int rows_ctrl = horizon * m;
  const int rows_state = horizon * dims.n_states();
  double best_eq = sol.dual_eq.size() ? sol.dual_eq.cwiseAbs().maxCoeff() : 0.0;
  int idx = -1;
  double best_in = 0.0;
  for (int i = 0; i < sol.dual_in.size(); ++i) {
    if (std::abs(sol.dual_in[i]) > best_in) {
      best_in = std::abs(sol.dual_in[i]);
      idx = i;
    }
  }
  if (best_eq >= best_in) return "power balance";
  if (idx < rows_ctrl) return "control bounds";
  if (idx < rows_ctrl + rows_state) return "state bounds";
  return "line limits";
}

}  // namespace

SimulationTrace receding_horizon_run(const EtmgModel& model, const MpcConfig& config,
                                     const Forecast& profiles, int k_sim,
                                     const Eigen::VectorXd& x_init,
                                     const Eigen::VectorXd& hp_init) {
  if (k_sim < 1) throw ConfigError("simulation must run at least one step");
  if (profiles.steps() < k_sim + config.horizon) {
    std::ostringstream msg;
    msg << "profiles cover " << profiles.steps() << " steps but " << k_sim + config.horizon
        << " are required (simulation plus horizon)";
    throw ConfigError(msg.str());
  }

  const CondensedMpc mpc(model, config);
  const int m = model.dims.n_controls();
  const int n_ess = model.dims.n_ess;
  const int n_hp = model.dims.n_hp;

  SimulationTrace trace;
  trace.steps.reserve(k_sim);

  Eigen::VectorXd x = x_init;
  Eigen::VectorXd hp_prev = hp_init;
  QpSettings settings = config.qp;

  for (int t = 0; t < k_sim; ++t) {
    const AssembledQp assembled = mpc.assemble(x, hp_prev, profiles, t);
    const QpSolution sol = solve_qp(assembled.qp, settings);
    if (sol.status == QpStatus::Infeasible) {
      const std::string family = violated_family(sol, model.dims, config.horizon);
      std::ostringstream msg;
      msg << "operation problem infeasible at step " << t << " (" << family << ")";
      throw InfeasibleError(msg.str(), t, family);
    }
    if (sol.status == QpStatus::MaxIterations) {
      std::ostringstream msg;
      msg << "solver hit the iteration cap at step " << t;
      throw SolverError(msg.str(), t);
    }

    const Eigen::VectorXd u = sol.primal.head(m);
    const Eigen::VectorXd hp_now = u.tail(n_hp);

    TraceStep step;
    step.state = x;
    step.control = u;
    step.costs.temperature = 0.0;
    if (!config.tracked_states.empty()) {
      Eigen::VectorXd tracked(config.tracked_states.size());
      for (std::size_t i = 0; i < config.tracked_states.size(); ++i) {
        tracked[static_cast<int>(i)] = x[n_ess + config.tracked_states[i]];
      }
      step.costs.temperature =
          stage_cost_temperature(tracked, config.tracked_targets, config.tracked_weights);
    }
    step.costs.grid = config.grid_weight * u[0] * u[0];
    step.costs.ess = stage_cost_economic(u.segment(1, n_ess), config.ess_weights);
    step.costs.heat_pump_power = stage_cost_economic(hp_now, config.hp_weights);
    step.costs.heat_pump_efficiency =
        stage_cost_heatpump(hp_now, hp_prev, config.hp_best_point_mw,
                            config.hp_deviation_weights, config.hp_move_weights);
    step.qp_iterations = sol.iterations;
    step.qp_objective = sol.objective + assembled.constant;
    step.qp_polished = sol.polished;

    const PlantStep plant =
        plant_step(model, x, u, profiles.thermal.row(t).transpose(),
                   profiles.electrical.row(t).transpose());
    step.nodal_power_mw = plant.nodal_power_mw;
    step.line_power_mw = plant.line_power_mw;
    trace.steps.push_back(std::move(step));

    x = plant.state;
    hp_prev = hp_now;

    // Shifted warm start for the next solve.
    settings.initial_primal.resize(mpc.decision_dim());
    settings.initial_primal.head((config.horizon - 1) * m) =
        sol.primal.tail((config.horizon - 1) * m);
    settings.initial_primal.tail(m) = sol.primal.tail(m);
    settings.rho = sol.rho_final;
  }

  trace.final_state = x;
  return trace;
}

double max_constraint_violation(const EtmgModel& model, const MpcConfig& config,
                                const SimulationTrace& trace) {
  double worst = 0.0;
  auto box = [&worst](const Eigen::VectorXd& v, const Eigen::VectorXd& lo,
                      const Eigen::VectorXd& hi) {
    for (int i = 0; i < v.size(); ++i) {
      worst = std::max(worst, std::max(lo[i] - v[i], v[i] - hi[i]));
    }
  };
  for (const TraceStep& step : trace.steps) {
    box(step.state, config.state_lower, config.state_upper);
    box(step.control, config.control_lower, config.control_upper);
    box(step.line_power_mw, config.line_lower, config.line_upper);
    worst = std::max(worst, std::abs(check_balance(step.nodal_power_mw)));
  }
  if (trace.final_state.size() > 0) {
    box(trace.final_state, config.state_lower, config.state_upper);
  }
  return worst;
}

}  // namespace etmg
