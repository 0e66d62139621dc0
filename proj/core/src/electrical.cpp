#include "etmg/electrical.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <sstream>

#include "etmg/errors.hpp"

namespace etmg {

ElectricalNetwork::ElectricalNetwork(DirectedGraph graph, Eigen::VectorXd line_params,
                                     std::vector<ElectricalRole> roles)
    : graph_(std::move(graph)), line_params_(std::move(line_params)), roles_(std::move(roles)) {
  if (line_params_.size() != graph_.edge_count()) {
    throw ConfigError("line parameter vector does not match the line count");
  }
  if (static_cast<int>(roles_.size()) != graph_.node_count()) {
    throw ConfigError("node role list does not match the node count");
  }
  if ((line_params_.array() <= 0.0).any()) {
    throw ConfigError("all line parameters must be positive");
  }
  if (roles_.empty() || roles_[0] != ElectricalRole::Pcc) {
    throw ConfigError("node 0 must be the point of common coupling");
  }
  int pcc_count = 0;
  for (std::size_t i = 0; i < roles_.size(); ++i) {
    if (roles_[i] == ElectricalRole::Pcc) ++pcc_count;
    if (i + 1 < roles_.size() &&
        static_cast<int>(roles_[i + 1]) < static_cast<int>(roles_[i])) {
      throw ConfigError(
          "electrical nodes must be ordered PCC, storage, heat pumps, renewables, loads");
    }
  }
  if (pcc_count != 1) {
    throw ConfigError("exactly one node may be the point of common coupling");
  }
}

int ElectricalNetwork::count(ElectricalRole role) const {
  int n = 0;
  for (ElectricalRole r : roles_) {
    if (r == role) ++n;
  }
  return n;
}

std::vector<int> ElectricalNetwork::nodes_with_role(ElectricalRole role) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < roles_.size(); ++i) {
    if (roles_[i] == role) out.push_back(static_cast<int>(i));
  }
  return out;
}

PtdfMap assemble_ptdf(const ElectricalNetwork& net) {
  const int n = net.node_count();
  const Eigen::MatrixXd F = build_incidence(net.graph());
  const Eigen::MatrixXd laplacian =
      F * net.line_params().asDiagonal() * F.transpose();

  // Angle differences against the last node; the reduction drops its row
  // and column from the Laplacian.
  Eigen::MatrixXd T = Eigen::MatrixXd::Identity(n, n);
  T.topRightCorner(n - 1, 1).setConstant(-1.0);
  Eigen::MatrixXd T_keep = Eigen::MatrixXd::Zero(n - 1, n);
  T_keep.leftCols(n - 1).setIdentity();

  const Eigen::MatrixXd reduced = T_keep * laplacian * T_keep.transpose();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(reduced);
  if (!lu.isInvertible()) {
    throw ConfigError("reduced Laplacian is singular; the electrical grid is disconnected");
  }

  PtdfMap out;
  out.matrix = net.line_params().asDiagonal() * F.transpose() *
               T.partialPivLu().solve(T_keep.transpose()) * lu.solve(T_keep);
  return out;
}

Eigen::VectorXd line_flows(const PtdfMap& ptdf, const Eigen::VectorXd& injections_mw,
                           double balance_tol) {
  if (injections_mw.size() != ptdf.node_count()) {
    throw std::invalid_argument("injection vector does not match the node count");
  }
  const double residual = check_balance(injections_mw);
  if (std::abs(residual) > balance_tol) {
    std::ostringstream msg;
    msg << "nodal injections are unbalanced by " << residual << " MW";
    throw std::invalid_argument(msg.str());
  }
  return ptdf.matrix * injections_mw;
}

double check_balance(const Eigen::VectorXd& injections_mw) { return injections_mw.sum(); }

Eigen::VectorXd ess_step(const Eigen::VectorXd& state_mwh, const Eigen::VectorXd& power_mw,
                         double dt_h) {
  if (state_mwh.size() != power_mw.size()) {
    throw std::invalid_argument("storage state and power dimensions differ");
  }
  return state_mwh + dt_h * power_mw;
}

}  // namespace etmg
