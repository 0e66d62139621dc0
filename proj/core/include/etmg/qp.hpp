#pragma once

#include <Eigen/Core>
#include <filesystem>

namespace etmg {

/// Convex quadratic program
///   min 0.5 x'Hx + g'x
///   s.t. A_eq x = b_eq,  lb <= A_in x <= ub,
/// with H symmetric positive semidefinite. Box constraints are expressed
/// through selector rows of A_in. Bounds may be +-infinity.
struct QpProblem {
  Eigen::MatrixXd H;
  Eigen::VectorXd g;
  Eigen::MatrixXd A_eq;
  Eigen::VectorXd b_eq;
  Eigen::MatrixXd A_in;
  Eigen::VectorXd lb;
  Eigen::VectorXd ub;

  int num_vars() const { return static_cast<int>(H.rows()); }
  int num_eq() const { return static_cast<int>(A_eq.rows()); }
  int num_in() const { return static_cast<int>(A_in.rows()); }

  /// Throws std::invalid_argument on dimension mismatches, asymmetric H,
  /// or crossed bounds (lb > ub).
  void validate() const;
};

enum class QpStatus { Optimal, Infeasible, MaxIterations };

struct QpSolution {
  Eigen::VectorXd primal;
  Eigen::VectorXd dual_eq;
  /// Inequality multipliers; positive entries belong to active upper
  /// bounds, negative entries to active lower bounds.
  Eigen::VectorXd dual_in;
  QpStatus status = QpStatus::MaxIterations;
  double objective = 0.0;
  int iterations = 0;
  bool polished = false;
  double rho_final = 0.0;
};

struct QpSettings {
  double tol = 1e-6;
  int max_iter = 20000;
  double rho = 0.1;
  double sigma = 1e-6;
  double over_relaxation = 1.6;
  bool adaptive_rho = true;
  bool polish = true;
  bool scale = true;
  /// Optional primal warm start; empty means cold start.
  Eigen::VectorXd initial_primal;
};

struct KktResiduals {
  double stationarity = 0.0;
  double primal_eq = 0.0;
  double primal_in = 0.0;
  double complementarity = 0.0;

  double max_residual() const;
};

/// Solves the program with an over-relaxed operator-splitting iteration and
/// an active-set polishing step; problems without inequality rows take a
/// direct KKT solve. Throws std::invalid_argument if H is indefinite.
QpSolution solve_qp(const QpProblem& problem, const QpSettings& settings = {});

KktResiduals kkt_residuals(const QpProblem& problem, const QpSolution& solution);

/// Plain-text problem dump (header with dimensions, then each block as
/// row-major decimal text). Intended for debugging failed solves.
void write_qp(const QpProblem& problem, const std::filesystem::path& path);
QpProblem read_qp(const std::filesystem::path& path);

}  // namespace etmg
