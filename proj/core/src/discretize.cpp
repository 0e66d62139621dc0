#include "etmg/discretize.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <sstream>

#include "etmg/errors.hpp"

namespace etmg {

Eigen::MatrixXd expm(const Eigen::MatrixXd& M) {
  if (M.rows() != M.cols()) {
    std::ostringstream msg;
    msg << "expm requires a square matrix, got " << M.rows() << "x" << M.cols();
    throw std::invalid_argument(msg.str());
  }
  if (!M.allFinite()) {
    throw std::invalid_argument("expm input contains NaN or Inf entries");
  }
  return M.exp();
}

DiscretizedModel zoh_discretize(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                const Eigen::MatrixXd& E, double dt_s) {
  if (dt_s <= 0.0) {
    throw std::invalid_argument("sample time must be positive");
  }
  const Eigen::Index n = A.rows();
  if (A.cols() != n || B.rows() != n || E.rows() != n) {
    throw std::invalid_argument("zoh_discretize: A, B, E row dimensions are inconsistent");
  }
  const Eigen::Index nu = B.cols();
  const Eigen::Index nd = E.cols();

  Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(n + nu + nd, n + nu + nd);
  aug.topLeftCorner(n, n) = A;
  aug.block(0, n, n, nu) = B;
  aug.block(0, n + nu, n, nd) = E;

  const Eigen::MatrixXd phi = expm(aug * dt_s);

  DiscretizedModel out;
  out.A = phi.topLeftCorner(n, n);
  out.B = phi.block(0, n, n, nu);
  out.E = phi.block(0, n + nu, n, nd);
  return out;
}

}  // namespace etmg
