#pragma once

#include <Eigen/Core>

namespace etmg {

/// Matrix exponential of a square real matrix.
/// Throws on non-square or non-finite input.
Eigen::MatrixXd expm(const Eigen::MatrixXd& M);

/// Exact zero-order-hold discretization of x' = A x + B u + E d over a
/// sample time of `dt_s` seconds, with u and d held constant per sample.
struct DiscretizedModel {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd E;
};

/// Computes the discrete matrices through the exponential of the augmented
/// matrix [[A, [B E]], [0, 0]] * dt: A_d lands in the top-left block and
/// [B_d E_d] in the top-right block.
DiscretizedModel zoh_discretize(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                const Eigen::MatrixXd& E, double dt_s);

}  // namespace etmg
