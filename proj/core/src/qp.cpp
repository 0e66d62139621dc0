#include "etmg/qp.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <vector>

#include "etmg/errors.hpp"

namespace etmg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double inf_norm(const Eigen::VectorXd& v) {
  return v.size() ? v.cwiseAbs().maxCoeff() : 0.0;
}

double clamp(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

struct Scaling {
  Eigen::VectorXd var;   // d: x = var .* x_scaled
  Eigen::VectorXd row;   // e: rows of A scaled by e
  double cost = 1.0;
};

// Modified Ruiz equilibration of the stacked problem data, in place.
Scaling ruiz_equilibrate(Eigen::MatrixXd& H, Eigen::VectorXd& g, Eigen::MatrixXd& A,
                         Eigen::VectorXd& l, Eigen::VectorXd& u) {
  const int n = static_cast<int>(H.rows());
  const int m = static_cast<int>(A.rows());
  Scaling s;
  s.var = Eigen::VectorXd::Ones(n);
  s.row = Eigen::VectorXd::Ones(m);

  for (int sweep = 0; sweep < 10; ++sweep) {
    Eigen::VectorXd dv(n), de(m);
    for (int j = 0; j < n; ++j) {
      double nj = H.col(j).cwiseAbs().maxCoeff();
      if (m > 0) nj = std::max(nj, A.col(j).cwiseAbs().maxCoeff());
      dv[j] = nj < 1e-12 ? 1.0 : 1.0 / std::sqrt(clamp(nj, 1e-8, 1e8));
    }
    for (int i = 0; i < m; ++i) {
      const double ni = A.row(i).cwiseAbs().maxCoeff();
      de[i] = ni < 1e-12 ? 1.0 : 1.0 / std::sqrt(clamp(ni, 1e-8, 1e8));
    }
    H = dv.asDiagonal() * H * dv.asDiagonal();
    g = dv.cwiseProduct(g);
    if (m > 0) {
      A = de.asDiagonal() * A * dv.asDiagonal();
      l = de.cwiseProduct(l);
      u = de.cwiseProduct(u);
    }
    s.var = s.var.cwiseProduct(dv);
    s.row = s.row.cwiseProduct(de);
  }

  double h_norm = 0.0;
  for (int j = 0; j < n; ++j) h_norm += H.col(j).cwiseAbs().maxCoeff();
  h_norm /= std::max(1, n);
  const double denom = std::max(h_norm, inf_norm(g));
  s.cost = denom < 1e-12 ? 1.0 : 1.0 / clamp(denom, 1e-8, 1e8);
  H *= s.cost;
  g *= s.cost;
  return s;
}

Eigen::VectorXd clip(const Eigen::VectorXd& v, const Eigen::VectorXd& lo,
                     const Eigen::VectorXd& hi) {
  return v.cwiseMax(lo).cwiseMin(hi);
}

}  // namespace

void QpProblem::validate() const {
  const int n = num_vars();
  if (n <= 0) throw std::invalid_argument("qp: problem has no variables");
  if (H.cols() != n || g.size() != n) {
    throw std::invalid_argument("qp: H and g dimensions are inconsistent");
  }
  const double h_scale = std::max(1.0, H.cwiseAbs().maxCoeff());
  if (((H - H.transpose()).cwiseAbs().maxCoeff()) > 1e-12 * h_scale) {
    throw std::invalid_argument("qp: H is not symmetric");
  }
  if (A_eq.rows() != b_eq.size() || (A_eq.rows() > 0 && A_eq.cols() != n)) {
    throw std::invalid_argument("qp: equality block dimensions are inconsistent");
  }
  if (A_in.rows() != lb.size() || A_in.rows() != ub.size() ||
      (A_in.rows() > 0 && A_in.cols() != n)) {
    throw std::invalid_argument("qp: inequality block dimensions are inconsistent");
  }
  for (int i = 0; i < num_in(); ++i) {
    if (lb[i] > ub[i]) {
      std::ostringstream msg;
      msg << "qp: inconsistent bounds in row " << i << " (lb " << lb[i] << " > ub " << ub[i]
          << ")";
      throw std::invalid_argument(msg.str());
    }
  }
}

double KktResiduals::max_residual() const {
  return std::max(std::max(stationarity, primal_eq), std::max(primal_in, complementarity));
}

KktResiduals kkt_residuals(const QpProblem& p, const QpSolution& s) {
  KktResiduals r;
  Eigen::VectorXd grad = p.H * s.primal + p.g;
  if (p.num_eq() > 0) grad += p.A_eq.transpose() * s.dual_eq;
  if (p.num_in() > 0) grad += p.A_in.transpose() * s.dual_in;
  r.stationarity = inf_norm(grad);
  if (p.num_eq() > 0) r.primal_eq = inf_norm(p.A_eq * s.primal - p.b_eq);
  if (p.num_in() > 0) {
    const Eigen::VectorXd v = p.A_in * s.primal;
    for (int i = 0; i < p.num_in(); ++i) {
      const double viol =
          std::max(std::max(p.lb[i] - v[i], v[i] - p.ub[i]), 0.0);
      r.primal_in = std::max(r.primal_in, viol);
      const double y = s.dual_in[i];
      if (y > 0.0) {
        r.complementarity = std::max(
            r.complementarity, std::isfinite(p.ub[i]) ? std::abs(y * (p.ub[i] - v[i])) : y);
      } else if (y < 0.0) {
        r.complementarity = std::max(
            r.complementarity, std::isfinite(p.lb[i]) ? std::abs(y * (v[i] - p.lb[i])) : -y);
      }
    }
  }
  return r;
}

namespace {

struct AdmmData {
  // Unscaled stacked constraints [A_eq; A_in].
  Eigen::MatrixXd A;
  Eigen::VectorXd l, u;
  // Scaled copies used by the iteration.
  Eigen::MatrixXd Hs, As;
  Eigen::VectorXd gs, ls, us;
  Scaling scaling;
  std::vector<bool> is_eq;
};

QpSolution finish(const QpProblem& p, QpSolution sol) {
  sol.objective = 0.5 * sol.primal.dot(p.H * sol.primal) + p.g.dot(sol.primal);
  return sol;
}

// Active-set refinement seeded from the projected iterate: rows clipped at
// a bound enter the working set (the projection clips exactly, so the test
// needs only ulp-level slack). Each round solves the reduced KKT system,
// then adds violated rows and drops rows whose multiplier has the wrong
// sign, until the set settles. Returns the best refined solution seen, or
// nothing when every solve broke down numerically.
std::optional<QpSolution> polish_candidate(const QpProblem& p, const AdmmData& data,
                                           const QpSolution& sol,
                                           const Eigen::VectorXd& projected,
                                           bool allow_additions = false) {
  const int n = p.num_vars();
  const int m_eq = p.num_eq();
  const int m_in = p.num_in();

  enum : char { kFree = 0, kLower = 1, kUpper = 2 };
  std::vector<char> state(m_in, kFree);
  for (int i = 0; i < m_in; ++i) {
    const double z = projected[m_eq + i];
    if (std::isfinite(p.lb[i]) && z - p.lb[i] <= 1e-9 * (1.0 + std::abs(p.lb[i]))) {
      state[i] = kLower;
    } else if (std::isfinite(p.ub[i]) && p.ub[i] - z <= 1e-9 * (1.0 + std::abs(p.ub[i]))) {
      state[i] = kUpper;
    }
  }

  std::optional<QpSolution> best;
  double best_residual = std::numeric_limits<double>::infinity();

  const int max_rounds = allow_additions ? 8 : 4;
  for (int round = 0; round < max_rounds; ++round) {
    std::vector<int> rows;
    std::vector<double> rhs;
    for (int i = 0; i < m_eq; ++i) {
      rows.push_back(i);
      rhs.push_back(p.b_eq[i]);
    }
    for (int i = 0; i < m_in; ++i) {
      if (state[i] == kLower) {
        rows.push_back(m_eq + i);
        rhs.push_back(p.lb[i]);
      } else if (state[i] == kUpper) {
        rows.push_back(m_eq + i);
        rhs.push_back(p.ub[i]);
      }
    }
    const int na = static_cast<int>(rows.size());

    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + na, n + na);
    K.topLeftCorner(n, n) = p.H;
    Eigen::VectorXd b(n + na);
    b.head(n) = -p.g;
    for (int k = 0; k < na; ++k) {
      K.block(n + k, 0, 1, n) = data.A.row(rows[k]);
      K.block(0, n + k, n, 1) = data.A.row(rows[k]).transpose();
      b[n + k] = rhs[k];
    }

    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(K);
    Eigen::VectorXd v = cod.solve(b);
    v += cod.solve(b - K * v);  // one refinement pass
    if (!v.allFinite()) break;

    QpSolution cand = sol;
    cand.primal = v.head(n);
    cand.dual_eq = v.segment(n, m_eq);
    cand.dual_in.setZero();
    for (int k = m_eq; k < na; ++k) {
      cand.dual_in[rows[k] - m_eq] = v[n + k];
    }
    cand.polished = true;

    const double residual = kkt_residuals(p, cand).max_residual();
    if (std::getenv("ETMG_QP_DEBUG")) {
      const KktResiduals r = kkt_residuals(p, cand);
      std::fprintf(stderr, "  round %d: na=%d stat=%.2e peq=%.2e pin=%.2e comp=%.2e\n", round,
                   na, r.stationarity, r.primal_eq, r.primal_in, r.complementarity);
    }
    if (std::isfinite(residual) && residual < best_residual) {
      best_residual = residual;
      best = cand;
    }

    // Dropping wrong-signed rows is always safe. Adding violated rows is
    // only stable from near-optimal seeds (interior-point points); from
    // rough splitting iterates, wholesale pinning of the coupled state
    // rows destabilizes the reduced system, so additions stay off there.
    bool changed = false;
    for (int i = 0; i < m_in; ++i) {
      if (state[i] == kLower && cand.dual_in[i] > 1e-9) {
        state[i] = kFree;
        changed = true;
      } else if (state[i] == kUpper && cand.dual_in[i] < -1e-9) {
        state[i] = kFree;
        changed = true;
      }
    }
    if (allow_additions) {
      const Eigen::VectorXd values = p.A_in * cand.primal;
      std::vector<std::pair<double, int>> violated;  // violation, +-(row+1)
      for (int i = 0; i < m_in; ++i) {
        if (state[i] != kFree) continue;
        if (std::isfinite(p.lb[i])) {
          const double v = p.lb[i] - values[i];
          if (v > 1e-12 * (1.0 + std::abs(p.lb[i]))) violated.push_back({v, -(i + 1)});
        }
        if (std::isfinite(p.ub[i])) {
          const double v = values[i] - p.ub[i];
          if (v > 1e-12 * (1.0 + std::abs(p.ub[i]))) violated.push_back({v, i + 1});
        }
      }
      std::sort(violated.begin(), violated.end(),
                [](const auto& a, const auto& b) { return a.first > b.first; });
      const int add_cap = 32;
      for (int k = 0; k < std::min<int>(add_cap, static_cast<int>(violated.size())); ++k) {
        const int code = violated[k].second;
        state[std::abs(code) - 1] = code < 0 ? kLower : kUpper;
        changed = true;
      }
    }
    if (!changed) break;
  }
  return best;
}

// Dense predictor-corrector interior-point refinement. Used when the
// splitting iteration cannot certify the requested accuracy; converges to
// tight KKT residuals in a few tens of Newton steps on problems of this
// scale, at the price of a factorization per step.
std::optional<QpSolution> interior_point_solve(const QpProblem& p, double tol,
                                               const Eigen::VectorXd& warm_x) {
  const int n = p.num_vars();
  const int me = p.num_eq();
  const int mi = p.num_in();
  if (mi == 0) return std::nullopt;

  const Eigen::MatrixXd& H = p.H;
  const Eigen::MatrixXd& C = p.A_in;

  std::vector<bool> has_l(mi), has_u(mi);
  int n_comp = 0;
  for (int i = 0; i < mi; ++i) {
    has_l[i] = std::isfinite(p.lb[i]);
    has_u[i] = std::isfinite(p.ub[i]);
    n_comp += static_cast<int>(has_l[i]) + static_cast<int>(has_u[i]);
  }
  if (n_comp == 0) return std::nullopt;

  Eigen::VectorXd x = warm_x.size() == n ? warm_x : Eigen::VectorXd::Zero(n);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(me);
  Eigen::VectorXd sl = Eigen::VectorXd::Ones(mi);
  Eigen::VectorXd su = Eigen::VectorXd::Ones(mi);
  Eigen::VectorXd zl = Eigen::VectorXd::Zero(mi);
  Eigen::VectorXd zu = Eigen::VectorXd::Zero(mi);
  {
    // Slack floors keep the start safely interior even when the warm point
    // sits on the boundary, which would otherwise stall the centering.
    const Eigen::VectorXd cx = C * x;
    for (int i = 0; i < mi; ++i) {
      if (has_l[i]) {
        sl[i] = std::max(cx[i] - p.lb[i], 1e-1 * (1.0 + std::abs(p.lb[i])));
        zl[i] = 1.0;
      }
      if (has_u[i]) {
        su[i] = std::max(p.ub[i] - cx[i], 1e-1 * (1.0 + std::abs(p.ub[i])));
        zu[i] = 1.0;
      }
    }
  }

  const double tol_inner = std::min(tol, 1e-9);
  double best_mu = std::numeric_limits<double>::infinity();
  int stall = 0;

  for (int iter = 0; iter < 60; ++iter) {
    const Eigen::VectorXd cx = C * x;
    Eigen::VectorXd rd = H * x + p.g + C.transpose() * (zu - zl);
    if (me > 0) rd += p.A_eq.transpose() * y;
    const Eigen::VectorXd rp =
        me > 0 ? Eigen::VectorXd(p.A_eq * x - p.b_eq) : Eigen::VectorXd();
    Eigen::VectorXd rl = Eigen::VectorXd::Zero(mi);
    Eigen::VectorXd ru = Eigen::VectorXd::Zero(mi);
    double mu = 0.0;
    for (int i = 0; i < mi; ++i) {
      if (has_l[i]) {
        rl[i] = cx[i] - sl[i] - p.lb[i];
        mu += sl[i] * zl[i];
      }
      if (has_u[i]) {
        ru[i] = cx[i] + su[i] - p.ub[i];
        mu += su[i] * zu[i];
      }
    }
    mu /= n_comp;

    const double scale_d = 1.0 + std::max(inf_norm(H * x), inf_norm(p.g));
    const double scale_p = 1.0 + inf_norm(cx);
    const double res_p =
        std::max({me > 0 ? inf_norm(rp) : 0.0, inf_norm(rl), inf_norm(ru)});
    if (inf_norm(rd) <= tol_inner * scale_d && res_p <= tol_inner * scale_p &&
        mu <= tol_inner * scale_d) {
      break;
    }
    if (mu < best_mu * 0.97) {
      best_mu = mu;
      stall = 0;
    } else if (++stall >= 10) {
      break;
    }

    Eigen::VectorXd d = Eigen::VectorXd::Zero(mi);
    for (int i = 0; i < mi; ++i) {
      if (has_l[i]) d[i] += zl[i] / sl[i];
      if (has_u[i]) d[i] += zu[i] / su[i];
    }

    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n + me, n + me);
    M.topLeftCorner(n, n) = H;
    M.topLeftCorner(n, n).noalias() += C.transpose() * d.asDiagonal() * C;
    if (me > 0) {
      M.topRightCorner(n, me) = p.A_eq.transpose();
      M.bottomLeftCorner(me, n) = p.A_eq;
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(M);

    auto solve_direction = [&](const Eigen::VectorXd& rc_l, const Eigen::VectorXd& rc_u) {
      Eigen::VectorXd corr = Eigen::VectorXd::Zero(mi);
      for (int i = 0; i < mi; ++i) {
        if (has_l[i]) corr[i] += (rc_l[i] + zl[i] * rl[i]) / sl[i];
        if (has_u[i]) corr[i] += (zu[i] * ru[i] - rc_u[i]) / su[i];
      }
      Eigen::VectorXd rhs(n + me);
      rhs.head(n) = -rd - C.transpose() * corr;
      if (me > 0) rhs.tail(me) = -rp;
      const Eigen::VectorXd sol_xy = lu.solve(rhs);
      struct Direction {
        Eigen::VectorXd dx, dy, dsl, dsu, dzl, dzu;
      } dir;
      dir.dx = sol_xy.head(n);
      dir.dy = sol_xy.tail(me);
      const Eigen::VectorXd cdx = C * dir.dx;
      dir.dsl = Eigen::VectorXd::Zero(mi);
      dir.dsu = Eigen::VectorXd::Zero(mi);
      dir.dzl = Eigen::VectorXd::Zero(mi);
      dir.dzu = Eigen::VectorXd::Zero(mi);
      for (int i = 0; i < mi; ++i) {
        if (has_l[i]) {
          dir.dsl[i] = cdx[i] + rl[i];
          dir.dzl[i] = -(rc_l[i] + zl[i] * dir.dsl[i]) / sl[i];
        }
        if (has_u[i]) {
          dir.dsu[i] = -ru[i] - cdx[i];
          dir.dzu[i] = -(rc_u[i] + zu[i] * dir.dsu[i]) / su[i];
        }
      }
      return dir;
    };

    auto max_step = [&](const Eigen::VectorXd& v, const Eigen::VectorXd& dv,
                        const std::vector<bool>& mask) {
      double a = 1.0;
      for (int i = 0; i < mi; ++i) {
        if (mask[i] && dv[i] < 0.0) a = std::min(a, -v[i] / dv[i]);
      }
      return a;
    };

    // Affine predictor.
    Eigen::VectorXd rcl_aff = Eigen::VectorXd::Zero(mi);
    Eigen::VectorXd rcu_aff = Eigen::VectorXd::Zero(mi);
    for (int i = 0; i < mi; ++i) {
      if (has_l[i]) rcl_aff[i] = sl[i] * zl[i];
      if (has_u[i]) rcu_aff[i] = su[i] * zu[i];
    }
    const auto aff = solve_direction(rcl_aff, rcu_aff);
    const double ap_aff = std::min(max_step(sl, aff.dsl, has_l), max_step(su, aff.dsu, has_u));
    const double ad_aff = std::min(max_step(zl, aff.dzl, has_l), max_step(zu, aff.dzu, has_u));
    double mu_aff = 0.0;
    for (int i = 0; i < mi; ++i) {
      if (has_l[i]) mu_aff += (sl[i] + ap_aff * aff.dsl[i]) * (zl[i] + ad_aff * aff.dzl[i]);
      if (has_u[i]) mu_aff += (su[i] + ap_aff * aff.dsu[i]) * (zu[i] + ad_aff * aff.dzu[i]);
    }
    mu_aff /= n_comp;
    const double sigma_c = std::pow(std::max(mu_aff, 0.0) / std::max(mu, 1e-300), 3.0);

    // Combined corrector step.
    Eigen::VectorXd rcl = rcl_aff;
    Eigen::VectorXd rcu = rcu_aff;
    for (int i = 0; i < mi; ++i) {
      if (has_l[i]) rcl[i] += aff.dsl[i] * aff.dzl[i] - sigma_c * mu;
      if (has_u[i]) rcu[i] += aff.dsu[i] * aff.dzu[i] - sigma_c * mu;
    }
    const auto dir = solve_direction(rcl, rcu);
    const double eta = 0.999;
    const double ap =
        std::min(1.0, eta * std::min(max_step(sl, dir.dsl, has_l), max_step(su, dir.dsu, has_u)));
    const double ad =
        std::min(1.0, eta * std::min(max_step(zl, dir.dzl, has_l), max_step(zu, dir.dzu, has_u)));
    if (!dir.dx.allFinite() || !std::isfinite(ap) || !std::isfinite(ad)) break;

    x += ap * dir.dx;
    if (me > 0) y += ad * dir.dy;
    for (int i = 0; i < mi; ++i) {
      if (has_l[i]) {
        sl[i] += ap * dir.dsl[i];
        zl[i] += ad * dir.dzl[i];
      }
      if (has_u[i]) {
        su[i] += ap * dir.dsu[i];
        zu[i] += ad * dir.dzu[i];
      }
    }
  }

  QpSolution out;
  out.primal = x;
  out.dual_eq = y;
  out.dual_in = zu - zl;
  out.status = QpStatus::Optimal;
  out.polished = true;
  if (!x.allFinite()) return std::nullopt;
  return out;
}

// Interior-point pass followed by an exact reduced-KKT solve on the active
// set it identifies (rows whose slack collapsed). Returns the better of the
// two by worst-case KKT residual.
std::optional<QpSolution> refine_via_interior_point(const QpProblem& p, const AdmmData& data,
                                                    double tol,
                                                    const Eigen::VectorXd& warm_x) {
  auto cand = interior_point_solve(p, tol, warm_x);
  if (!cand) return std::nullopt;

  const int m_eq = p.num_eq();
  Eigen::VectorXd projected(m_eq + p.num_in());
  if (m_eq > 0) projected.head(m_eq) = p.A_eq * cand->primal;
  Eigen::VectorXd values = p.A_in * cand->primal;
  for (int i = 0; i < p.num_in(); ++i) {
    if (std::isfinite(p.lb[i]) && values[i] - p.lb[i] <= 1e-6 * (1.0 + std::abs(p.lb[i]))) {
      values[i] = p.lb[i];
    } else if (std::isfinite(p.ub[i]) &&
               p.ub[i] - values[i] <= 1e-6 * (1.0 + std::abs(p.ub[i]))) {
      values[i] = p.ub[i];
    }
  }
  projected.tail(p.num_in()) = values;

  if (auto snapped = polish_candidate(p, data, *cand, projected, true)) {
    if (kkt_residuals(p, *snapped).max_residual() < kkt_residuals(p, *cand).max_residual()) {
      return snapped;
    }
  }
  return cand;
}

// Relative optimality test of a candidate solution against `tol`.
bool meets_tolerance(const QpProblem& p, const QpSolution& sol, double tol) {
  const KktResiduals res = kkt_residuals(p, sol);
  Eigen::VectorXd grad_terms = p.H * sol.primal;
  double dual_scale = std::max(inf_norm(grad_terms), inf_norm(p.g));
  if (p.num_eq() > 0) {
    dual_scale = std::max(dual_scale, inf_norm(p.A_eq.transpose() * sol.dual_eq));
  }
  if (p.num_in() > 0) {
    dual_scale = std::max(dual_scale, inf_norm(p.A_in.transpose() * sol.dual_in));
  }
  double primal_scale = 0.0;
  if (p.num_eq() > 0) {
    primal_scale = std::max(primal_scale, inf_norm(p.A_eq * sol.primal));
  }
  if (p.num_in() > 0) {
    primal_scale = std::max(primal_scale, inf_norm(p.A_in * sol.primal));
  }
  const double eps_dual = tol * (1.0 + dual_scale);
  const double eps_prim = tol * (1.0 + primal_scale);
  double dual_norm = inf_norm(sol.dual_eq);
  dual_norm = std::max(dual_norm, inf_norm(sol.dual_in));
  const double eps_comp = std::max(eps_prim, eps_dual) * (1.0 + dual_norm);
  return res.stationarity <= eps_dual && res.primal_eq <= eps_prim &&
         res.primal_in <= eps_prim && res.complementarity <= eps_comp;
}

}  // namespace

QpSolution solve_qp(const QpProblem& p, const QpSettings& settings) {
  p.validate();
  const int n = p.num_vars();
  const int m_eq = p.num_eq();
  const int m_in = p.num_in();
  const int m = m_eq + m_in;

  {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(p.H);
    const double scale = std::max(1.0, p.H.cwiseAbs().maxCoeff());
    if (ldlt.info() == Eigen::NumericalIssue || ldlt.vectorD().minCoeff() < -1e-8 * scale) {
      throw std::invalid_argument("qp: H is not positive semidefinite");
    }
  }
  if (settings.initial_primal.size() != 0 && settings.initial_primal.size() != n) {
    throw std::invalid_argument("qp: warm start vector has the wrong dimension");
  }

  QpSolution sol;
  sol.primal = Eigen::VectorXd::Zero(n);
  sol.dual_eq = Eigen::VectorXd::Zero(m_eq);
  sol.dual_in = Eigen::VectorXd::Zero(m_in);
  sol.rho_final = settings.rho;

  if (m == 0) {
    Eigen::MatrixXd Hr = p.H;
    const double reg = 1e-12 * std::max(1.0, p.H.cwiseAbs().maxCoeff());
    Hr.diagonal().array() += reg;
    sol.primal = Eigen::LDLT<Eigen::MatrixXd>(Hr).solve(-p.g);
    if (inf_norm(p.H * sol.primal + p.g) > settings.tol * (1.0 + inf_norm(p.g))) {
      throw SolverError("qp: unconstrained problem is unbounded or singular");
    }
    sol.status = QpStatus::Optimal;
    return finish(p, sol);
  }

  // Direct KKT fast path when only equality constraints are present.
  if (m_in == 0) {
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + m_eq, n + m_eq);
    K.topLeftCorner(n, n) = p.H;
    K.topRightCorner(n, m_eq) = p.A_eq.transpose();
    K.bottomLeftCorner(m_eq, n) = p.A_eq;
    Eigen::VectorXd b(n + m_eq);
    b.head(n) = -p.g;
    b.tail(m_eq) = p.b_eq;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
    if (lu.isInvertible()) {
      const Eigen::VectorXd v = lu.solve(b);
      sol.primal = v.head(n);
      sol.dual_eq = v.tail(m_eq);
      const auto res = kkt_residuals(p, sol);
      if (res.primal_eq > settings.tol * (1.0 + inf_norm(p.b_eq))) {
        sol.status = QpStatus::Infeasible;
        sol.objective = std::numeric_limits<double>::quiet_NaN();
        return sol;
      }
      sol.status = QpStatus::Optimal;
      return finish(p, sol);
    }
    // Singular KKT (redundant equalities); fall through to the splitting
    // iteration, which handles them as two-sided rows.
  }

  AdmmData data;
  data.A.resize(m, n);
  data.l.resize(m);
  data.u.resize(m);
  if (m_eq > 0) {
    data.A.topRows(m_eq) = p.A_eq;
    data.l.head(m_eq) = p.b_eq;
    data.u.head(m_eq) = p.b_eq;
  }
  if (m_in > 0) {
    data.A.bottomRows(m_in) = p.A_in;
    data.l.tail(m_in) = p.lb;
    data.u.tail(m_in) = p.ub;
  }
  data.is_eq.resize(m);
  for (int i = 0; i < m; ++i) data.is_eq[i] = (data.l[i] == data.u[i]);

  data.Hs = p.H;
  data.gs = p.g;
  data.As = data.A;
  data.ls = data.l;
  data.us = data.u;
  if (settings.scale) {
    data.scaling = ruiz_equilibrate(data.Hs, data.gs, data.As, data.ls, data.us);
  } else {
    data.scaling.var = Eigen::VectorXd::Ones(n);
    data.scaling.row = Eigen::VectorXd::Ones(m);
  }

  const double sigma = settings.sigma;
  const double alpha = settings.over_relaxation;
  double rho_base = settings.rho > 0.0 ? settings.rho : 0.1;

  auto rho_vector = [&](double base) {
    Eigen::VectorXd rho(m);
    for (int i = 0; i < m; ++i) rho[i] = data.is_eq[i] ? base * 1e3 : base;
    return rho;
  };
  Eigen::VectorXd rho = rho_vector(rho_base);

  Eigen::LLT<Eigen::MatrixXd> llt;
  auto refactor = [&]() {
    Eigen::MatrixXd M = data.Hs;
    M.diagonal().array() += sigma;
    const Eigen::MatrixXd Aw = rho.asDiagonal() * data.As;
    M.noalias() += data.As.transpose() * Aw;
    llt.compute(M);
    if (llt.info() != Eigen::Success) {
      throw SolverError("qp: failed to factor the splitting system");
    }
  };
  refactor();

  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  if (settings.initial_primal.size() == n) {
    x = settings.initial_primal.cwiseQuotient(data.scaling.var);
  }
  Eigen::VectorXd z = clip(data.As * x, data.ls, data.us);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(m);

  const double eps_inf = 1e-8;
  const int check_every = 10;
  const int rho_every = 50;
  int next_polish = 50;
  bool converged = false;
  int iter = 0;
  Eigen::VectorXd dx = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd dy = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd zu = Eigen::VectorXd::Zero(m);

  for (iter = 1; iter <= settings.max_iter; ++iter) {
    Eigen::VectorXd rhs = sigma * x - data.gs;
    rhs.noalias() += data.As.transpose() * (rho.cwiseProduct(z) - y);
    const Eigen::VectorXd xp = llt.solve(rhs);
    const Eigen::VectorXd zt = data.As * xp;
    const Eigen::VectorXd xn = alpha * xp + (1.0 - alpha) * x;
    const Eigen::VectorXd w = alpha * zt + (1.0 - alpha) * z;
    const Eigen::VectorXd zn = clip(w + y.cwiseQuotient(rho), data.ls, data.us);
    const Eigen::VectorXd yn = y + rho.cwiseProduct(w - zn);

    dx = xn - x;
    dy = yn - y;
    x = xn;
    z = zn;
    y = yn;

    if (iter % check_every != 0 && iter != settings.max_iter) continue;

    const Eigen::VectorXd xu = data.scaling.var.cwiseProduct(x);
    zu = z.cwiseQuotient(data.scaling.row);
    const Eigen::VectorXd yu = data.scaling.row.cwiseProduct(y) / data.scaling.cost;
    const Eigen::VectorXd Ax = data.A * xu;
    const Eigen::VectorXd Hx = p.H * xu;
    const Eigen::VectorXd Aty = data.A.transpose() * yu;

    const double r_prim = inf_norm(Ax - zu);
    const double r_dual = inf_norm(Hx + p.g + Aty);
    const double eps_prim = settings.tol * (1.0 + std::max(inf_norm(Ax), inf_norm(zu)));
    const double eps_dual =
        settings.tol * (1.0 + std::max(std::max(inf_norm(Hx), inf_norm(Aty)), inf_norm(p.g)));

    sol.primal = xu;
    sol.dual_eq = yu.head(m_eq);
    sol.dual_in = yu.tail(m_in);
    sol.iterations = iter;
    sol.rho_final = rho_base;

    if (r_prim <= eps_prim && r_dual <= eps_dual) {
      converged = true;
      break;
    }

    // The splitting iteration settles on the active set long before the
    // duals converge; once the polished solution passes the optimality
    // test we can stop early.
    if (settings.polish && iter >= next_polish) {
      if (auto cand = polish_candidate(p, data, sol, zu)) {
        if (meets_tolerance(p, *cand, settings.tol)) {
          cand->status = QpStatus::Optimal;
          cand->iterations = iter;
          cand->rho_final = rho_base;
          return finish(p, *cand);
        }
      }
      next_polish *= 2;
      // Hard problems (coupled near-dependent active rows) defeat the
      // reduced-KKT polish; refine through the interior-point pass instead.
      if (iter >= 400) {
        if (auto cand = refine_via_interior_point(p, data, settings.tol, sol.primal)) {
          if (std::getenv("ETMG_QP_DEBUG")) {
            const KktResiduals r = kkt_residuals(p, *cand);
            std::fprintf(stderr, "ipm@%d: stat=%.2e peq=%.2e pin=%.2e comp=%.2e ok=%d\n", iter,
                         r.stationarity, r.primal_eq, r.primal_in, r.complementarity,
                         static_cast<int>(meets_tolerance(p, *cand, settings.tol)));
          }
          if (meets_tolerance(p, *cand, settings.tol)) {
            cand->iterations = iter;
            cand->rho_final = rho_base;
            return finish(p, *cand);
          }
        }
      }
    }

    // Primal infeasibility certificate from the dual increment.
    const Eigen::VectorXd dyu = data.scaling.row.cwiseProduct(dy) / data.scaling.cost;
    const double ndy = inf_norm(dyu);
    if (ndy > 1e-14) {
      bool certificate = inf_norm(data.A.transpose() * dyu) <= eps_inf * ndy;
      double support = 0.0;
      for (int i = 0; i < m && certificate; ++i) {
        const double pos = std::max(dyu[i], 0.0);
        const double neg = std::min(dyu[i], 0.0);
        if (std::isfinite(data.u[i])) {
          support += data.u[i] * pos;
        } else if (pos > eps_inf * ndy) {
          certificate = false;
        }
        if (std::isfinite(data.l[i])) {
          support += data.l[i] * neg;
        } else if (-neg > eps_inf * ndy) {
          certificate = false;
        }
      }
      if (certificate && support <= -eps_inf * ndy) {
        sol.status = QpStatus::Infeasible;
        sol.objective = std::numeric_limits<double>::quiet_NaN();
        return sol;
      }
    }

    // Dual infeasibility certificate from the primal increment.
    const Eigen::VectorXd dxu = data.scaling.var.cwiseProduct(dx);
    const double ndx = inf_norm(dxu);
    if (ndx > 1e-14) {
      bool certificate = inf_norm(p.H * dxu) <= eps_inf * ndx &&
                         p.g.dot(dxu) <= -eps_inf * ndx;
      const Eigen::VectorXd Adx = data.A * dxu;
      for (int i = 0; i < m && certificate; ++i) {
        const bool upper_finite = std::isfinite(data.u[i]);
        const bool lower_finite = std::isfinite(data.l[i]);
        if (upper_finite && Adx[i] > eps_inf * ndx) certificate = false;
        if (lower_finite && Adx[i] < -eps_inf * ndx) certificate = false;
      }
      if (certificate) {
        sol.status = QpStatus::Infeasible;
        sol.objective = std::numeric_limits<double>::quiet_NaN();
        return sol;
      }
    }

    if (settings.adaptive_rho && iter % rho_every == 0) {
      const double pr = r_prim / std::max({inf_norm(Ax), inf_norm(zu), 1e-10});
      const double du =
          r_dual / std::max({inf_norm(Hx), inf_norm(Aty), inf_norm(p.g), 1e-10});
      const double ratio = std::sqrt(pr / std::max(du, 1e-16));
      if (std::isfinite(ratio) && (ratio > 5.0 || ratio < 0.2)) {
        rho_base = clamp(rho_base * ratio, 1e-6, 1e6);
        rho = rho_vector(rho_base);
        refactor();
      }
    }
  }

  if (!converged) {
    if (settings.polish) {
      if (auto cand = polish_candidate(p, data, sol, zu)) {
        if (meets_tolerance(p, *cand, settings.tol)) {
          cand->status = QpStatus::Optimal;
          cand->iterations = settings.max_iter;
          cand->rho_final = rho_base;
          return finish(p, *cand);
        }
      }
      if (auto cand = refine_via_interior_point(p, data, settings.tol, sol.primal)) {
        if (meets_tolerance(p, *cand, settings.tol)) {
          cand->iterations = settings.max_iter;
          cand->rho_final = rho_base;
          return finish(p, *cand);
        }
      }
    }
    sol.status = QpStatus::MaxIterations;
    sol.iterations = settings.max_iter;
    return finish(p, sol);
  }

  sol.status = QpStatus::Optimal;
  if (settings.polish) {
    if (auto cand = polish_candidate(p, data, sol, zu)) {
      if (kkt_residuals(p, *cand).max_residual() < kkt_residuals(p, sol).max_residual()) {
        sol = *cand;
      }
    }
  }
  return finish(p, sol);
}

void write_qp(const QpProblem& p, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  out.precision(17);
  auto emit_matrix = [&out](const char* name, const Eigen::MatrixXd& M) {
    out << name << "\n";
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
      for (Eigen::Index j = 0; j < M.cols(); ++j) {
        out << M(i, j) << (j + 1 < M.cols() ? " " : "");
      }
      out << "\n";
    }
  };
  auto emit_vector = [&out](const char* name, const Eigen::VectorXd& v) {
    out << name << "\n";
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      out << v[i] << (i + 1 < v.size() ? " " : "");
    }
    out << "\n";
  };
  out << "etmg-qp 1\n";
  out << "vars " << p.num_vars() << " eq " << p.num_eq() << " ineq " << p.num_in() << "\n";
  emit_matrix("H", p.H);
  emit_vector("g", p.g);
  emit_matrix("A_eq", p.A_eq);
  emit_vector("b_eq", p.b_eq);
  emit_matrix("A_in", p.A_in);
  emit_vector("lb", p.lb);
  emit_vector("ub", p.ub);
}

QpProblem read_qp(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open " + path.string());
  }
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "etmg-qp" || version != 1) {
    throw std::runtime_error(path.string() + " is not an etmg-qp v1 file");
  }
  std::string key;
  int n = 0, m_eq = 0, m_in = 0;
  in >> key >> n >> key >> m_eq >> key >> m_in;
  auto read_value = [&in, &path]() {
    std::string token;
    if (!(in >> token)) {
      throw std::runtime_error(path.string() + ": truncated numeric block");
    }
    char* end = nullptr;
    const double value = std::strtod(token.c_str(), &end);
    if (end == token.c_str() || *end != '\0') {
      throw std::runtime_error(path.string() + ": bad numeric token '" + token + "'");
    }
    return value;
  };
  auto read_matrix = [&in, &path, &read_value](const char* name, Eigen::Index rows,
                                               Eigen::Index cols) {
    std::string label;
    in >> label;
    if (label != name) {
      throw std::runtime_error(path.string() + ": expected block '" + name + "', got '" +
                               label + "'");
    }
    Eigen::MatrixXd M(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) {
        M(i, j) = read_value();
      }
    }
    return M;
  };
  QpProblem p;
  p.H = read_matrix("H", n, n);
  p.g = read_matrix("g", n, 1);
  p.A_eq = read_matrix("A_eq", m_eq, n);
  p.b_eq = read_matrix("b_eq", m_eq, 1);
  p.A_in = read_matrix("A_in", m_in, n);
  p.lb = read_matrix("lb", m_in, 1);
  p.ub = read_matrix("ub", m_in, 1);
  p.validate();
  return p;
}

}  // namespace etmg
