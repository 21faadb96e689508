#include "mts/qp.hpp"
#include <cstdlib>
#include <cstdio>

#include <Eigen/Cholesky>
#include <cmath>
#include <limits>

namespace mts {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// One-sided inequality rows Gx x + Gu u <= g for one stage.
struct RowSet {
  Mat Gx, Gu;
  Vec g;
  int rows() const { return static_cast<int>(g.size()); }
};

RowSet build_rows(const std::vector<BoxConstraint>& xb,
                  const std::vector<BoxConstraint>& ub_, const Mat& C,
                  const Mat& D, const Vec& lb, const Vec& ub, int n, int m) {
  std::vector<Eigen::RowVectorXd> gx, gu;
  std::vector<double> g;
  auto push = [&](const Eigen::RowVectorXd& rx, const Eigen::RowVectorXd& ru,
                  double rhs) {
    gx.push_back(rx);
    gu.push_back(ru);
    g.push_back(rhs);
  };
  const Eigen::RowVectorXd zx = Eigen::RowVectorXd::Zero(n);
  const Eigen::RowVectorXd zu = Eigen::RowVectorXd::Zero(m);
  for (const auto& bnd : xb)
    if (std::isfinite(bnd.lower)) {
      Eigen::RowVectorXd rx = zx;
      rx(bnd.index) = -1.0;
      push(rx, zu, -bnd.lower);
    }
  for (const auto& bnd : xb)
    if (std::isfinite(bnd.upper)) {
      Eigen::RowVectorXd rx = zx;
      rx(bnd.index) = 1.0;
      push(rx, zu, bnd.upper);
    }
  for (const auto& bnd : ub_)
    if (std::isfinite(bnd.lower)) {
      Eigen::RowVectorXd ru = zu;
      ru(bnd.index) = -1.0;
      push(zx, ru, -bnd.lower);
    }
  for (const auto& bnd : ub_)
    if (std::isfinite(bnd.upper)) {
      Eigen::RowVectorXd ru = zu;
      ru(bnd.index) = 1.0;
      push(zx, ru, bnd.upper);
    }
  for (int i = 0; i < C.rows(); ++i) {
    if (lb.size() > i && std::isfinite(lb(i)))
      push(-C.row(i), m > 0 && D.rows() > i ? Eigen::RowVectorXd(-D.row(i)) : zu,
           -lb(i));
  }
  for (int i = 0; i < C.rows(); ++i) {
    if (ub.size() > i && std::isfinite(ub(i)))
      push(C.row(i), m > 0 && D.rows() > i ? Eigen::RowVectorXd(D.row(i)) : zu,
           ub(i));
  }
  RowSet rs;
  const int p = static_cast<int>(g.size());
  rs.Gx.resize(p, n);
  rs.Gu.resize(p, m);
  rs.g.resize(p);
  for (int i = 0; i < p; ++i) {
    rs.Gx.row(i) = gx[i];
    rs.Gu.row(i) = gu[i];
    rs.g(i) = g[i];
  }
  return rs;
}

// Backward Riccati recursion + forward rollout for the equality-constrained
// problem with (possibly modified) cost data. Throws NumericalFailure when a
// reduced Hessian is not positive definite.
void riccati_kernel(const LqProblem& prob, const std::vector<Mat>& Qm,
                    const std::vector<Mat>& Sm, const std::vector<Mat>& Rm,
                    const std::vector<Vec>& qm, const std::vector<Vec>& rm,
                    const Mat& QN, const Vec& qN, const std::vector<Vec>& bm,
                    const Vec& x0, std::vector<Vec>& x, std::vector<Vec>& u,
                    std::vector<Vec>& nu) {
  const int N = prob.horizon();
  std::vector<Mat> K(N);
  std::vector<Vec> kff(N);
  Mat P = 0.5 * (QN + QN.transpose());
  Vec p = qN;
  std::vector<Mat> Pn(N + 1);
  std::vector<Vec> pn(N + 1);
  Pn[N] = P;
  pn[N] = p;
  for (int k = N - 1; k >= 0; --k) {
    const LqStage& st = prob.stages[k];
    const Mat Huu = Rm[k] + st.B.transpose() * P * st.B;
    const Mat Hux = Sm[k] + st.B.transpose() * P * st.A;
    const Vec hu = rm[k] + st.B.transpose() * (P * bm[k] + p);
    Eigen::LLT<Mat> llt(0.5 * (Huu + Huu.transpose()));
    if (llt.info() != Eigen::Success)
      throw NumericalFailure("riccati: reduced Hessian not positive definite");
    K[k] = -llt.solve(Hux);
    kff[k] = -llt.solve(hu);
    Mat Pk = Qm[k] + st.A.transpose() * P * st.A + Hux.transpose() * K[k];
    P = 0.5 * (Pk + Pk.transpose());
    p = qm[k] + st.A.transpose() * (Pn[k + 1] * bm[k] + pn[k + 1]) +
        Hux.transpose() * kff[k];
    Pn[k] = P;
    pn[k] = p;
  }
  x.assign(N + 1, Vec());
  u.assign(N, Vec());
  nu.assign(N, Vec());
  x[0] = x0;
  for (int k = 0; k < N; ++k) {
    const LqStage& st = prob.stages[k];
    u[k] = K[k] * x[k] + kff[k];
    x[k + 1] = st.A * x[k] + st.B * u[k] + bm[k];
    nu[k] = Pn[k + 1] * x[k + 1] + pn[k + 1];
  }
}

double inf_norm(const Vec& v) {
  return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>();
}

// Rows for all stages; stage-0 state parts folded into the right-hand side
// (x0 is fixed) and pure-state rows at stage 0 dropped.
std::vector<RowSet> build_all_rows(const LqProblem& prob) {
  const int N = prob.horizon();
  std::vector<RowSet> rows(N + 1);
  for (int k = 0; k < N; ++k) {
    const LqStage& st = prob.stages[k];
    rows[k] = build_rows(st.x_bounds, st.u_bounds, st.C, st.D, st.lb, st.ub,
                         st.n_x(), st.n_u());
  }
  {
    const int nN = static_cast<int>(prob.Q_N.rows());
    rows[N] = build_rows(prob.x_bounds_N, {}, Mat(), Mat(), Vec(), Vec(), nN, 0);
  }
  if (rows[0].rows() > 0) {
    rows[0].g -= rows[0].Gx * prob.x0;
    rows[0].Gx.setZero();
    std::vector<int> keep;
    for (int i = 0; i < rows[0].rows(); ++i)
      if (rows[0].Gu.row(i).cwiseAbs().sum() > 0.0) keep.push_back(i);
    RowSet pruned;
    pruned.Gx.resize(keep.size(), rows[0].Gx.cols());
    pruned.Gu.resize(keep.size(), rows[0].Gu.cols());
    pruned.g.resize(keep.size());
    for (size_t i = 0; i < keep.size(); ++i) {
      pruned.Gx.row(i) = rows[0].Gx.row(keep[i]);
      pruned.Gu.row(i) = rows[0].Gu.row(keep[i]);
      pruned.g(i) = rows[0].g(keep[i]);
    }
    rows[0] = std::move(pruned);
  }
  return rows;
}

}  // namespace

QpSolution riccati_solve(const LqProblem& prob) {
  const int N = prob.horizon();
  std::vector<Mat> Qm(N), Sm(N), Rm(N);
  std::vector<Vec> qm(N), rm(N), bm(N);
  for (int k = 0; k < N; ++k) {
    const LqStage& st = prob.stages[k];
    Qm[k] = st.Q;
    Sm[k] = st.S;
    Rm[k] = st.R;
    qm[k] = st.q;
    rm[k] = st.r;
    bm[k] = st.b;
  }
  QpSolution sol;
  try {
    riccati_kernel(prob, Qm, Sm, Rm, qm, rm, prob.Q_N, prob.q_N, bm, prob.x0,
                   sol.x, sol.u, sol.nu);
  } catch (const NumericalFailure&) {
    sol.status = QpStatus::NumericalFailure;
    return sol;
  }
  sol.status = QpStatus::Success;
  // Stationarity residual by direct substitution.
  double stat = 0.0;
  for (int k = 1; k < N; ++k) {
    const LqStage& st = prob.stages[k];
    const Vec rx = st.Q * sol.x[k] + st.S.transpose() * sol.u[k] + st.q +
                   st.A.transpose() * sol.nu[k] - sol.nu[k - 1];
    stat = std::max(stat, inf_norm(rx));
  }
  for (int k = 0; k < N; ++k) {
    const LqStage& st = prob.stages[k];
    const Vec ru = st.R * sol.u[k] + st.S * sol.x[k] + st.r +
                   st.B.transpose() * sol.nu[k];
    stat = std::max(stat, inf_norm(ru));
  }
  stat = std::max(stat, inf_norm(Vec(prob.Q_N * sol.x[N] + prob.q_N -
                                     sol.nu[N - 1])));
  sol.residuals.stationarity = stat;
  return sol;
}

QpSolution solve_structured_qp(const LqProblem& prob, double tol,
                               int max_iter) {
  const int N = prob.horizon();
  if (N < 1) throw InvalidArgument("solve_structured_qp: empty horizon");

  std::vector<RowSet> rows = build_all_rows(prob);

  int total_rows = 0;
  for (const auto& rs : rows) total_rows += rs.rows();
  if (total_rows == 0) {
    QpSolution sol = riccati_solve(prob);
    sol.lambda.assign(N + 1, Vec());
    sol.slack.assign(N + 1, Vec());
    return sol;
  }

  // Iterates.
  QpSolution sol = riccati_solve(prob);
  if (sol.status != QpStatus::Success) {
    sol.x.assign(N + 1, Vec());
    sol.u.assign(N, Vec());
    sol.nu.assign(N, Vec());
    sol.x[0] = prob.x0;
    for (int k = 0; k < N; ++k) {
      const LqStage& st = prob.stages[k];
      sol.u[k] = Vec::Zero(st.n_u());
      sol.x[k + 1] = Vec::Zero(static_cast<int>(st.A.rows()));
      sol.nu[k] = Vec::Zero(static_cast<int>(st.A.rows()));
    }
  }
  std::vector<Vec>& x = sol.x;
  std::vector<Vec>& u = sol.u;
  std::vector<Vec>& nu = sol.nu;

  // Pull the (unconstrained) warm start into the box bounds so slacks start
  // near their eventual scale; large bound violations at the start make the
  // fraction-to-boundary rule collapse.
  auto clamp_into = [](Vec& z, const std::vector<BoxConstraint>& bounds) {
    for (const auto& b : bounds) {
      if (std::isfinite(b.lower)) z(b.index) = std::max(z(b.index), b.lower);
      if (std::isfinite(b.upper)) z(b.index) = std::min(z(b.index), b.upper);
    }
  };
  for (int k = 0; k < N; ++k) {
    if (k >= 1) clamp_into(x[k], prob.stages[k].x_bounds);
    clamp_into(u[k], prob.stages[k].u_bounds);
  }
  clamp_into(x[N], prob.x_bounds_N);

  std::vector<Vec> s(N + 1), lam(N + 1);
  for (int k = 0; k <= N; ++k) {
    const RowSet& rs = rows[k];
    const int p = rs.rows();
    s[k].resize(p);
    lam[k] = Vec::Ones(p);
    if (p == 0) continue;
    Vec w = rs.g - rs.Gx * x[k];
    if (k < N) w -= rs.Gu * u[k];
    for (int i = 0; i < p; ++i) s[k](i) = std::max(w(i), 1e-2);
  }

  const double ftb_tau = 0.995;
  auto residuals = [&](KktResiduals& res, std::vector<Vec>& r_dx,
                       std::vector<Vec>& r_du, std::vector<Vec>& r_eq,
                       std::vector<Vec>& r_in) {
    res = KktResiduals{};
    r_dx.assign(N + 1, Vec());
    r_du.assign(N, Vec());
    r_eq.assign(N, Vec());
    r_in.assign(N + 1, Vec());
    for (int k = 1; k < N; ++k) {
      const LqStage& st = prob.stages[k];
      r_dx[k] = st.Q * x[k] + st.S.transpose() * u[k] + st.q +
                st.A.transpose() * nu[k] - nu[k - 1];
      if (rows[k].rows() > 0) r_dx[k] += rows[k].Gx.transpose() * lam[k];
      res.stationarity = std::max(res.stationarity, inf_norm(r_dx[k]));
    }
    r_dx[N] = prob.Q_N * x[N] + prob.q_N - nu[N - 1];
    if (rows[N].rows() > 0) r_dx[N] += rows[N].Gx.transpose() * lam[N];
    res.stationarity = std::max(res.stationarity, inf_norm(r_dx[N]));
    for (int k = 0; k < N; ++k) {
      const LqStage& st = prob.stages[k];
      r_du[k] = st.R * u[k] + st.S * x[k] + st.r + st.B.transpose() * nu[k];
      if (rows[k].rows() > 0) r_du[k] += rows[k].Gu.transpose() * lam[k];
      res.stationarity = std::max(res.stationarity, inf_norm(r_du[k]));
      r_eq[k] = st.A * x[k] + st.B * u[k] + st.b - x[k + 1];
      res.equality = std::max(res.equality, inf_norm(r_eq[k]));
    }
    for (int k = 0; k <= N; ++k) {
      const RowSet& rs = rows[k];
      if (rs.rows() == 0) continue;
      r_in[k] = rs.Gx * x[k] + s[k] - rs.g;
      if (k < N) r_in[k] += rs.Gu * u[k];
      res.inequality = std::max(res.inequality, inf_norm(r_in[k]));
      res.complementarity = std::max(
          res.complementarity, (s[k].array() * lam[k].array()).abs().maxCoeff());
    }
  };

  auto fraction_to_boundary = [](const std::vector<Vec>& v,
                                 const std::vector<Vec>& dv, double tau) {
    double alpha = 1.0;
    for (size_t k = 0; k < v.size(); ++k)
      for (int i = 0; i < v[k].size(); ++i)
        if (dv[k](i) < 0.0)
          alpha = std::min(alpha, -tau * v[k](i) / dv[k](i));
    return alpha;
  };

  std::vector<Mat> Qm(N), Sm(N), Rm(N);
  std::vector<Vec> qm(N), rm(N), bm(N);
  Mat QN_mod;
  Vec qN_mod;
  std::vector<Vec> r_dx, r_du, r_eq, r_in;

  // The barrier parameter eventually hits the accuracy floor of the Newton
  // solves; keep the best iterate seen so a late blow-up (or stagnation)
  // still returns the usable solution.
  struct Snapshot {
    std::vector<Vec> x, u, nu, s, lam;
    KktResiduals res;
    int iter = 0;
    bool set = false;
  } best;
  double best_res = std::numeric_limits<double>::infinity();
  auto finish = [&](QpStatus fallback) -> QpSolution& {
    if (best.set) {
      x = best.x;
      u = best.u;
      nu = best.nu;
      s = best.s;
      lam = best.lam;
      sol.residuals = best.res;
      sol.ip_iters = best.iter;
    }
    sol.status = best.set && sol.residuals.max() < tol ? QpStatus::Success
                                                       : fallback;
    sol.lambda = lam;
    sol.slack = s;
    return sol;
  };

  for (int iter = 0; iter < max_iter; ++iter) {
    KktResiduals res;
    residuals(res, r_dx, r_du, r_eq, r_in);
    sol.residuals = res;
    sol.ip_iters = iter;
    if (res.max() < tol) {
      sol.status = QpStatus::Success;
      sol.lambda = lam;
      sol.slack = s;
      return sol;
    }
    const bool finite = std::isfinite(res.stationarity) &&
                        std::isfinite(res.equality) &&
                        std::isfinite(res.inequality) &&
                        std::isfinite(res.complementarity);
    if (!finite || (iter > 0 && res.max() > 1e10 * (best_res + 1.0)))
      return finish(best.set ? QpStatus::MaxIterations
                             : QpStatus::NumericalFailure);
    const double prev_best = best_res;
    if (res.max() < best_res) {
      best_res = res.max();
      best = {x, u, nu, s, lam, res, iter, true};
    }

    double mu = 0.0;
    for (int k = 0; k <= N; ++k)
      if (s[k].size() > 0) mu += s[k].dot(lam[k]);
    mu /= total_rows;
    // Barrier exhausted without progress: the residual floor is set by the
    // conditioning of the Newton system, not by tol.
    if (mu < 1e-11 && res.max() >= prev_best)
      return finish(QpStatus::MaxIterations);

    // Barrier-modified stage data (Sigma = lam / s terms).
    auto assemble = [&](const std::vector<Vec>& r_comp) {
      for (int k = 0; k < N; ++k) {
        const LqStage& st = prob.stages[k];
        Qm[k] = st.Q;
        Sm[k] = st.S;
        Rm[k] = st.R;
        qm[k] = k >= 1 ? r_dx[k] : Vec::Zero(st.n_x());
        rm[k] = r_du[k];
        bm[k] = r_eq[k];
        const RowSet& rs = rows[k];
        if (rs.rows() == 0) continue;
        const Vec sigma = lam[k].cwiseQuotient(s[k]);
        Qm[k] += rs.Gx.transpose() * sigma.asDiagonal() * rs.Gx;
        Rm[k] += rs.Gu.transpose() * sigma.asDiagonal() * rs.Gu;
        Sm[k] += rs.Gu.transpose() * sigma.asDiagonal() * rs.Gx;
        const Vec corr = sigma.cwiseProduct(r_in[k]) -
                         r_comp[k].cwiseQuotient(s[k]);
        if (k >= 1) qm[k] += rs.Gx.transpose() * corr;
        rm[k] += rs.Gu.transpose() * corr;
      }
      QN_mod = prob.Q_N;
      qN_mod = r_dx[N];
      const RowSet& rsN = rows[N];
      if (rsN.rows() > 0) {
        const Vec sigma = lam[N].cwiseQuotient(s[N]);
        QN_mod += rsN.Gx.transpose() * sigma.asDiagonal() * rsN.Gx;
        qN_mod += rsN.Gx.transpose() *
                  Vec(sigma.cwiseProduct(r_in[N]) - r_comp[N].cwiseQuotient(s[N]));
      }
    };

    auto recover = [&](const std::vector<Vec>& dx, const std::vector<Vec>& du,
                       const std::vector<Vec>& r_comp, std::vector<Vec>& ds,
                       std::vector<Vec>& dlam) {
      ds.assign(N + 1, Vec());
      dlam.assign(N + 1, Vec());
      for (int k = 0; k <= N; ++k) {
        const RowSet& rs = rows[k];
        if (rs.rows() == 0) {
          ds[k] = Vec();
          dlam[k] = Vec();
          continue;
        }
        Vec step = rs.Gx * dx[k];
        if (k < N) step += rs.Gu * du[k];
        ds[k] = -r_in[k] - step;
        dlam[k] = -(r_comp[k] + lam[k].cwiseProduct(ds[k])).cwiseQuotient(s[k]);
      }
    };

    std::vector<Vec> dx, du, dnu, ds, dlam;

    try {
      // Predictor (affine scaling).
      std::vector<Vec> comp_aff(N + 1);
      for (int k = 0; k <= N; ++k)
        comp_aff[k] = s[k].cwiseProduct(lam[k]);
      assemble(comp_aff);
      riccati_kernel(prob, Qm, Sm, Rm, qm, rm, QN_mod, qN_mod, bm,
                     Vec::Zero(prob.x0.size()), dx, du, dnu);
      recover(dx, du, comp_aff, ds, dlam);

      const double a_aff = std::min(fraction_to_boundary(s, ds, 1.0),
                                    fraction_to_boundary(lam, dlam, 1.0));
      double mu_aff = 0.0;
      for (int k = 0; k <= N; ++k)
        if (s[k].size() > 0)
          mu_aff += (s[k] + a_aff * ds[k]).dot(lam[k] + a_aff * dlam[k]);
      mu_aff /= total_rows;
      const double sigma_c =
          std::pow(std::max(0.0, mu_aff / std::max(mu, 1e-300)), 3.0);

      // Corrector.
      std::vector<Vec> comp_corr(N + 1);
      for (int k = 0; k <= N; ++k) {
        comp_corr[k] = s[k].cwiseProduct(lam[k]);
        if (ds[k].size() > 0)
          comp_corr[k] += ds[k].cwiseProduct(dlam[k]) -
                          Vec::Constant(ds[k].size(), sigma_c * mu);
      }
      assemble(comp_corr);
      riccati_kernel(prob, Qm, Sm, Rm, qm, rm, QN_mod, qN_mod, bm,
                     Vec::Zero(prob.x0.size()), dx, du, dnu);
      // Iterative refinement of the condensed Newton step: the Sigma terms
      // make the system increasingly ill-conditioned as the barrier shrinks,
      // and the resulting multiplier error would floor the SQP's KKT
      // residual. The dynamics rows are exact by the rollout, so only the
      // stationarity rows need a correction solve.
      if (mu < 1e-4) {
        std::vector<Vec> ex(N), eu(N), zb(N);
        for (int k = 0; k < N; ++k) {
          const LqStage& st = prob.stages[k];
          ex[k] = k >= 1 ? Vec(Qm[k] * dx[k] + Sm[k].transpose() * du[k] +
                               qm[k] + st.A.transpose() * dnu[k] - dnu[k - 1])
                         : Vec::Zero(st.n_x());
          eu[k] = Rm[k] * du[k] + Sm[k] * dx[k] + rm[k] +
                  st.B.transpose() * dnu[k];
          zb[k] = Vec::Zero(static_cast<int>(st.A.rows()));
        }
        const Vec eN = QN_mod * dx[N] + qN_mod - dnu[N - 1];
        std::vector<Vec> cx, cu, cnu;
        riccati_kernel(prob, Qm, Sm, Rm, ex, eu, QN_mod, eN, zb,
                       Vec::Zero(prob.x0.size()), cx, cu, cnu);
        for (int k = 0; k <= N; ++k) {
          dx[k] += cx[k];
          if (k < N) {
            du[k] += cu[k];
            dnu[k] += cnu[k];
          }
        }
      }
      recover(dx, du, comp_corr, ds, dlam);
    } catch (const NumericalFailure&) {
      return finish(best.set ? QpStatus::MaxIterations
                             : QpStatus::NumericalFailure);
    }

    // A common primal-dual step keeps the stationarity residual contracting
    // on badly scaled problems (split steps let the nu/lambda cross terms
    // dominate when the cost spans many orders of magnitude).
    const double a_p = std::min(fraction_to_boundary(s, ds, ftb_tau),
                                fraction_to_boundary(lam, dlam, ftb_tau));
    const double a_d = a_p;
    if (std::getenv("MTS_QP_TRACE")) {
      double dxmax = 0;
      for (int k = 0; k <= N; ++k)
        if (dx[k].size()) dxmax = std::max(dxmax, dx[k].cwiseAbs().maxCoeff());
      // Accuracy of the Newton solve: stationarity rows of the condensed
      // system evaluated at the computed step.
      double newton_err = 0.0;
      for (int k = 1; k < N; ++k) {
        Vec e = Qm[k] * dx[k] + Sm[k].transpose() * du[k] + qm[k] +
                prob.stages[k].A.transpose() * dnu[k] - dnu[k - 1];
        newton_err = std::max(newton_err, inf_norm(e));
      }
      for (int k = 0; k < N; ++k) {
        Vec e = Rm[k] * du[k] + Sm[k] * dx[k] + rm[k] +
                prob.stages[k].B.transpose() * dnu[k];
        newton_err = std::max(newton_err, inf_norm(e));
      }
      newton_err = std::max(
          newton_err, inf_norm(Vec(QN_mod * dx[N] + qN_mod - dnu[N - 1])));
      std::fprintf(
          stderr,
          "ip it=%d res=%.3e mu=%.3e a_p=%.3e a_d=%.3e dxmax=%.3e nerr=%.3e\n",
          iter, res.max(), mu, a_p, a_d, dxmax, newton_err);
    }
    for (int k = 0; k <= N; ++k) {
      x[k] += a_p * dx[k];
      if (k < N) u[k] += a_p * du[k];
      if (k < N) nu[k] += a_d * dnu[k];
      if (s[k].size() > 0) {
        s[k] += a_p * ds[k];
        lam[k] += a_d * dlam[k];
      }
    }
  }

  {
    KktResiduals res;
    residuals(res, r_dx, r_du, r_eq, r_in);
    sol.residuals = res;
    sol.ip_iters = max_iter;
    if (res.max() < best_res) {
      best_res = res.max();
      best = {x, u, nu, s, lam, res, max_iter, true};
    }
  }
  return finish(QpStatus::MaxIterations);
}

KktResiduals evaluate_qp_point(const LqProblem& prob,
                               const std::vector<Vec>& x_in,
                               const std::vector<Vec>& u_in,
                               const std::vector<Vec>& nu,
                               const std::vector<Vec>& lambda) {
  const int N = prob.horizon();
  const std::vector<RowSet> rows = build_all_rows(prob);
  auto x_at = [&](int k) -> Vec {
    if (k < static_cast<int>(x_in.size()) && x_in[k].size() > 0) return x_in[k];
    const int n = k < N ? prob.stages[k].n_x()
                        : static_cast<int>(prob.Q_N.rows());
    return Vec::Zero(n);
  };
  auto u_at = [&](int k) -> Vec {
    if (k < static_cast<int>(u_in.size()) && u_in[k].size() > 0) return u_in[k];
    return Vec::Zero(prob.stages[k].n_u());
  };
  auto lam_at = [&](int k) -> Vec {
    if (k < static_cast<int>(lambda.size()) &&
        lambda[k].size() == rows[k].rows())
      return lambda[k];
    return Vec::Zero(rows[k].rows());
  };

  KktResiduals res;
  res.equality = inf_norm(Vec(prob.x0 - x_at(0)));
  for (int k = 1; k < N; ++k) {
    const LqStage& st = prob.stages[k];
    Vec rx = st.Q * x_at(k) + st.S.transpose() * u_at(k) + st.q +
             st.A.transpose() * nu[k] - nu[k - 1];
    if (rows[k].rows() > 0) rx += rows[k].Gx.transpose() * lam_at(k);
    res.stationarity = std::max(res.stationarity, inf_norm(rx));
  }
  {
    Vec rx = prob.Q_N * x_at(N) + prob.q_N - nu[N - 1];
    if (rows[N].rows() > 0) rx += rows[N].Gx.transpose() * lam_at(N);
    res.stationarity = std::max(res.stationarity, inf_norm(rx));
  }
  for (int k = 0; k < N; ++k) {
    const LqStage& st = prob.stages[k];
    Vec ru = st.R * u_at(k) + st.S * x_at(k) + st.r +
             st.B.transpose() * nu[k];
    if (rows[k].rows() > 0) ru += rows[k].Gu.transpose() * lam_at(k);
    res.stationarity = std::max(res.stationarity, inf_norm(ru));
    res.equality = std::max(
        res.equality,
        inf_norm(Vec(st.A * x_at(k) + st.B * u_at(k) + st.b - x_at(k + 1))));
  }
  for (int k = 0; k <= N; ++k) {
    const RowSet& rs = rows[k];
    if (rs.rows() == 0) continue;
    Vec w = rs.g - rs.Gx * x_at(k);
    if (k < N) w -= rs.Gu * u_at(k);
    const Vec lam = lam_at(k);
    for (int i = 0; i < rs.rows(); ++i) {
      res.inequality = std::max(res.inequality, std::max(0.0, -w(i)));
      res.complementarity =
          std::max(res.complementarity, std::abs(lam(i) * std::max(w(i), 0.0)));
    }
  }
  return res;
}

Mat solve_dare(const Mat& A, const Mat& B, const Mat& Q, const Mat& R,
               double tol, int max_iter) {
  Mat S = Q;
  for (int it = 0; it < max_iter; ++it) {
    const Mat BtS = B.transpose() * S;
    const Mat G = R + BtS * B;
    Eigen::LLT<Mat> llt(G);
    if (llt.info() != Eigen::Success)
      throw NumericalFailure("solve_dare: R + B'SB not positive definite");
    const Mat Snext =
        Q + A.transpose() * S * A -
        (BtS * A).transpose() * llt.solve(BtS * A);
    const Mat Ssym = 0.5 * (Snext + Snext.transpose());
    const Mat resid = Ssym - (Q + A.transpose() * Ssym * A -
                              A.transpose() * Ssym * B *
                                  Eigen::LLT<Mat>(R + B.transpose() * Ssym * B)
                                      .solve(B.transpose() * Ssym * A));
    S = Ssym;
    if (resid.cwiseAbs().maxCoeff() < tol) return S;
  }
  throw MaxIterations("solve_dare: no convergence");
}

Mat lqr_gain(const Mat& A, const Mat& B, const Mat& Q, const Mat& R) {
  const Mat S = solve_dare(A, B, Q, R);
  return (R + B.transpose() * S * B).ldlt().solve(B.transpose() * S * A);
}

}  // namespace mts
