#include "mts/sqp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace mts {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double stage_time(const PhasePlan& plan, double t0, int k) {
  return t0 + plan.schedule.stage_time(k);
}

// Interval step map with the projection folded into the switch interval.
StepResult interval_step(const PhasePlan& plan, int k, const Vec& x,
                         const Vec& u) {
  const Phase& ph = plan.interval_phase(k);
  StepResult step =
      integrate_step(ph.model, x, u, plan.schedule.dts[k], ph.integrator);
  if (plan.switch_interval(k)) {
    const Mat J = plan.projection.jacobian(step.x_next);
    step.dx_dx = (J * step.dx_dx).eval();
    step.dx_du = (J * step.dx_du).eval();
    step.x_next = plan.projection.apply(step.x_next);
  }
  return step;
}

Vec interval_state(const PhasePlan& plan, int k, const Vec& x, const Vec& u) {
  const Phase& ph = plan.interval_phase(k);
  Vec xn = integrate_state(ph.model, x, u, plan.schedule.dts[k], ph.integrator);
  if (plan.switch_interval(k)) xn = plan.projection.apply(xn);
  return xn;
}

std::vector<BoxConstraint> shift_bounds(const std::vector<BoxConstraint>& in,
                                        const Vec& z) {
  std::vector<BoxConstraint> out;
  out.reserve(in.size());
  for (const auto& b : in)
    out.push_back({b.index, b.lower - z(b.index), b.upper - z(b.index)});
  return out;
}

// Gauss-Newton QP data in delta form around the iterate (x, u).
LqProblem build_qp(const PhasePlan& plan, const Vec& x_init, double t0,
                   const std::vector<Vec>& x, const std::vector<Vec>& u,
                   double reg, std::vector<StepResult>* steps_out) {
  const int N = plan.horizon();
  LqProblem qp;
  qp.stages.resize(N);
  if (steps_out) steps_out->assign(N, StepResult{});
  Vec r;
  Mat Jx, Ju;
  for (int k = 0; k < N; ++k) {
    const Phase& ph = plan.stage_phase(k);
    LqStage& st = qp.stages[k];
    StepResult step = interval_step(plan, k, x[k], u[k]);
    st.A = step.dx_dx;
    st.B = step.dx_du;
    st.b = step.x_next - x[k + 1];
    if (steps_out) (*steps_out)[k] = std::move(step);

    ph.cost.residual_jac(x[k], u[k], stage_time(plan, t0, k), r, Jx, Ju);
    const auto W = ph.cost.W.asDiagonal();
    st.Q = 2.0 * Jx.transpose() * W * Jx +
           reg * Mat::Identity(x[k].size(), x[k].size());
    st.R = 2.0 * Ju.transpose() * W * Ju +
           reg * Mat::Identity(u[k].size(), u[k].size());
    st.S = 2.0 * Ju.transpose() * W * Jx;
    st.q = 2.0 * Jx.transpose() * W * r;
    st.r = 2.0 * Ju.transpose() * W * r;

    const ConstraintSpec& con = ph.constraints;
    st.x_bounds = shift_bounds(con.x_bounds, x[k]);
    st.u_bounds = shift_bounds(con.u_bounds, u[k]);
    if (con.C.rows() > 0) {
      st.C = con.C;
      st.D = con.D;
      const Vec w = con.C * x[k] + con.D * u[k];
      st.lb = con.lb - w;
      st.ub = con.ub - w;
    }
  }
  const Phase& phN = plan.stage_phase(N);
  phN.cost.residual_N_jac(x[N], stage_time(plan, t0, N), r, Jx);
  const auto WN = phN.cost.W_N.asDiagonal();
  qp.Q_N = 2.0 * Jx.transpose() * WN * Jx +
           reg * Mat::Identity(x[N].size(), x[N].size());
  qp.q_N = 2.0 * Jx.transpose() * WN * r;
  qp.x_bounds_N = shift_bounds(phN.constraints.x_bounds_N, x[N]);
  qp.x0 = x_init - x[0];
  return qp;
}

double bound_violation(const std::vector<BoxConstraint>& bounds, const Vec& z) {
  double v = 0.0;
  for (const auto& b : bounds) {
    if (std::isfinite(b.lower)) v += std::max(0.0, b.lower - z(b.index));
    if (std::isfinite(b.upper)) v += std::max(0.0, z(b.index) - b.upper);
  }
  return v;
}

// l1 infeasibility of the iterate: initial-state mismatch, dynamics defects,
// and inequality violations. Returns +inf when an integrator step fails.
double infeasibility(const PhasePlan& plan, const Vec& x_init,
                     const std::vector<Vec>& x, const std::vector<Vec>& u) {
  const int N = plan.horizon();
  double total = (x_init - x[0]).lpNorm<1>();
  for (int k = 0; k < N; ++k) {
    try {
      total += (interval_state(plan, k, x[k], u[k]) - x[k + 1]).lpNorm<1>();
    } catch (const std::exception& e) {
      if (std::getenv("MTS_SQP_TRACE"))
        std::fprintf(stderr, "  infeas: k=%d %s |x|=%.3e |u|=%.3e\n", k,
                     e.what(), x[k].cwiseAbs().maxCoeff(),
                     u[k].cwiseAbs().maxCoeff());
      return kInf;
    }
    const ConstraintSpec& con = plan.stage_phase(k).constraints;
    total += bound_violation(con.x_bounds, x[k]);
    total += bound_violation(con.u_bounds, u[k]);
    if (con.C.rows() > 0) {
      const Vec w = con.C * x[k] + con.D * u[k];
      for (int i = 0; i < w.size(); ++i) {
        if (con.lb.size() > i && std::isfinite(con.lb(i)))
          total += std::max(0.0, con.lb(i) - w(i));
        if (con.ub.size() > i && std::isfinite(con.ub(i)))
          total += std::max(0.0, w(i) - con.ub(i));
      }
    }
  }
  total += bound_violation(plan.stage_phase(N).constraints.x_bounds_N, x[N]);
  return total;
}

std::vector<Vec> sanitized_nu(const PhasePlan& plan,
                              const std::vector<Vec>& nu) {
  const int N = plan.horizon();
  std::vector<Vec> out(N);
  for (int k = 0; k < N; ++k)
    out[k] = (k < static_cast<int>(nu.size()) &&
              nu[k].size() == plan.n_x(k + 1))
                 ? nu[k]
                 : Vec::Zero(plan.n_x(k + 1));
  return out;
}

bool iterate_matches(const PhasePlan& plan, const SqpWorkspace& ws) {
  const int N = plan.horizon();
  if (static_cast<int>(ws.x.size()) != N + 1 ||
      static_cast<int>(ws.u.size()) != N)
    return false;
  for (int k = 0; k <= N; ++k)
    if (ws.x[k].size() != plan.n_x(k)) return false;
  for (int k = 0; k < N; ++k)
    if (ws.u[k].size() != plan.n_u(k)) return false;
  return true;
}

}  // namespace

double trajectory_cost(const PhasePlan& plan, const std::vector<Vec>& x,
                       const std::vector<Vec>& u, double t0) {
  const int N = plan.horizon();
  double total = 0.0;
  for (int k = 0; k < N; ++k)
    total +=
        plan.stage_phase(k).cost.stage_value(x[k], u[k], stage_time(plan, t0, k));
  total += plan.stage_phase(N).cost.terminal_value(x[N], stage_time(plan, t0, N));
  return total;
}

void cold_start(const PhasePlan& plan, const Vec& x_init, double t0,
                SqpWorkspace& ws) {
  const int N = plan.horizon();
  ws.x.assign(N + 1, Vec());
  ws.u.assign(N, Vec());
  ws.x[0] = x_init;
  for (int k = 0; k < N; ++k) {
    ws.u[k] = Vec::Zero(plan.n_u(k));
    try {
      ws.x[k + 1] = interval_state(plan, k, ws.x[k], ws.u[k]);
    } catch (const std::exception&) {
      ws.x[k + 1] = plan.switch_interval(k) ? plan.projection.apply(ws.x[k])
                                            : ws.x[k];
    }
  }
  ws.nu.assign(N, Vec());
  for (int k = 0; k < N; ++k) ws.nu[k] = Vec::Zero(plan.n_x(k + 1));
  ws.lambda.clear();
  ws.steps.clear();
  ws.stats = SqpStats{};
  ws.t0 = t0;
  ws.valid = true;
}

void warm_start_shift(SqpWorkspace& ws, const PhasePlan& plan) {
  if (!ws.valid || !iterate_matches(plan, ws)) return;
  if (plan.schedule.mode == ScheduleMode::Exponential) return;  // reuse as-is
  const int N = plan.horizon();
  std::vector<Vec> x = ws.x, u = ws.u;
  for (int k = 0; k < N; ++k)
    if (ws.x[k + 1].size() == plan.n_x(k)) x[k] = ws.x[k + 1];
  for (int k = 0; k + 1 < N; ++k)
    if (ws.u[k + 1].size() == plan.n_u(k)) u[k] = ws.u[k + 1];
  ws.x = std::move(x);
  ws.u = std::move(u);
  ws.nu = sanitized_nu(plan, ws.nu);
  ws.lambda.clear();
}

KktResiduals evaluate_kkt(const SqpWorkspace& ws, const PhasePlan& plan,
                          const Vec& x_init, double t0,
                          const SqpSettings& settings) {
  const LqProblem qp =
      build_qp(plan, x_init, t0, ws.x, ws.u, settings.lm_reg, nullptr);
  return evaluate_qp_point(qp, {}, {}, sanitized_nu(plan, ws.nu), ws.lambda);
}

SqpStats sqp_solve(const PhasePlan& plan, const Vec& x_init, double t0,
                   SqpWorkspace& ws, const SqpSettings& settings) {
  const int N = plan.horizon();
  if (x_init.size() != plan.n_x(0))
    throw InvalidArgument("sqp_solve: initial state dimension mismatch");
  if (!ws.valid || !iterate_matches(plan, ws)) cold_start(plan, x_init, t0, ws);
  ws.t0 = t0;
  ws.nu = sanitized_nu(plan, ws.nu);

  SqpStats stats;
  double mu = 1.0;
  // Levenberg-Marquardt damping, adapted like a trust region: raised when
  // the line search rejects the step (strong nonlinearity relative to the
  // Gauss-Newton model), decayed on full steps so local convergence is
  // governed by the undamped Hessian.
  double lm = settings.lm_init >= 0.0 ? settings.lm_init : settings.lm_reg;
  for (int it = 0;; ++it) {
    ws.qp = build_qp(plan, x_init, t0, ws.x, ws.u, lm, &ws.steps);
    stats.kkt = evaluate_qp_point(ws.qp, {}, {}, ws.nu, ws.lambda);
    stats.merit = trajectory_cost(plan, ws.x, ws.u, t0);
    if (stats.kkt.max() < settings.kkt_tol) {
      stats.converged = true;
      break;
    }
    if (it >= settings.max_sqp_iter) break;

    QpSolution sol =
        solve_structured_qp(ws.qp, settings.qp_tol, settings.qp_max_iter);
    if (sol.status == QpStatus::NumericalFailure)
      throw SolverFailure("sqp_solve: QP subproblem failed numerically");
    stats.qp_iters_total += sol.ip_iters;
    // Low-accuracy QP exit: the direction may still be usable, but when its
    // residual is large relative to the gradient scale, add damping and
    // resolve rather than risking a garbage step.
    if (sol.status == QpStatus::MaxIterations) {
      double gscale = ws.qp.q_N.lpNorm<Eigen::Infinity>();
      for (const LqStage& st : ws.qp.stages)
        gscale = std::max({gscale, st.q.lpNorm<Eigen::Infinity>(),
                           st.r.lpNorm<Eigen::Infinity>()});
      if (sol.residuals.max() > 1e-6 * (1.0 + gscale)) {
        if (lm < 1e6) {
          lm = std::max(lm * 10.0, 1e-3);
          continue;
        }
        stats.no_progress = true;
        break;
      }
    }

    // Exact-penalty weight from the new multipliers.
    double nu_max = 0.0;
    for (const Vec& v : sol.nu)
      if (v.size() > 0) nu_max = std::max(nu_max, v.lpNorm<Eigen::Infinity>());
    for (const Vec& v : sol.lambda)
      if (v.size() > 0) nu_max = std::max(nu_max, v.lpNorm<Eigen::Infinity>());
    mu = std::max({mu, 2.0 * nu_max, 1.0});

    const double cost0 = trajectory_cost(plan, ws.x, ws.u, t0);
    const double infeas0 = infeasibility(plan, x_init, ws.x, ws.u);
    const double merit0 = cost0 + mu * infeas0;
    double grad_step = 0.0;
    for (int k = 0; k < N; ++k)
      grad_step += ws.qp.stages[k].q.dot(sol.x[k]) +
                   ws.qp.stages[k].r.dot(sol.u[k]);
    grad_step += ws.qp.q_N.dot(sol.x[N]);
    double descent = grad_step - mu * infeas0;
    if (descent > 0.0 && infeas0 > 1e-14) {
      mu = std::max(mu, 2.0 * grad_step / infeas0);
      descent = grad_step - mu * infeas0;
    }

    bool accepted = false;
    double alpha = 1.0;
    std::vector<Vec> xc(N + 1), uc(N);
    for (int h = 0; h <= settings.max_step_halvings; ++h) {
      for (int k = 0; k <= N; ++k) xc[k] = ws.x[k] + alpha * sol.x[k];
      for (int k = 0; k < N; ++k) uc[k] = ws.u[k] + alpha * sol.u[k];
      const double infeas_c = infeasibility(plan, x_init, xc, uc);
      if (std::isfinite(infeas_c)) {
        const double merit_c = trajectory_cost(plan, xc, uc, t0) + mu * infeas_c;
        if (settings.verbose)
          std::fprintf(stderr,
                       "  ls it=%d alpha=%.3e merit=%.10e (base %.10e) "
                       "cost=%.6e infeas=%.3e mu=%.3e descent=%.3e\n",
                       it, alpha, merit_c, merit0, merit_c - mu * infeas_c,
                       infeas_c, mu, descent);
        if (merit_c <= merit0 + 1e-4 * alpha * std::min(descent, 0.0) ||
            merit_c <= merit0 + 1e-10 * (1.0 + std::abs(merit0))) {
          accepted = true;
          break;
        }
      } else if (settings.verbose) {
        std::fprintf(stderr, "  ls it=%d alpha=%.3e integrator failure\n", it,
                     alpha);
      }
      alpha *= settings.step_reduction;
    }
    if (!accepted) {
      if (lm < 1e6) {
        lm = std::max(lm * 10.0, 1e-3);
        continue;  // same iterate, more damping
      }
      stats.no_progress = true;
      break;
    }
    if (alpha == 1.0) lm = std::max(settings.lm_reg, 0.2 * lm);
    ws.x = std::move(xc);
    ws.u = std::move(uc);
    ws.nu = sol.nu;
    ws.lambda = sol.lambda;
    ++stats.iterations;
  }
  ws.stats = stats;
  return stats;
}

}  // namespace mts
