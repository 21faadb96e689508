#pragma once

#include <cmath>

#include "mts/integrators.hpp"
#include "mts/schedule.hpp"

namespace mts {

// Least-squares stage cost: l(x,u,t) = r(x,u,t)' diag(W) r(x,u,t).
struct CostSpec {
  Vec W;    // diagonal stage weights
  Vec W_N;  // diagonal terminal weights
  std::function<Vec(const Vec& x, const Vec& u, double t)> residual;
  std::function<void(const Vec& x, const Vec& u, double t, Vec& r, Mat& Jx,
                     Mat& Ju)> residual_jac;
  std::function<Vec(const Vec& x, double t)> residual_N;
  std::function<void(const Vec& x, double t, Vec& r, Mat& Jx)> residual_N_jac;

  double stage_value(const Vec& x, const Vec& u, double t) const {
    const Vec r = residual(x, u, t);
    return r.dot(W.asDiagonal() * r);
  }
  double terminal_value(const Vec& x, double t) const {
    const Vec r = residual_N(x, t);
    return r.dot(W_N.asDiagonal() * r);
  }
};

template <class FStage, class FTerm>
CostSpec make_cost(Vec W, Vec W_N, FStage f, FTerm fN) {
  CostSpec c;
  c.W = std::move(W);
  c.W_N = std::move(W_N);
  c.residual = [f](const Vec& x, const Vec& u, double t) -> Vec {
    return f(detail::VecT<double>(x), detail::VecT<double>(u), t);
  };
  c.residual_jac = [f](const Vec& x, const Vec& u, double t, Vec& r, Mat& Jx,
                       Mat& Ju) {
    detail::VecT<Dual> xd = x.cast<Dual>();
    detail::VecT<Dual> ud = u.cast<Dual>();
    detail::VecT<Dual> r0 = f(xd, ud, t);
    const int nr = static_cast<int>(r0.size());
    r.resize(nr);
    for (int i = 0; i < nr; ++i) r(i) = r0(i).v;
    Jx.resize(nr, x.size());
    Ju.resize(nr, u.size());
    for (int j = 0; j < x.size(); ++j) {
      xd(j).d = 1.0;
      detail::VecT<Dual> rj = f(xd, ud, t);
      xd(j).d = 0.0;
      for (int i = 0; i < nr; ++i) Jx(i, j) = rj(i).d;
    }
    for (int j = 0; j < u.size(); ++j) {
      ud(j).d = 1.0;
      detail::VecT<Dual> rj = f(xd, ud, t);
      ud(j).d = 0.0;
      for (int i = 0; i < nr; ++i) Ju(i, j) = rj(i).d;
    }
  };
  c.residual_N = [fN](const Vec& x, double t) -> Vec {
    return fN(detail::VecT<double>(x), t);
  };
  c.residual_N_jac = [fN](const Vec& x, double t, Vec& r, Mat& Jx) {
    detail::VecT<Dual> xd = x.cast<Dual>();
    detail::VecT<Dual> r0 = fN(xd, t);
    const int nr = static_cast<int>(r0.size());
    r.resize(nr);
    for (int i = 0; i < nr; ++i) r(i) = r0(i).v;
    Jx.resize(nr, x.size());
    for (int j = 0; j < x.size(); ++j) {
      xd(j).d = 1.0;
      detail::VecT<Dual> rj = fN(xd, t);
      xd(j).d = 0.0;
      for (int i = 0; i < nr; ++i) Jx(i, j) = rj(i).d;
    }
  };
  return c;
}

struct BoxConstraint {
  int index = 0;
  double lower = 0.0;
  double upper = 0.0;
};

struct ConstraintSpec {
  std::vector<BoxConstraint> x_bounds;
  std::vector<BoxConstraint> u_bounds;
  // Optional two-sided affine rows: lb <= C x + D u <= ub.
  Mat C, D;
  Vec lb, ub;
  std::vector<BoxConstraint> x_bounds_N;  // terminal

  bool empty() const {
    return x_bounds.empty() && u_bounds.empty() && x_bounds_N.empty() &&
           C.rows() == 0;
  }
};

struct Phase {
  ModelDef model;
  IntegratorSpec integrator;
  CostSpec cost;
  ConstraintSpec constraints;
  int start = 0;  // stage range [start, end)
  int end = 0;
};

// Multi-phase discrete OCP description. With two phases, the projection is
// absorbed into the dynamics of interval k_bar - 1 (x_{k_bar} = phi(f(...))),
// so stages 0..k_bar-1 live in full coordinates and k_bar..N in reduced ones.
struct PhasePlan {
  SystemId system = SystemId::DiffDrive;
  int variant = 0;
  ScheduleSpec schedule;
  std::vector<Phase> phases;
  int k_bar = -1;              // -1: single phase
  ProjectionMap projection;    // set when k_bar >= 0
  bool project_initial = false;  // k_bar == 0: initial state mapped through phi

  int horizon() const { return schedule.N; }

  const Phase& stage_phase(int k) const {
    if (phases.size() == 1 || k < k_bar) return phases.front();
    return phases.back();
  }
  const Phase& interval_phase(int k) const {
    if (phases.size() == 1 || k < k_bar) return phases.front();
    return phases.back();
  }
  // True when interval k ends with the model-switch projection.
  bool switch_interval(int k) const {
    return phases.size() == 2 && k == k_bar - 1;
  }
  int n_x(int k) const {
    if (phases.size() == 1) return phases.front().model.n_x;
    return k < k_bar ? phases.front().model.n_x : phases.back().model.n_x;
  }
  int n_u(int k) const { return interval_phase(k).model.n_u; }

  int shooting_variable_count() const {
    int total = 0;
    for (int k = 0; k <= horizon(); ++k) total += n_x(k);
    for (int k = 0; k < horizon(); ++k) total += n_u(k);
    return total;
  }

  void validate() const;
};

// Experiment-level configuration: physical parameters, weights, and task
// definitions with defaults from the paper's tables.
struct SystemConfig {
  DiffDriveParams diffdrive;
  DroneParams drone;
  TrunkParams trunk;

  // Weighting matrices (diagonals).
  Vec dd_Q = (Vec(7) << 1e4, 1e4, 1e-4, 5e3, 1e-3, 0.5, 0.5).finished();
  Vec dd_Q_hat = (Vec(5) << 1e4, 1e4, 1e-4, 5e3, 1e-3).finished();
  Vec dd_R_hat = (Vec(2) << 0.5, 0.5).finished();
  Vec drone_Q = (Vec(2) << 1.0, 1.0).finished();
  Vec drone_Q_load = (Vec(2) << 0.1, 0.1).finished();
  Vec drone_R = (Vec(2) << 1e-3, 1e-3).finished();
  Vec trunk_Q = (Vec(4) << 2.0, 2.0, 0.025, 0.025).finished();
  Vec trunk_R_full = (Vec(2) << 0.5 * 0.015, 0.5 * 0.015).finished();
  Vec trunk_R_slow = (Vec(2) << 5e-6, 5e-6).finished();

  // Task setup.
  Vec dd_x0 = (Vec(7) << 1.0, 1.0, 0.0, M_PI / 2.0, 0.0, 0.0, 0.0).finished();
  Eigen::Vector2d drone_goal{1.0, 1.0};
  double trunk_ref_radius = -1.0;  // < 0: derived from chain length
  double trunk_ref_period = 2.0;
  Eigen::Vector2d trunk_ref_center{0.0, 0.0};  // used when radius >= 0
  double drone_lm_reg = 1e-4;
  // The trunk cost only sees the end-effector, so the Gauss-Newton Hessian
  // is nearly singular in joint space; a damped start keeps early steps
  // inside the region where the stiff dynamics linearize well.
  double trunk_lm_reg = 1.0;
  // Internal IRK steps per trunk shooting interval; the damping eigenvalues
  // sit near -1.4e5 1/s, where a single Gauss-Legendre step neither decays
  // the fast mode nor keeps the stage Newton solve reliably convergent.
  int trunk_irk_substeps = 4;

  // Reference for the trunk end-effector; a planar circle reachable by the
  // chain unless overridden.
  Eigen::Vector2d trunk_reference(double t) const;
  Eigen::Vector2d trunk_reference_velocity(double t) const;

  Vec initial_state(SystemId id) const;
};

PhasePlan make_baseline_plan(SystemId id, const SystemConfig& config);
PhasePlan make_mts_plan(SystemId id, const SystemConfig& config, int k_bar);
PhasePlan make_variant_plan(SystemId id, int variant, const SystemConfig& config);

// Full-model stage cost of the baseline formulation, used as the common
// reporting metric across variants.
double reporting_stage_cost(SystemId id, const SystemConfig& config,
                            const Vec& x_full, const Vec& u, double t);

}  // namespace mts
