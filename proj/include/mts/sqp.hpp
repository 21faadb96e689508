#pragma once

#include <optional>
#include <vector>

#include "mts/qp.hpp"

namespace mts {

struct SqpSettings {
  int max_sqp_iter = 50;
  double kkt_tol = 1e-6;
  double lm_reg = 0.0;   // Levenberg-Marquardt floor (multiple of identity)
  double lm_init = -1.0; // initial damping; < 0 means start at lm_reg
  double step_reduction = 0.5;
  int max_step_halvings = 10;
  double qp_tol = 1e-8;
  int qp_max_iter = 100;
  bool verbose = false;  // per-iteration trace on stderr
};

struct SqpStats {
  int iterations = 0;      // accepted SQP steps
  bool converged = false;
  bool no_progress = false;  // merit could not be reduced; best iterate kept
  KktResiduals kkt;
  double merit = 0.0;
  int qp_iters_total = 0;
};

// Per-controller solver state: the current iterate, cached linearizations,
// the structured QP buffer, and the multipliers of the last subproblem.
struct SqpWorkspace {
  std::vector<Vec> x;  // N + 1 shooting states (stage-wise dimensions)
  std::vector<Vec> u;  // N inputs
  std::vector<Vec> nu;
  std::vector<Vec> lambda;
  std::vector<StepResult> steps;  // per-interval linearization cache
  LqProblem qp;                   // subproblem buffer from the last iteration
  SqpStats stats;
  double t0 = 0.0;  // clock time of stage 0, fixes time-varying references
  bool valid = false;
};

// Gauss-Newton SQP on the multi-phase OCP. x_init must have the dimension of
// stage 0 (reduced when the plan projects the initial state; the caller maps
// through phi beforehand). On return ws holds the optimized trajectory and
// ws.u.front() is the input to apply.
SqpStats sqp_solve(const PhasePlan& plan, const Vec& x_init, double t0,
                   SqpWorkspace& ws, const SqpSettings& settings = {});

// Initialize the workspace by rolling out a nominal input (zero for every
// system; the drone carries rotor speeds in the state so zero rates hover).
void cold_start(const PhasePlan& plan, const Vec& x_init, double t0,
                SqpWorkspace& ws);

// Shift the iterate by one control period for uniform schedules (tail
// duplicated); exponential schedules reuse the iterate unshifted. Variables
// whose dimension changes across the phase boundary keep their old value.
void warm_start_shift(SqpWorkspace& ws, const PhasePlan& plan);

// KKT residuals of the plan's NLP at the workspace iterate, using the
// multipliers from the last QP solve.
KktResiduals evaluate_kkt(const SqpWorkspace& ws, const PhasePlan& plan,
                          const Vec& x_init, double t0,
                          const SqpSettings& settings = {});

// Stage cost sum plus terminal cost of the iterate (no defect penalty).
double trajectory_cost(const PhasePlan& plan, const std::vector<Vec>& x,
                       const std::vector<Vec>& u, double t0);

}  // namespace mts
