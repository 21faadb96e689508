#pragma once

#include <vector>

#include "mts/ocp.hpp"

namespace mts {

// One stage of an OCP-structured LQ problem with cost
//   0.5 x'Qx + q'x + 0.5 u'Ru + r'u + u'Sx
// and dynamics x_{k+1} = A x + B u + b. Dimensions may vary across stages.
struct LqStage {
  Mat Q, R, S;  // S is n_u x n_x
  Vec q, r;
  Mat A, B;
  Vec b;
  std::vector<BoxConstraint> x_bounds;
  std::vector<BoxConstraint> u_bounds;
  Mat C, D;  // affine rows lb <= C x + D u <= ub
  Vec lb, ub;

  int n_x() const { return static_cast<int>(Q.rows()); }
  int n_u() const { return static_cast<int>(R.rows()); }
};

struct LqProblem {
  std::vector<LqStage> stages;  // k = 0..N-1
  Mat Q_N;
  Vec q_N;
  std::vector<BoxConstraint> x_bounds_N;
  Vec x0;  // fixed initial state

  int horizon() const { return static_cast<int>(stages.size()); }
};

struct KktResiduals {
  double stationarity = 0.0;
  double equality = 0.0;
  double inequality = 0.0;
  double complementarity = 0.0;
  double max() const {
    return std::max(std::max(stationarity, equality),
                    std::max(inequality, complementarity));
  }
};

enum class QpStatus { Success, MaxIterations, NumericalFailure };

struct QpSolution {
  std::vector<Vec> x;   // N + 1 states (x[0] = x0)
  std::vector<Vec> u;   // N inputs
  std::vector<Vec> nu;  // N dynamics multipliers (nu[k] pairs x_{k+1})
  // One multiplier/slack vector per stage, rows ordered as: x lower, x upper,
  // u lower, u upper, affine lower, affine upper (finite bounds only;
  // terminal stage has x rows only).
  std::vector<Vec> lambda;
  std::vector<Vec> slack;
  QpStatus status = QpStatus::Success;
  int ip_iters = 0;
  KktResiduals residuals;
};

// Exact solve of the equality-constrained LQ problem by backward Riccati
// recursion and forward rollout. Inequalities in the problem are ignored.
QpSolution riccati_solve(const LqProblem& prob);

// Primal-dual Mehrotra predictor-corrector interior point for the full
// problem including box and affine inequality constraints.
QpSolution solve_structured_qp(const LqProblem& prob, double tol = 1e-8,
                               int max_iter = 100);

// KKT residuals of the problem at an arbitrary primal-dual point. Empty x/u
// entries are treated as zero vectors, an empty lambda as all-zero
// multipliers. Used by the SQP to measure NLP optimality at the current
// iterate (where the QP deltas are zero).
KktResiduals evaluate_qp_point(const LqProblem& prob,
                               const std::vector<Vec>& x,
                               const std::vector<Vec>& u,
                               const std::vector<Vec>& nu,
                               const std::vector<Vec>& lambda);

// Fixed-point iteration S = Q + A'SA - A'SB (R + B'SB)^{-1} B'SA from S0 = Q.
Mat solve_dare(const Mat& A, const Mat& B, const Mat& Q, const Mat& R,
               double tol = 1e-10, int max_iter = 100000);

// Infinite-horizon LQR gain K with u = -K x, from the DARE solution.
Mat lqr_gain(const Mat& A, const Mat& B, const Mat& Q, const Mat& R);

}  // namespace mts
