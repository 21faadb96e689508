#include "mts/eds.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>

namespace mts {

namespace {

Mat terminal_weight(const LqInstance& inst) {
  if (inst.S.size() > 0) return inst.S;
  return solve_dare(inst.A, inst.B, inst.Q, inst.R);
}

// Equality-constrained LQ solve with a single perturbed stage offset.
Vec first_input(const LqInstance& inst, const Mat& S, int k_pert,
                const Vec& p_pert) {
  const int n = static_cast<int>(inst.A.rows());
  const int m = static_cast<int>(inst.B.cols());
  LqProblem prob;
  prob.stages.resize(inst.N);
  for (int k = 0; k < inst.N; ++k) {
    LqStage& st = prob.stages[k];
    // Stage-0 state cost is constant (x0 fixed); keep Q for uniformity.
    st.Q = 2.0 * inst.Q;
    st.R = 2.0 * inst.R;
    st.S = Mat::Zero(m, n);
    st.q = Vec::Zero(n);
    st.r = Vec::Zero(m);
    st.A = inst.A;
    st.B = inst.B;
    st.b = k == k_pert ? p_pert : Vec::Zero(n);
  }
  prob.Q_N = 2.0 * S;
  prob.q_N = Vec::Zero(n);
  prob.x0 = inst.x0;
  QpSolution sol = riccati_solve(prob);
  if (sol.status != QpStatus::Success)
    throw NumericalFailure("eds: Riccati solve failed");
  return sol.u[0];
}

}  // namespace

void LqInstance::validate() const {
  if (N < 1) throw InvalidArgument("LqInstance: N must be positive");
  const int n = static_cast<int>(A.rows());
  const int m = static_cast<int>(B.cols());
  if (A.cols() != n || B.rows() != n || Q.rows() != n || Q.cols() != n ||
      R.rows() != m || R.cols() != m || x0.size() != n)
    throw InvalidArgument("LqInstance: inconsistent dimensions");
  Eigen::SelfAdjointEigenSolver<Mat> eq(Q), er(R);
  if (eq.eigenvalues().minCoeff() < -1e-9)
    throw InvalidArgument("LqInstance: Q must be positive semidefinite");
  if (er.eigenvalues().minCoeff() <= 0.0)
    throw InvalidArgument("LqInstance: R must be positive definite");
}

LiftedLq lift(const LqInstance& inst) {
  inst.validate();
  const int n = static_cast<int>(inst.A.rows());
  const int m = static_cast<int>(inst.B.cols());
  const int N = inst.N;
  const Mat S = terminal_weight(inst);

  LiftedLq lq;
  lq.calX = Mat::Zero(N * n, n);
  lq.calU = Mat::Zero(N * n, N * m);
  lq.calP = Mat::Zero(N * n, N * n);
  lq.calQ = Mat::Zero(N * n, N * n);
  lq.calR = Mat::Zero(N * m, N * m);

  // Powers of A: pow[i] = A^i for i = 0..N.
  std::vector<Mat> pow(N + 1);
  pow[0] = Mat::Identity(n, n);
  for (int i = 1; i <= N; ++i) pow[i] = inst.A * pow[i - 1];

  for (int i = 0; i < N; ++i) {
    lq.calX.block(i * n, 0, n, n) = pow[i + 1];
    for (int j = 0; j <= i; ++j) {
      lq.calU.block(i * n, j * m, n, m) = pow[i - j] * inst.B;
      lq.calP.block(i * n, j * n, n, n) = pow[i - j];
    }
    lq.calQ.block(i * n, i * n, n, n) = i + 1 < N ? inst.Q : S;
    lq.calR.block(i * m, i * m, m, m) = inst.R;
  }
  return lq;
}

SensitivityResult closed_form_sensitivity(const LqInstance& inst) {
  const LiftedLq lq = lift(inst);
  const Mat H = lq.calU.transpose() * lq.calQ * lq.calU + lq.calR;
  Eigen::LLT<Mat> llt(0.5 * (H + H.transpose()));
  if (llt.info() != Eigen::Success)
    throw NumericalFailure("closed_form_sensitivity: Hessian not PD");
  const Mat UtQ = lq.calU.transpose() * lq.calQ;
  SensitivityResult res;
  res.U_star = -llt.solve(UtQ * lq.calX * inst.x0);
  res.dU_dP = -llt.solve(UtQ * lq.calP);
  return res;
}

Mat u0_block(const SensitivityResult& sens, const LqInstance& inst, int k) {
  if (k < 0 || k >= inst.N)
    throw InvalidArgument("u0_block: stage index out of range");
  const int n = static_cast<int>(inst.A.rows());
  const int m = static_cast<int>(inst.B.cols());
  return sens.dU_dP.block(0, k * n, m, n);
}

Mat fd_sensitivity_oracle(const LqInstance& inst, int k, double h) {
  inst.validate();
  if (k < 0 || k >= inst.N)
    throw InvalidArgument("fd_sensitivity_oracle: disturbances run 0..N-1");
  if (h <= 0.0) throw InvalidArgument("fd_sensitivity_oracle: h must be > 0");
  const int n = static_cast<int>(inst.A.rows());
  const int m = static_cast<int>(inst.B.cols());
  const Mat S = terminal_weight(inst);
  Mat J(m, n);
  for (int i = 0; i < n; ++i) {
    Vec p = Vec::Zero(n);
    p(i) = h;
    const Vec up = first_input(inst, S, k, p);
    p(i) = -h;
    const Vec um = first_input(inst, S, k, p);
    J.col(i) = (up - um) / (2.0 * h);
  }
  return J;
}

std::vector<double> sensitivity_norms(const LqInstance& inst) {
  const SensitivityResult sens = closed_form_sensitivity(inst);
  std::vector<double> norms(inst.N);
  for (int k = 0; k < inst.N; ++k)
    norms[k] = u0_block(sens, inst, k).norm();
  return norms;
}

DecayFit decay_fit(const std::vector<double>& norms) {
  if (norms.size() < 3)
    throw InvalidArgument("decay_fit: need at least 3 norms");
  bool any = false;
  for (double v : norms)
    if (v > 0.0) any = true;
  if (!any) throw NumericalFailure("decay_fit: all norms underflow to zero");

  DecayFit fit;
  fit.norms = norms;
  // Least squares on (k, log norm_k) for k >= 1.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const int K = static_cast<int>(norms.size());
  const int count = K - 1;
  std::vector<double> ys(count);
  for (int k = 1; k < K; ++k) {
    const double y = std::log(std::max(norms[k], 1e-300));
    ys[k - 1] = y;
    sx += k;
    sy += y;
    sxx += static_cast<double>(k) * k;
    sxy += k * y;
  }
  const double denom = count * sxx - sx * sx;
  fit.slope = denom != 0.0 ? (count * sxy - sx * sy) / denom : 0.0;
  fit.intercept = (sy - fit.slope * sx) / count;
  double ss_res = 0.0, ss_tot = 0.0;
  const double mean_y = sy / count;
  for (int k = 1; k < K; ++k) {
    const double pred = fit.intercept + fit.slope * k;
    ss_res += (ys[k - 1] - pred) * (ys[k - 1] - pred);
    ss_tot += (ys[k - 1] - mean_y) * (ys[k - 1] - mean_y);
  }
  fit.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  return fit;
}

LqInstance random_instance(std::uint64_t seed, int n, int m, int N,
                           double spectral_radius) {
  if (n < 1 || m < 1 || N < 1)
    throw InvalidArgument("random_instance: bad dimensions");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto randn = [&](int r, int c) {
    Mat M(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) M(i, j) = normal(rng);
    return M;
  };
  LqInstance inst;
  inst.A = randn(n, n);
  const double rho = inst.A.eigenvalues().cwiseAbs().maxCoeff();
  if (rho > 0.0) inst.A *= spectral_radius / rho;
  inst.B = randn(n, m);
  const Mat M = randn(n, n);
  inst.Q = M.transpose() * M + 1e-6 * Mat::Identity(n, n);
  inst.R = Mat::Identity(m, m);
  inst.N = N;
  inst.x0 = randn(n, 1);
  inst.S = solve_dare(inst.A, inst.B, inst.Q, inst.R);
  return inst;
}

}  // namespace mts
