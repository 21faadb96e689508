#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mts/qp.hpp"
#include "test_util.hpp"

using namespace mts;
using namespace mts::test;

namespace {

Mat random_psd(std::mt19937_64& rng, int n, double ridge) {
  Mat M(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) M(i, j) = random_vec(rng, 1)(0);
  return M.transpose() * M + ridge * Mat::Identity(n, n);
}

// Random equality-constrained LQ problem; state dimensions may vary across
// stages, as they do after a model switch.
LqProblem random_problem(std::mt19937_64& rng, int N, bool vary_dims) {
  std::uniform_int_distribution<int> dim(2, 5);
  std::vector<int> nx(N + 1), nu(N);
  const int fixed = dim(rng);
  for (int k = 0; k <= N; ++k) nx[k] = vary_dims ? dim(rng) : fixed;
  for (int k = 0; k < N; ++k) nu[k] = dim(rng) - 1;

  LqProblem prob;
  prob.x0 = random_vec(rng, nx[0]);
  prob.stages.resize(N);
  for (int k = 0; k < N; ++k) {
    LqStage& st = prob.stages[k];
    st.Q = random_psd(rng, nx[k], 0.1);
    st.R = random_psd(rng, nu[k], 0.5);
    st.S = 0.1 * Mat::Random(nu[k], nx[k]);
    st.q = random_vec(rng, nx[k]);
    st.r = random_vec(rng, nu[k]);
    st.A = Mat::Random(nx[k + 1], nx[k]);
    st.B = Mat::Random(nx[k + 1], nu[k]);
    st.b = random_vec(rng, nx[k + 1], 0.3);
  }
  prob.Q_N = random_psd(rng, nx[N], 0.1);
  prob.q_N = random_vec(rng, nx[N]);
  return prob;
}

// Dense KKT oracle for the equality-constrained problem: stack all states and
// inputs, solve [H E'; E 0] [z; nu] = [-g; c] with one Eigen factorization.
struct DenseSolution {
  std::vector<Vec> x, u, nu;
};

DenseSolution dense_kkt_oracle(const LqProblem& prob) {
  const int N = prob.horizon();
  std::vector<int> xoff(N + 1), uoff(N);
  int nz = 0;
  for (int k = 0; k <= N; ++k) {
    xoff[k] = nz;
    nz += k == N ? prob.Q_N.rows() : prob.stages[k].n_x();
  }
  for (int k = 0; k < N; ++k) {
    uoff[k] = nz;
    nz += prob.stages[k].n_u();
  }
  int nc = static_cast<int>(prob.x0.size());
  for (int k = 0; k < N; ++k) nc += static_cast<int>(prob.stages[k].A.rows());

  Mat H = Mat::Zero(nz, nz);
  Vec g = Vec::Zero(nz);
  Mat E = Mat::Zero(nc, nz);
  Vec c = Vec::Zero(nc);
  for (int k = 0; k < N; ++k) {
    const LqStage& st = prob.stages[k];
    H.block(xoff[k], xoff[k], st.n_x(), st.n_x()) = st.Q;
    H.block(uoff[k], uoff[k], st.n_u(), st.n_u()) = st.R;
    H.block(uoff[k], xoff[k], st.n_u(), st.n_x()) = st.S;
    H.block(xoff[k], uoff[k], st.n_x(), st.n_u()) = st.S.transpose();
    g.segment(xoff[k], st.n_x()) = st.q;
    g.segment(uoff[k], st.n_u()) = st.r;
  }
  H.block(xoff[N], xoff[N], prob.Q_N.rows(), prob.Q_N.rows()) = prob.Q_N;
  g.segment(xoff[N], prob.q_N.size()) = prob.q_N;

  int row = 0;
  const int n0 = static_cast<int>(prob.x0.size());
  E.block(row, xoff[0], n0, n0).setIdentity();
  c.segment(row, n0) = prob.x0;
  row += n0;
  for (int k = 0; k < N; ++k) {
    const LqStage& st = prob.stages[k];
    const int m = static_cast<int>(st.A.rows());
    E.block(row, xoff[k], m, st.n_x()) = st.A;
    E.block(row, uoff[k], m, st.n_u()) = st.B;
    E.block(row, xoff[k + 1], m, m) = -Mat::Identity(m, m);
    c.segment(row, m) = -st.b;
    row += m;
  }

  Mat K = Mat::Zero(nz + nc, nz + nc);
  K.topLeftCorner(nz, nz) = H;
  K.topRightCorner(nz, nc) = E.transpose();
  K.bottomLeftCorner(nc, nz) = E;
  Vec rhs(nz + nc);
  rhs << -g, c;
  const Vec sol = K.fullPivLu().solve(rhs);

  DenseSolution out;
  out.x.resize(N + 1);
  out.u.resize(N);
  out.nu.resize(N);
  for (int k = 0; k <= N; ++k) {
    const int n = k == N ? static_cast<int>(prob.Q_N.rows())
                         : prob.stages[k].n_x();
    out.x[k] = sol.segment(xoff[k], n);
  }
  for (int k = 0; k < N; ++k)
    out.u[k] = sol.segment(uoff[k], prob.stages[k].n_u());
  // Multipliers: skip the x0 rows, take the dynamics blocks in order.
  int mrow = nz + n0;
  for (int k = 0; k < N; ++k) {
    const int m = static_cast<int>(prob.stages[k].A.rows());
    out.nu[k] = sol.segment(mrow, m);
    mrow += m;
  }
  return out;
}

double solution_gap(const std::vector<Vec>& a, const std::vector<Vec>& b) {
  double err = 0.0;
  for (size_t i = 0; i < a.size(); ++i)
    err = std::max(err, (a[i] - b[i]).lpNorm<Eigen::Infinity>());
  return err;
}

}  // namespace

TEST_CASE("riccati recursion matches the dense kkt oracle") {
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 10; ++trial) {
    const bool vary = trial % 2 == 1;
    const int N = 3 + static_cast<int>(rng() % 18);
    const LqProblem prob = random_problem(rng, N, vary);
    const QpSolution got = riccati_solve(prob);
    const DenseSolution want = dense_kkt_oracle(prob);
    REQUIRE(got.status == QpStatus::Success);
    CHECK(solution_gap(got.x, want.x) < 1e-8);
    CHECK(solution_gap(got.u, want.u) < 1e-8);
    CHECK(solution_gap(got.nu, want.nu) < 1e-8);
  }
}

TEST_CASE("riccati solution has vanishing kkt residuals") {
  std::mt19937_64 rng(103);
  const LqProblem prob = random_problem(rng, 12, true);
  const QpSolution sol = riccati_solve(prob);
  const KktResiduals res =
      evaluate_qp_point(prob, sol.x, sol.u, sol.nu, sol.lambda);
  CHECK(res.stationarity < 1e-9);
  CHECK(res.equality < 1e-9);
}

TEST_CASE("interior point reproduces the riccati solution when bounds are slack") {
  std::mt19937_64 rng(107);
  for (int trial = 0; trial < 5; ++trial) {
    LqProblem prob = random_problem(rng, 10, trial % 2 == 1);
    for (auto& st : prob.stages) {
      for (int i = 0; i < st.n_u(); ++i) st.u_bounds.push_back({i, -1e6, 1e6});
      for (int i = 0; i < st.n_x(); ++i) st.x_bounds.push_back({i, -1e6, 1e6});
    }
    const QpSolution ip = solve_structured_qp(prob, 1e-10, 100);
    const QpSolution eq = riccati_solve(prob);
    REQUIRE(ip.status == QpStatus::Success);
    CHECK(solution_gap(ip.x, eq.x) < 1e-7);
    CHECK(solution_gap(ip.u, eq.u) < 1e-7);
  }
}

TEST_CASE("clamped scalar problem: minimize (u - 2)^2 on [-1, 1]") {
  LqProblem prob;
  prob.x0 = Vec::Zero(1);
  LqStage st;
  st.Q = Mat::Zero(1, 1);
  st.R = Mat::Identity(1, 1);
  st.S = Mat::Zero(1, 1);
  st.q = Vec::Zero(1);
  st.r = Vec::Constant(1, -2.0);  // 0.5 u^2 - 2u, unconstrained optimum u = 2
  st.A = Mat::Identity(1, 1);
  st.B = Mat::Zero(1, 1);
  st.b = Vec::Zero(1);
  st.u_bounds = {{0, -1.0, 1.0}};
  prob.stages = {st};
  prob.Q_N = Mat::Zero(1, 1);
  prob.q_N = Vec::Zero(1);

  const QpSolution sol = solve_structured_qp(prob);
  REQUIRE(sol.status == QpStatus::Success);
  CHECK(sol.u[0](0) == doctest::Approx(1.0).epsilon(1e-7));
  // lambda rows: u lower then u upper; only the upper bound is active and its
  // multiplier equals the clamped gradient 2 - u = 1.
  REQUIRE(sol.lambda[0].size() == 2);
  CHECK(sol.lambda[0](0) < 1e-6);
  CHECK(sol.lambda[0](1) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("affine rows clamp a linear combination of inputs") {
  // minimize (u1 - 1)^2 + (u2 - 1)^2 subject to u1 + u2 <= 1: by symmetry
  // u1 = u2 = 0.5.
  LqProblem prob;
  prob.x0 = Vec::Zero(1);
  LqStage st;
  st.Q = Mat::Zero(1, 1);
  st.R = Mat::Identity(2, 2);
  st.S = Mat::Zero(2, 1);
  st.q = Vec::Zero(1);
  st.r = Vec::Constant(2, -1.0);
  st.A = Mat::Identity(1, 1);
  st.B = Mat::Zero(1, 2);
  st.b = Vec::Zero(1);
  st.C = Mat::Zero(1, 1);
  st.D = Mat::Ones(1, 2);
  st.lb = Vec::Constant(1, -1e6);
  st.ub = Vec::Constant(1, 1.0);
  prob.stages = {st};
  prob.Q_N = Mat::Zero(1, 1);
  prob.q_N = Vec::Zero(1);

  const QpSolution sol = solve_structured_qp(prob);
  REQUIRE(sol.status == QpStatus::Success);
  CHECK(sol.u[0](0) == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(sol.u[0](1) == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("interior point satisfies complementarity and feasibility") {
  std::mt19937_64 rng(113);
  LqProblem prob = random_problem(rng, 8, false);
  for (auto& st : prob.stages)
    for (int i = 0; i < st.n_u(); ++i) st.u_bounds.push_back({i, -0.4, 0.4});
  const QpSolution sol = solve_structured_qp(prob, 1e-9, 100);
  REQUIRE(sol.status == QpStatus::Success);
  CHECK(sol.residuals.max() < 1e-8);
  bool some_active = false;
  for (int k = 0; k < prob.horizon(); ++k) {
    for (int i = 0; i < prob.stages[k].n_u(); ++i) {
      CHECK(sol.u[k](i) <= 0.4 + 1e-7);
      CHECK(sol.u[k](i) >= -0.4 - 1e-7);
      if (std::abs(std::abs(sol.u[k](i)) - 0.4) < 1e-6) some_active = true;
    }
    for (int i = 0; i < sol.lambda[k].size(); ++i) {
      CHECK(sol.lambda[k](i) >= -1e-9);
      CHECK(sol.slack[k](i) >= -1e-9);
      CHECK(std::abs(sol.lambda[k](i) * sol.slack[k](i)) < 1e-6);
    }
  }
  CHECK(some_active);  // the box actually binds on this instance
}

TEST_CASE("dare fixed point on the scalar integrator is the golden ratio") {
  const Mat one = Mat::Identity(1, 1);
  const Mat S = solve_dare(one, one, one, one);
  CHECK(S(0, 0) == doctest::Approx((1.0 + std::sqrt(5.0)) / 2.0)
                       .epsilon(1e-10));
}

TEST_CASE("dare with A = 0 returns Q and the gain vanishes") {
  std::mt19937_64 rng(127);
  const Mat Q = random_psd(rng, 3, 0.1);
  const Mat R = random_psd(rng, 2, 0.5);
  const Mat A = Mat::Zero(3, 3);
  const Mat B = Mat::Random(3, 2);
  CHECK((solve_dare(A, B, Q, R) - Q).norm() < 1e-12);
  CHECK(lqr_gain(A, B, Q, R).norm() < 1e-12);
}

TEST_CASE("dare solution satisfies the riccati equation and stabilizes") {
  std::mt19937_64 rng(131);
  Mat A = Mat::Random(4, 4);
  A *= 0.95 / std::abs(A.eigenvalues().cwiseAbs().maxCoeff());
  const Mat B = Mat::Random(4, 2);
  const Mat Q = random_psd(rng, 4, 0.1);
  const Mat R = random_psd(rng, 2, 0.5);
  const Mat S = solve_dare(A, B, Q, R);
  const Mat res = Q + A.transpose() * S * A -
                  A.transpose() * S * B *
                      (R + B.transpose() * S * B).inverse() *
                      B.transpose() * S * A -
                  S;
  CHECK(res.norm() / S.norm() < 1e-9);
  const Mat K = lqr_gain(A, B, Q, R);
  const Mat Acl = A - B * K;
  CHECK(Acl.eigenvalues().cwiseAbs().maxCoeff() < 1.0);
}

TEST_CASE("evaluate_qp_point flags an arbitrary non-optimal point") {
  std::mt19937_64 rng(137);
  const LqProblem prob = random_problem(rng, 6, false);
  const QpSolution sol = riccati_solve(prob);
  std::vector<Vec> x = sol.x, u = sol.u;
  u[2](0) += 1.0;  // break stationarity, keep x as-is (breaks dynamics too)
  const KktResiduals res = evaluate_qp_point(prob, x, u, sol.nu, sol.lambda);
  CHECK(res.stationarity > 1e-3);
  CHECK(res.equality > 1e-3);
}
