#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mts/experiments.hpp"
#include "mts/sqp.hpp"
#include "test_util.hpp"

using namespace mts;
using namespace mts::test;

namespace {

// Double-integrator LQ plan: exact ERK4 discretization (A is nilpotent), pure
// quadratic cost, optionally with the terminal weight set to the DARE
// solution so the finite horizon reproduces the stationary feedback.
struct LqSetup {
  PhasePlan plan;
  Mat Ad, Bd;
  Mat Qd, Rd;  // NLP Hessian scale (2 W)
};

LqSetup double_integrator_plan(int N, double dt, bool dare_terminal,
                               double weight_scale = 1.0) {
  const Vec Wx = weight_scale * (Vec(2) << 1.0, 1.0).finished();
  const Vec Wu = weight_scale * (Vec(1) << 0.1).finished();

  LqSetup s;
  s.Ad = (Mat(2, 2) << 1.0, dt, 0.0, 1.0).finished();
  s.Bd = (Mat(2, 1) << 0.5 * dt * dt, dt).finished();
  s.Qd = 2.0 * Mat(Wx.asDiagonal());
  s.Rd = 2.0 * Mat(Wu.asDiagonal());

  Mat L;  // terminal value x' L L' x
  if (dare_terminal) {
    const Mat S = solve_dare(s.Ad, s.Bd, s.Qd, s.Rd) / 2.0;
    L = Eigen::LLT<Mat>(S).matrixL();
  } else {
    L = Mat(Wx.cwiseSqrt().asDiagonal());
  }

  Phase ph;
  ph.model = make_model(2, 1, false, [](const auto& x, const auto& u) {
    auto dx = x.eval();
    dx(0) = x(1);
    dx(1) = u(0);
    return dx;
  });
  ph.integrator = IntegratorSpec::erk4();
  Vec W(3), W_N = Vec::Ones(2);
  W << Wx, Wu;
  ph.cost = make_cost(
      W, W_N,
      [](const auto& x, const auto& u, double) {
        using VecS = std::remove_cvref_t<decltype(x.eval())>;
        VecS r(3);
        r << x(0), x(1), u(0);
        return r;
      },
      [L](const auto& x, double) {
        using VecS = std::remove_cvref_t<decltype(x.eval())>;
        VecS r(2);
        for (int i = 0; i < 2; ++i) r(i) = L(0, i) * x(0) + L(1, i) * x(1);
        return r;
      });
  ph.start = 0;
  ph.end = N;

  s.plan.system = SystemId::DiffDrive;  // label only
  s.plan.schedule = build_schedule(dt, N, N * dt, ScheduleMode::Uniform);
  s.plan.phases = {std::move(ph)};
  return s;
}

}  // namespace

TEST_CASE("one gauss-newton iteration recovers the dare feedback on an lq plan") {
  const LqSetup s = double_integrator_plan(40, 0.1, /*dare_terminal=*/true);
  Vec x0(2);
  x0 << 1.3, -0.4;
  SqpWorkspace ws;
  SqpSettings set;
  set.max_sqp_iter = 1;
  const SqpStats stats = sqp_solve(s.plan, x0, 0.0, ws, set);
  CHECK(stats.iterations == 1);
  const Mat K = lqr_gain(s.Ad, s.Bd, s.Qd, s.Rd);
  CHECK((ws.u[0] + K * x0).lpNorm<Eigen::Infinity>() < 1e-6);
  // Quadratic problem: the single iteration is already stationary.
  const KktResiduals kkt = evaluate_kkt(ws, s.plan, x0, 0.0, set);
  CHECK(kkt.max() < 1e-8);
}

TEST_CASE("lq plan matches the structured qp solution stage by stage") {
  const int N = 25;
  const LqSetup s = double_integrator_plan(N, 0.1, /*dare_terminal=*/false);
  Vec x0(2);
  x0 << -0.7, 0.9;
  SqpWorkspace ws;
  sqp_solve(s.plan, x0, 0.0, ws);

  LqProblem prob;
  prob.x0 = x0;
  prob.stages.resize(N);
  for (int k = 0; k < N; ++k) {
    LqStage& st = prob.stages[k];
    st.Q = s.Qd;
    st.R = s.Rd;
    st.S = Mat::Zero(1, 2);
    st.q = Vec::Zero(2);
    st.r = Vec::Zero(1);
    st.A = s.Ad;
    st.B = s.Bd;
    st.b = Vec::Zero(2);
  }
  prob.Q_N = s.Qd;
  prob.q_N = Vec::Zero(2);
  const QpSolution ref = riccati_solve(prob);
  for (int k = 0; k < N; ++k) {
    CHECK((ws.u[k] - ref.u[k]).lpNorm<Eigen::Infinity>() < 1e-8);
    CHECK((ws.x[k] - ref.x[k]).lpNorm<Eigen::Infinity>() < 1e-8);
  }
}

TEST_CASE("equilibrium start converges immediately to zero cost") {
  const LqSetup s = double_integrator_plan(20, 0.1, false);
  SqpWorkspace ws;
  const SqpStats stats = sqp_solve(s.plan, Vec::Zero(2), 0.0, ws);
  CHECK(stats.converged);
  CHECK(stats.iterations <= 1);
  CHECK(trajectory_cost(s.plan, ws.x, ws.u, 0.0) < 1e-20);
  for (const Vec& u : ws.u) CHECK(u.norm() < 1e-10);
}

TEST_CASE("uniform weight scaling leaves the optimizer unchanged") {
  Vec x0(2);
  x0 << 0.8, 0.2;
  const LqSetup a = double_integrator_plan(30, 0.1, false, 1.0);
  const LqSetup b = double_integrator_plan(30, 0.1, false, 10.0);
  SqpWorkspace wa, wb;
  sqp_solve(a.plan, x0, 0.0, wa);
  sqp_solve(b.plan, x0, 0.0, wb);
  CHECK((wa.u[0] - wb.u[0]).lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("cold start rolls out the nominal input") {
  const LqSetup s = double_integrator_plan(10, 0.1, false);
  Vec x0(2);
  x0 << 0.5, 1.0;
  SqpWorkspace ws;
  cold_start(s.plan, x0, 0.0, ws);
  REQUIRE(ws.valid);
  REQUIRE(ws.x.size() == 11);
  Vec x = x0;
  for (int k = 0; k < 10; ++k) {
    CHECK((ws.x[k] - x).norm() < 1e-14);
    CHECK(ws.u[k].norm() == 0.0);
    x = integrate_state(s.plan.phases[0].model, x, Vec::Zero(1), 0.1,
                        s.plan.phases[0].integrator);
  }
}

TEST_CASE("diff-drive baseline cold start reaches tight stationarity") {
  SystemConfig cfg;
  const PhasePlan plan = make_variant_plan(SystemId::DiffDrive, 0, cfg);
  SqpWorkspace ws;
  SqpSettings set;
  set.kkt_tol = 1e-6;
  const SqpStats stats =
      sqp_solve(plan, cfg.initial_state(SystemId::DiffDrive), 0.0, ws, set);
  CHECK(stats.converged);
  CHECK(stats.iterations <= 50);
  CHECK(stats.kkt.max() < 1e-6);
}

TEST_CASE("warm start resolves in very few iterations") {
  SystemConfig cfg;
  const PhasePlan plan = make_variant_plan(SystemId::Drone, 6, cfg);
  SqpWorkspace ws;
  SqpSettings set;
  set.lm_reg = cfg.drone_lm_reg;
  const Vec x0 = cfg.initial_state(SystemId::Drone);
  sqp_solve(plan, x0, 0.0, ws, set);
  const Vec u_first = ws.u[0];
  warm_start_shift(ws, plan);
  const SqpStats again = sqp_solve(plan, x0, 0.0, ws, set);
  CHECK(again.converged);
  CHECK(again.iterations <= 2);
  CHECK((ws.u[0] - u_first).lpNorm<Eigen::Infinity>() < 1e-4);
}

TEST_CASE("switched plan closes the projection defect at the boundary") {
  SystemConfig cfg;
  const PhasePlan plan = make_variant_plan(SystemId::DiffDrive, 6, cfg);
  SqpWorkspace ws;
  SqpSettings set;
  set.kkt_tol = 1e-4;
  const SqpStats stats =
      sqp_solve(plan, cfg.initial_state(SystemId::DiffDrive), 0.0, ws, set);
  CHECK(stats.kkt.max() < 1e-4);
  const int kb = plan.k_bar;
  REQUIRE(kb > 0);
  REQUIRE(ws.x[kb].size() == 5);
  REQUIRE(ws.x[kb - 1].size() == 7);
  // Interval k_bar-1 integrates the full model, then projects.
  const Phase& ph = plan.phases.front();
  const Vec x_end = integrate_state(ph.model, ws.x[kb - 1], ws.u[kb - 1],
                                    plan.schedule.dts[kb - 1], ph.integrator);
  CHECK((plan.projection.apply(x_end) - ws.x[kb]).lpNorm<Eigen::Infinity>() <
        1e-6);
  // All defects below the switch are closed too.
  for (int k = 0; k < kb - 1; ++k) {
    const Vec xn = integrate_state(ph.model, ws.x[k], ws.u[k],
                                   plan.schedule.dts[k], ph.integrator);
    CHECK((xn - ws.x[k + 1]).lpNorm<Eigen::Infinity>() < 1e-6);
  }
}

TEST_CASE("mismatched initial state dimension is rejected") {
  const LqSetup s = double_integrator_plan(10, 0.1, false);
  SqpWorkspace ws;
  CHECK_THROWS_AS(sqp_solve(s.plan, Vec::Zero(3), 0.0, ws), InvalidArgument);
}
