#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numeric>

#include "mts/ocp.hpp"
#include "test_util.hpp"

using namespace mts;
using namespace mts::test;

namespace {

double horizon_length(const PhasePlan& plan) {
  return std::accumulate(plan.schedule.dts.begin(), plan.schedule.dts.end(),
                         0.0);
}

}  // namespace

TEST_CASE("study variants reproduce the configuration table") {
  SystemConfig cfg;
  cfg.trunk.n_links = 4;  // plan structure is independent of the chain size

  struct Want {
    SystemId id;
    int variant;
    double dt0;
    int N;
    int k_bar;  // -1: single phase
    double T;
    bool exponential;
  };
  const Want rows[] = {
      {SystemId::DiffDrive, 0, 0.01, 1000, -1, 10.0, false},
      {SystemId::DiffDrive, 1, 0.01, 250, -1, 2.5, false},
      {SystemId::DiffDrive, 2, 0.04, 250, -1, 10.0, false},
      {SystemId::DiffDrive, 4, 0.01, 80, -1, 10.0, true},
      {SystemId::DiffDrive, 5, 0.01, 1000, 36, 10.0, false},
      {SystemId::DiffDrive, 6, 0.01, 80, 21, 10.0, true},
      {SystemId::Drone, 0, 0.01, 150, -1, 1.5, false},
      {SystemId::Drone, 2, 0.02, 75, -1, 1.5, false},
      {SystemId::Drone, 3, 0.01, 150, 0, 1.5, false},
      {SystemId::Drone, 5, 0.01, 150, 45, 1.5, false},
      {SystemId::Drone, 6, 0.01, 75, 33, 1.5, true},
      {SystemId::Trunk, 0, 0.005, 40, -1, 0.2, false},
      {SystemId::Trunk, 1, 0.005, 25, -1, 0.125, false},
      {SystemId::Trunk, 5, 0.005, 40, 10, 0.2, false},
      {SystemId::Trunk, 6, 0.005, 25, 8, 0.2, true},
  };
  for (const Want& w : rows) {
    CAPTURE(to_string(w.id));
    CAPTURE(w.variant);
    const PhasePlan plan = make_variant_plan(w.id, w.variant, cfg);
    CHECK(plan.schedule.dt0 == doctest::Approx(w.dt0));
    CHECK(plan.horizon() == w.N);
    CHECK(horizon_length(plan) == doctest::Approx(w.T).epsilon(1e-9));
    CHECK(plan.k_bar == w.k_bar);
    if (w.exponential) {
      CHECK(plan.schedule.alpha > 1.0);
    } else {
      CHECK(plan.schedule.alpha == doctest::Approx(1.0));
    }
    if (w.k_bar > 0) {
      REQUIRE(plan.phases.size() == 2);
      CHECK(plan.switch_interval(w.k_bar - 1));
      CHECK(!plan.switch_interval(w.k_bar));
      CHECK(plan.n_x(w.k_bar - 1) == plan.phases.front().model.n_x);
      CHECK(plan.n_x(w.k_bar) == plan.phases.back().model.n_x);
    } else if (w.k_bar < 0) {
      CHECK(plan.phases.size() == 1);
    }
    CHECK((!plan.project_initial || w.k_bar == 0));
  }
}

TEST_CASE("variant 3 needs shared inputs across the switch") {
  SystemConfig cfg;
  cfg.trunk.n_links = 4;
  CHECK_THROWS_AS(make_variant_plan(SystemId::DiffDrive, 3, cfg),
                  InvalidArgument);
  CHECK_THROWS_AS(make_variant_plan(SystemId::Trunk, 3, cfg), InvalidArgument);
  const PhasePlan plan = make_variant_plan(SystemId::Drone, 3, cfg);
  CHECK(plan.project_initial);
  CHECK(plan.phases.size() == 1);
  CHECK(plan.phases.front().model.n_x == 10);  // reduced everywhere
}

TEST_CASE("undefined variants are rejected") {
  SystemConfig cfg;
  CHECK_THROWS_AS(make_variant_plan(SystemId::DiffDrive, 7, cfg),
                  InvalidArgument);
  CHECK_THROWS_AS(make_variant_plan(SystemId::Drone, -1, cfg), InvalidArgument);
}

TEST_CASE("per-system integrator choices") {
  SystemConfig cfg;
  cfg.trunk.n_links = 4;
  const PhasePlan dd = make_variant_plan(SystemId::DiffDrive, 6, cfg);
  CHECK(dd.phases.front().integrator.scheme == IntegratorSpec::Scheme::GL);
  CHECK(dd.phases.back().integrator.scheme == IntegratorSpec::Scheme::ERK4);
  const PhasePlan dr = make_variant_plan(SystemId::Drone, 0, cfg);
  CHECK(dr.phases.front().integrator.scheme == IntegratorSpec::Scheme::ERK4);
  const PhasePlan tr = make_variant_plan(SystemId::Trunk, 0, cfg);
  CHECK(tr.phases.front().integrator.scheme == IntegratorSpec::Scheme::GL);
  CHECK(tr.phases.front().integrator.substeps == cfg.trunk_irk_substeps);
}

TEST_CASE("shooting variable counts shrink with coarsening and switching") {
  SystemConfig cfg;
  const PhasePlan v0 = make_variant_plan(SystemId::DiffDrive, 0, cfg);
  CHECK(v0.shooting_variable_count() == 1001 * 7 + 1000 * 2);
  const PhasePlan v6 = make_variant_plan(SystemId::DiffDrive, 6, cfg);
  // 21 full states, 60 reduced ones, 81 total states over an 80-step horizon.
  CHECK(v6.shooting_variable_count() == 21 * 7 + 60 * 5 + 80 * 2);
  CHECK(v0.shooting_variable_count() > 10 * v6.shooting_variable_count());
}

TEST_CASE("mts plan accepts any interior switching stage") {
  SystemConfig cfg;
  cfg.trunk.n_links = 4;
  for (int k_bar : {1, 8, 24}) {
    const PhasePlan plan = make_mts_plan(SystemId::Trunk, cfg, k_bar);
    CHECK(plan.k_bar == k_bar);
    CHECK(plan.phases.front().end == k_bar);
    CHECK(plan.phases.back().start == k_bar);
  }
  CHECK_THROWS_AS(make_mts_plan(SystemId::Trunk, cfg, 0), InvalidArgument);
  CHECK_THROWS_AS(make_mts_plan(SystemId::Trunk, cfg, 25), InvalidArgument);
  CHECK_THROWS_AS(make_mts_plan(SystemId::Trunk, cfg, -3), InvalidArgument);
  const PhasePlan dr = make_mts_plan(SystemId::Drone, cfg, 0);
  CHECK(dr.project_initial);
}

TEST_CASE("plan validation catches inconsistent phase ranges") {
  SystemConfig cfg;
  PhasePlan plan = make_variant_plan(SystemId::DiffDrive, 6, cfg);
  plan.phases.front().end = plan.k_bar + 1;
  CHECK_THROWS_AS(plan.validate(), InvalidArgument);
  plan = make_variant_plan(SystemId::DiffDrive, 6, cfg);
  plan.k_bar = plan.horizon();
  CHECK_THROWS_AS(plan.validate(), InvalidArgument);
}

TEST_CASE("diff-drive reporting cost is the pure state penalty") {
  SystemConfig cfg;
  std::mt19937_64 rng(31);
  const Vec x = random_vec(rng, 7);
  const Vec u = random_vec(rng, 2);
  const double got =
      reporting_stage_cost(SystemId::DiffDrive, cfg, x, u, 0.0);
  CHECK(got == doctest::Approx(x.dot(cfg.dd_Q.asDiagonal() * x)).epsilon(1e-12));
}

TEST_CASE("drone cost at hover is the squared distance to the goal") {
  SystemConfig cfg;
  const Vec x = drone_hover_state(cfg.drone);
  const Vec u = Vec::Zero(2);
  // Load acceleration and inputs vanish at hover; position error is (1,1).
  CHECK(reporting_stage_cost(SystemId::Drone, cfg, x, u, 0.0) ==
        doctest::Approx(2.0).epsilon(1e-10));
}

TEST_CASE("trunk stage cost follows the published weights and reference") {
  SystemConfig cfg;
  cfg.trunk.n_links = 4;
  const PhasePlan plan = make_variant_plan(SystemId::Trunk, 0, cfg);
  const CostSpec& cost = plan.phases.front().cost;
  std::mt19937_64 rng(37);
  const Vec x = random_vec(rng, 8, 0.3);
  const Vec u = random_vec(rng, 2, 0.5);
  const double t = 0.37;
  const Eigen::Vector2d ref = cfg.trunk_reference(t);
  const Eigen::Vector2d dref = cfg.trunk_reference_velocity(t);
  const Eigen::Vector2d ee = trunk_fk(Vec(x.head(4)), cfg.trunk);
  const Vec ve = trunk_ee_jacobian(Vec(x.head(4)), cfg.trunk) * x.tail(4);
  Vec r(6);
  r << ee(0) - ref(0), ee(1) - ref(1), ve(0) - dref(0), ve(1) - dref(1), u(0),
      u(1);
  Vec W(6);
  W << cfg.trunk_Q, cfg.trunk_R_full;
  CHECK(cost.stage_value(x, u, t) ==
        doctest::Approx(r.dot(W.asDiagonal() * r)).epsilon(1e-12));
  // Terminal cost drops the input rows.
  Vec WN = cfg.trunk_Q;
  CHECK(cost.terminal_value(x, t) ==
        doctest::Approx(r.head(4).dot(WN.asDiagonal() * r.head(4)))
            .epsilon(1e-12));
}

TEST_CASE("trunk reference circle stays reachable") {
  SystemConfig cfg;
  for (int n : {4, 8, 16}) {
    cfg.trunk.n_links = n;
    const double L = n * 2.0 * cfg.trunk.l;
    for (double t : {0.0, 0.5, 1.3}) {
      const Eigen::Vector2d ref = cfg.trunk_reference(t);
      CHECK(ref.norm() < L);  // inside the workspace disk
    }
    // Velocity is the time derivative of the position reference.
    const double h = 1e-6;
    const Eigen::Vector2d num =
        (cfg.trunk_reference(0.4 + h) - cfg.trunk_reference(0.4 - h)) /
        (2.0 * h);
    CHECK((num - cfg.trunk_reference_velocity(0.4)).norm() < 1e-6);
  }
}

TEST_CASE("cost residual jacobians agree with finite differences") {
  SystemConfig cfg;
  cfg.trunk.n_links = 4;
  std::mt19937_64 rng(41);
  for (SystemId id : {SystemId::DiffDrive, SystemId::Drone, SystemId::Trunk}) {
    const PhasePlan plan = make_variant_plan(id, 6, cfg);
    for (const Phase* ph : {&plan.phases.front(), &plan.phases.back()}) {
      Vec x = random_vec(rng, ph->model.n_x, 0.2);
      if (id == SystemId::Drone && ph->model.n_x == 12)
        x(3) = 0.3 + 0.05 * std::abs(x(3));
      const Vec u = random_vec(rng, ph->model.n_u, 0.5);
      Vec r;
      Mat Jx, Ju;
      ph->cost.residual_jac(x, u, 0.2, r, Jx, Ju);
      CHECK((r - ph->cost.residual(x, u, 0.2)).norm() < 1e-12);
      const Mat Jx_fd = fd_jacobian(
          [&](const Vec& xx) { return ph->cost.residual(xx, u, 0.2); }, x);
      const Mat Ju_fd = fd_jacobian(
          [&](const Vec& uu) { return ph->cost.residual(x, uu, 0.2); }, u);
      CHECK(rel_err(Jx, Jx_fd) < 1e-4);
      CHECK(rel_err(Ju, Ju_fd) < 1e-4);
    }
  }
}

TEST_CASE("initial states match the task definitions") {
  SystemConfig cfg;
  const Vec dd = cfg.initial_state(SystemId::DiffDrive);
  CHECK(dd(0) == 1.0);
  CHECK(dd(1) == 1.0);
  CHECK(dd(3) == doctest::Approx(M_PI / 2.0));
  CHECK(dd.tail(3).norm() == 0.0);
  const Vec dr = cfg.initial_state(SystemId::Drone);
  CHECK((dr - drone_hover_state(cfg.drone)).norm() == 0.0);
  cfg.trunk.n_links = 8;
  CHECK(cfg.initial_state(SystemId::Trunk).norm() == 0.0);
  CHECK(cfg.initial_state(SystemId::Trunk).size() == 16);
}
