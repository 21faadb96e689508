#include "mts/ocp.hpp"

#include <cmath>

namespace mts {

namespace {

CostSpec diffdrive_full_cost(const SystemConfig& cfg) {
  return make_cost(
      cfg.dd_Q, cfg.dd_Q,
      [](const auto& x, const auto& u, double) { return x.eval(); },
      [](const auto& x, double) { return x.eval(); });
}

CostSpec diffdrive_slow_cost(const SystemConfig& cfg) {
  Vec W(7);
  W << cfg.dd_Q_hat, cfg.dd_R_hat;
  return make_cost(
      W, cfg.dd_Q_hat,
      [](const auto& x, const auto& u, double) {
        using VecS = std::remove_cvref_t<decltype(x.eval())>;
        VecS r(7);
        r << x, u;
        return r;
      },
      [](const auto& x, double) { return x.eval(); });
}

CostSpec drone_cost(const SystemConfig& cfg, bool full) {
  Vec W(6), WN(4);
  W << cfg.drone_Q, cfg.drone_Q_load, cfg.drone_R;
  WN << cfg.drone_Q, cfg.drone_Q_load;
  const DroneParams p = cfg.drone;
  const Eigen::Vector2d goal = cfg.drone_goal;
  auto stage = [p, goal, full](const auto& x, const auto& u, double) {
    using VecS = std::remove_cvref_t<decltype(x.eval())>;
    VecS a = detail::drone_load_accel_t(x.eval(), p, full);
    VecS r(6);
    r(0) = x(0) - goal(0);
    r(1) = x(1) - goal(1);
    r(2) = a(0);
    r(3) = a(1);
    r(4) = u(0);
    r(5) = u(1);
    return r;
  };
  auto term = [p, goal, full](const auto& x, double) {
    using VecS = std::remove_cvref_t<decltype(x.eval())>;
    VecS a = detail::drone_load_accel_t(x.eval(), p, full);
    VecS r(4);
    r(0) = x(0) - goal(0);
    r(1) = x(1) - goal(1);
    r(2) = a(0);
    r(3) = a(1);
    return r;
  };
  return make_cost(W, WN, stage, term);
}

CostSpec trunk_full_cost(const SystemConfig& cfg) {
  Vec W(6), WN(4);
  W << cfg.trunk_Q, cfg.trunk_R_full;
  WN << cfg.trunk_Q;
  const TrunkParams p = cfg.trunk;
  const SystemConfig c = cfg;
  auto stage = [p, c](const auto& x, const auto& u, double t) {
    using VecS = std::remove_cvref_t<decltype(x.eval())>;
    const int n = p.n_links;
    const Eigen::Vector2d ref = c.trunk_reference(t);
    const Eigen::Vector2d dref = c.trunk_reference_velocity(t);
    VecS q = x.head(n);
    VecS qd = x.tail(n);
    VecS pe = detail::trunk_fk_t(q.eval(), p);
    VecS ve = (detail::trunk_ee_jacobian_t(q.eval(), p) * qd).eval();
    VecS r(6);
    r(0) = pe(0) - ref(0);
    r(1) = pe(1) - ref(1);
    r(2) = ve(0) - dref(0);
    r(3) = ve(1) - dref(1);
    r(4) = u(0);
    r(5) = u(1);
    return r;
  };
  auto term = [p, c](const auto& x, double t) {
    using VecS = std::remove_cvref_t<decltype(x.eval())>;
    const int n = p.n_links;
    const Eigen::Vector2d ref = c.trunk_reference(t);
    const Eigen::Vector2d dref = c.trunk_reference_velocity(t);
    VecS q = x.head(n);
    VecS qd = x.tail(n);
    VecS pe = detail::trunk_fk_t(q.eval(), p);
    VecS ve = (detail::trunk_ee_jacobian_t(q.eval(), p) * qd).eval();
    VecS r(4);
    r(0) = pe(0) - ref(0);
    r(1) = pe(1) - ref(1);
    r(2) = ve(0) - dref(0);
    r(3) = ve(1) - dref(1);
    return r;
  };
  return make_cost(W, WN, stage, term);
}

CostSpec trunk_slow_cost(const SystemConfig& cfg) {
  Vec W(6), WN(4);
  W << cfg.trunk_Q, cfg.trunk_R_slow;
  WN << cfg.trunk_Q;
  const SystemConfig c = cfg;
  auto stage = [c](const auto& x, const auto& u, double t) {
    using VecS = std::remove_cvref_t<decltype(x.eval())>;
    const Eigen::Vector2d ref = c.trunk_reference(t);
    const Eigen::Vector2d dref = c.trunk_reference_velocity(t);
    VecS r(6);
    r(0) = x(0) - ref(0);
    r(1) = x(1) - ref(1);
    r(2) = x(2) - dref(0);
    r(3) = x(3) - dref(1);
    r(4) = u(0);
    r(5) = u(1);
    return r;
  };
  auto term = [c](const auto& x, double t) {
    using VecS = std::remove_cvref_t<decltype(x.eval())>;
    const Eigen::Vector2d ref = c.trunk_reference(t);
    const Eigen::Vector2d dref = c.trunk_reference_velocity(t);
    VecS r(4);
    r(0) = x(0) - ref(0);
    r(1) = x(1) - ref(1);
    r(2) = x(2) - dref(0);
    r(3) = x(3) - dref(1);
    return r;
  };
  return make_cost(W, WN, stage, term);
}

ConstraintSpec diffdrive_constraints(bool full) {
  ConstraintSpec c;
  c.x_bounds = {{2, 0.0, 1.0}, {4, -0.5, 0.5}};
  c.x_bounds_N = c.x_bounds;
  const double ub = full ? 10.0 : 60.0;  // voltages vs. torques
  c.u_bounds = {{0, -ub, ub}, {1, -ub, ub}};
  return c;
}

ConstraintSpec drone_constraints(const DroneParams& p, bool full) {
  ConstraintSpec c;
  const int iw1 = full ? 10 : 8;
  const int iw2 = full ? 11 : 9;
  c.x_bounds = {{2, -0.7, 0.7},
                {iw1, -p.w_bound, p.w_bound},
                {iw2, -p.w_bound, p.w_bound}};
  c.x_bounds_N = c.x_bounds;
  c.u_bounds = {{0, -5.0, 5.0}, {1, -5.0, 5.0}};
  // Thrust bounds |kappa w_i| <= 15, enforced as affine rows on the state.
  const int nx = full ? 12 : 10;
  c.C = Mat::Zero(2, nx);
  c.C(0, iw1) = p.kappa;
  c.C(1, iw2) = p.kappa;
  c.D = Mat::Zero(2, 2);
  c.lb = Vec::Constant(2, -15.0);
  c.ub = Vec::Constant(2, 15.0);
  return c;
}

struct VariantRow {
  double dt0;
  int N;
  int k_bar;  // -1 when unused
  double T;
  bool exponential;
};

VariantRow variant_row(SystemId id, int variant) {
  switch (id) {
    case SystemId::DiffDrive:
      switch (variant) {
        case 0: return {0.01, 1000, -1, 10.0, false};
        case 1: return {0.01, 250, -1, 2.5, false};
        case 2: return {0.04, 250, -1, 10.0, false};
        case 4: return {0.01, 80, -1, 10.0, true};
        case 5: return {0.01, 1000, 36, 10.0, false};
        case 6: return {0.01, 80, 21, 10.0, true};
        default: break;
      }
      break;
    case SystemId::Drone:
      switch (variant) {
        case 0: return {0.01, 150, -1, 1.5, false};
        case 1: return {0.01, 100, -1, 1.0, false};
        case 2: return {0.02, 75, -1, 1.5, false};
        case 3: return {0.01, 150, 0, 1.5, false};
        case 4: return {0.01, 75, -1, 1.5, true};
        case 5: return {0.01, 150, 45, 1.5, false};
        case 6: return {0.01, 75, 33, 1.5, true};
        default: break;
      }
      break;
    case SystemId::Trunk:
      switch (variant) {
        case 0: return {0.005, 40, -1, 0.2, false};
        case 1: return {0.005, 25, -1, 0.125, false};
        case 2: return {0.01, 20, -1, 0.2, false};
        case 4: return {0.005, 25, -1, 0.2, true};
        case 5: return {0.005, 40, 10, 0.2, false};
        case 6: return {0.005, 25, 8, 0.2, true};
        default: break;
      }
      break;
  }
  throw InvalidArgument("variant " + std::to_string(variant) +
                        " is not defined for system " + to_string(id));
}

Phase full_phase(SystemId id, const SystemConfig& cfg) {
  Phase ph;
  switch (id) {
    case SystemId::DiffDrive:
      ph.model = diffdrive_full_model(cfg.diffdrive);
      ph.integrator = IntegratorSpec::gl(4);
      ph.cost = diffdrive_full_cost(cfg);
      ph.constraints = diffdrive_constraints(/*full=*/true);
      break;
    case SystemId::Drone:
      ph.model = drone_full_model(cfg.drone);
      ph.integrator = IntegratorSpec::erk4();  // all drone controllers use ERK
      ph.cost = drone_cost(cfg, /*full=*/true);
      ph.constraints = drone_constraints(cfg.drone, /*full=*/true);
      break;
    case SystemId::Trunk:
      ph.model = trunk_full_model(cfg.trunk);
      ph.integrator = IntegratorSpec::gl(4);
      ph.integrator.substeps = cfg.trunk_irk_substeps;
      ph.cost = trunk_full_cost(cfg);
      break;
  }
  return ph;
}

Phase slow_phase(SystemId id, const SystemConfig& cfg) {
  Phase ph;
  ph.integrator = IntegratorSpec::erk4();
  switch (id) {
    case SystemId::DiffDrive:
      ph.model = diffdrive_slow_model(cfg.diffdrive);
      ph.cost = diffdrive_slow_cost(cfg);
      ph.constraints = diffdrive_constraints(/*full=*/false);
      break;
    case SystemId::Drone:
      ph.model = drone_slow_model(cfg.drone);
      ph.cost = drone_cost(cfg, /*full=*/false);
      ph.constraints = drone_constraints(cfg.drone, /*full=*/false);
      break;
    case SystemId::Trunk:
      ph.model = trunk_slow_model();
      ph.cost = trunk_slow_cost(cfg);
      break;
  }
  return ph;
}

ProjectionMap system_projection(SystemId id, const SystemConfig& cfg) {
  switch (id) {
    case SystemId::DiffDrive: return diffdrive_projection();
    case SystemId::Drone: return drone_projection();
    case SystemId::Trunk: return trunk_projection(cfg.trunk);
  }
  throw InvalidArgument("unknown system id");
}

PhasePlan assemble_plan(SystemId id, const SystemConfig& cfg,
                        const VariantRow& row, int variant) {
  PhasePlan plan;
  plan.system = id;
  plan.variant = variant;
  plan.schedule = build_schedule(
      row.dt0, row.N, row.T,
      row.exponential ? ScheduleMode::Exponential : ScheduleMode::Uniform);
  if (row.k_bar < 0) {
    Phase ph = full_phase(id, cfg);
    ph.start = 0;
    ph.end = row.N;
    plan.phases = {std::move(ph)};
  } else if (row.k_bar == 0) {
    Phase ph = slow_phase(id, cfg);
    ph.start = 0;
    ph.end = row.N;
    plan.phases = {std::move(ph)};
    plan.k_bar = 0;
    plan.projection = system_projection(id, cfg);
    plan.project_initial = true;
  } else {
    Phase p1 = full_phase(id, cfg);
    Phase p2 = slow_phase(id, cfg);
    p1.start = 0;
    p1.end = row.k_bar;
    p2.start = row.k_bar;
    p2.end = row.N;
    plan.phases = {std::move(p1), std::move(p2)};
    plan.k_bar = row.k_bar;
    plan.projection = system_projection(id, cfg);
  }
  plan.validate();
  return plan;
}

}  // namespace

void PhasePlan::validate() const {
  if (phases.empty() || phases.size() > 2)
    throw InvalidArgument("PhasePlan: need 1 or 2 phases");
  if (phases.front().start != 0 || phases.back().end != schedule.N)
    throw InvalidArgument("PhasePlan: stage ranges must cover [0, N)");
  if (phases.size() == 2) {
    if (k_bar < 1 || k_bar > schedule.N - 1)
      throw InvalidArgument("PhasePlan: switching stage out of range");
    if (phases.front().end != k_bar || phases.back().start != k_bar)
      throw InvalidArgument("PhasePlan: phases must meet at k_bar");
    if (projection.source_dim != phases.front().model.n_x ||
        projection.target_dim != phases.back().model.n_x)
      throw InvalidArgument("PhasePlan: projection dims mismatch");
  }
}

Eigen::Vector2d SystemConfig::trunk_reference(double t) const {
  const double L = trunk.n_links * 2.0 * trunk.l;
  const double radius = trunk_ref_radius >= 0.0 ? trunk_ref_radius : 0.1 * L;
  const Eigen::Vector2d center =
      trunk_ref_radius >= 0.0 ? trunk_ref_center
                              : Eigen::Vector2d(0.2 * L, -0.8 * L);
  const double w = 2.0 * M_PI / trunk_ref_period;
  return center + radius * Eigen::Vector2d(std::cos(w * t), std::sin(w * t));
}

Eigen::Vector2d SystemConfig::trunk_reference_velocity(double t) const {
  const double L = trunk.n_links * 2.0 * trunk.l;
  const double radius = trunk_ref_radius >= 0.0 ? trunk_ref_radius : 0.1 * L;
  const double w = 2.0 * M_PI / trunk_ref_period;
  return radius * w * Eigen::Vector2d(-std::sin(w * t), std::cos(w * t));
}

Vec SystemConfig::initial_state(SystemId id) const {
  switch (id) {
    case SystemId::DiffDrive: return dd_x0;
    case SystemId::Drone: return drone_hover_state(drone);
    case SystemId::Trunk: return Vec::Zero(2 * trunk.n_links);
  }
  throw InvalidArgument("unknown system id");
}

PhasePlan make_baseline_plan(SystemId id, const SystemConfig& config) {
  return make_variant_plan(id, 0, config);
}

PhasePlan make_mts_plan(SystemId id, const SystemConfig& config, int k_bar) {
  VariantRow row = variant_row(id, 6);
  if (k_bar < 0 || k_bar > row.N - 1)
    throw InvalidArgument("make_mts_plan: k_bar out of range");
  if (k_bar == 0 && id != SystemId::Drone)
    throw InvalidArgument(
        "make_mts_plan: k_bar = 0 requires shared inputs (drone only)");
  row.k_bar = k_bar;
  return assemble_plan(id, config, row, 6);
}

PhasePlan make_variant_plan(SystemId id, int variant,
                            const SystemConfig& config) {
  if (variant == 3 && id != SystemId::Drone)
    throw InvalidArgument(
        "variant 3 requires full and reduced models with shared inputs");
  return assemble_plan(id, config, variant_row(id, variant), variant);
}

double reporting_stage_cost(SystemId id, const SystemConfig& config,
                            const Vec& x_full, const Vec& u, double t) {
  switch (id) {
    case SystemId::DiffDrive:
      return x_full.dot(config.dd_Q.asDiagonal() * x_full);
    case SystemId::Drone: {
      CostSpec c = drone_cost(config, /*full=*/true);
      return c.stage_value(x_full, u, t);
    }
    case SystemId::Trunk: {
      CostSpec c = trunk_full_cost(config);
      return c.stage_value(x_full, u, t);
    }
  }
  throw InvalidArgument("unknown system id");
}

}  // namespace mts
