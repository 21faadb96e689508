#include "mts/models.hpp"

namespace mts {

namespace {
void require_positive(double v, const char* name) {
  if (!(v > 0.0)) throw InvalidArgument(std::string(name) + " must be > 0");
}
}  // namespace

SystemId parse_system_id(const std::string& name) {
  if (name == "diffdrive" || name == "diff-drive") return SystemId::DiffDrive;
  if (name == "drone") return SystemId::Drone;
  if (name == "trunk") return SystemId::Trunk;
  throw InvalidArgument("unknown system id: " + name);
}

std::string to_string(SystemId id) {
  switch (id) {
    case SystemId::DiffDrive: return "diffdrive";
    case SystemId::Drone: return "drone";
    case SystemId::Trunk: return "trunk";
  }
  return "?";
}

void DiffDriveParams::validate() const {
  require_positive(m_tot, "m_tot");
  require_positive(m_c, "m_c");
  require_positive(R_w, "R_w");
  require_positive(L_tw, "L_tw");
  require_positive(d, "d");
  require_positive(I_zz, "I_zz");
  require_positive(I_w, "I_w");
  require_positive(K_1, "K_1");
  require_positive(K_2, "K_2");
  require_positive(L_act, "L_act");
  require_positive(R_act, "R_act");
}

void DroneParams::validate() const {
  require_positive(m_d, "m_d");
  require_positive(m_l, "m_l");
  require_positive(I_xx, "I_xx");
  require_positive(g, "g");
  require_positive(k_S, "k_S");
  require_positive(l_0, "l_0");
  require_positive(kappa, "kappa");
  require_positive(L_rot, "L_rot");
  require_positive(w_bound, "w_bound");
}

void TrunkParams::validate() const {
  if (n_links < 2 || n_links % 2 != 0)
    throw InvalidArgument("n_links must be even and >= 2");
  require_positive(m_l, "m_l");
  require_positive(l, "l");
  require_positive(I_zz, "I_zz");
  require_positive(c, "c");
  require_positive(d_l, "d_l");
  require_positive(gear, "gear");
  require_positive(g, "g");
}

Vec diffdrive_full_rhs(const Vec& x, const Vec& u, const DiffDriveParams& p) {
  return detail::diffdrive_full_rhs_t<double>(x, u, p);
}
Vec diffdrive_slow_rhs(const Vec& x, const Vec& u, const DiffDriveParams& p) {
  return detail::diffdrive_slow_rhs_t<double>(x, u, p);
}
Vec drone_full_rhs(const Vec& x, const Vec& u, const DroneParams& p) {
  return detail::drone_full_rhs_t<double>(x, u, p);
}
Vec drone_slow_rhs(const Vec& x, const Vec& u, const DroneParams& p) {
  return detail::drone_slow_rhs_t<double>(x, u, p);
}
Vec trunk_full_rhs(const Vec& x, const Vec& u, const TrunkParams& p) {
  return detail::trunk_full_rhs_t<double>(x, u, p);
}
Eigen::Vector2d trunk_fk(const Vec& q, const TrunkParams& p) {
  return detail::trunk_fk_t<double>(q, p);
}
Mat trunk_ee_jacobian(const Vec& q, const TrunkParams& p) {
  return detail::trunk_ee_jacobian_t<double>(q, p);
}

double trunk_energy(const Vec& x, const TrunkParams& p) {
  const int n = p.n_links;
  const Vec q = x.head(n);
  const Vec qd = x.tail(n);
  double E = 0.0;
  Vec a(n), ad(n);
  {
    double acc = 0.0, accd = 0.0;
    for (int i = 0; i < n; ++i) {
      acc += q(i);
      accd += qd(i);
      a(i) = acc;
      ad(i) = accd;
    }
  }
  Eigen::Vector2d joint = Eigen::Vector2d::Zero();
  Eigen::Vector2d joint_vel = Eigen::Vector2d::Zero();
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d d(-std::sin(a(i)), -std::cos(a(i)));
    const Eigen::Vector2d e(-std::cos(a(i)), std::sin(a(i)));
    const Eigen::Vector2d com = joint + p.l * d;
    const Eigen::Vector2d com_vel = joint_vel + p.l * ad(i) * e;
    E += 0.5 * p.m_l * com_vel.squaredNorm() + 0.5 * p.I_zz * ad(i) * ad(i);
    E += p.m_l * p.g * com(1);
    E += 0.5 * p.c * q(i) * q(i);
    joint += 2.0 * p.l * d;
    joint_vel += 2.0 * p.l * ad(i) * e;
  }
  return E;
}

ModelDef diffdrive_full_model(const DiffDriveParams& p) {
  p.validate();
  return make_model(7, 2, /*stiff=*/true, [p](const auto& x, const auto& u) {
    return detail::diffdrive_full_rhs_t(x, u, p);
  });
}

ModelDef diffdrive_slow_model(const DiffDriveParams& p) {
  p.validate();
  return make_model(5, 2, /*stiff=*/false, [p](const auto& x, const auto& u) {
    return detail::diffdrive_slow_rhs_t(x, u, p);
  });
}

ModelDef drone_full_model(const DroneParams& p) {
  p.validate();
  return make_model(12, 2, /*stiff=*/false, [p](const auto& x, const auto& u) {
    return detail::drone_full_rhs_t(x, u, p);
  });
}

ModelDef drone_slow_model(const DroneParams& p) {
  p.validate();
  return make_model(10, 2, /*stiff=*/false, [p](const auto& x, const auto& u) {
    return detail::drone_slow_rhs_t(x, u, p);
  });
}

ModelDef trunk_full_model(const TrunkParams& p) {
  p.validate();
  const int n = 2 * p.n_links;
  return make_model(n, 2, /*stiff=*/true, [p](const auto& x, const auto& u) {
    return detail::trunk_full_rhs_t(x, u, p);
  });
}

ModelDef trunk_slow_model() {
  // End-effector as a point mass; the input is its acceleration.
  return make_model(4, 2, /*stiff=*/false, [](const auto& x, const auto& u) {
    using VecS = std::remove_cvref_t<decltype(x.eval())>;
    VecS dx(4);
    dx(0) = x(2);
    dx(1) = x(3);
    dx(2) = u(0);
    dx(3) = u(1);
    return dx;
  });
}

Vec drone_hover_state(const DroneParams& p) {
  Vec x = Vec::Zero(12);
  x(3) = p.l_0 + p.m_l * p.g / p.k_S;
  const double w = (p.m_d + p.m_l) * p.g / (2.0 * p.kappa);
  x(10) = w;
  x(11) = w;
  return x;
}

Vec drone_hover_input(const DroneParams&) { return Vec::Zero(2); }

ProjectionMap diffdrive_projection() {
  ProjectionMap phi;
  phi.source_dim = 7;
  phi.target_dim = 5;
  phi.apply = [](const Vec& x) -> Vec { return x.head(5); };
  phi.jacobian = [](const Vec&) -> Mat {
    Mat J = Mat::Zero(5, 7);
    J.leftCols(5).setIdentity();
    return J;
  };
  return phi;
}

ProjectionMap drone_projection() {
  // Drop r and dr (indices 3 and 8 of the full state).
  ProjectionMap phi;
  phi.source_dim = 12;
  phi.target_dim = 10;
  static const int keep[10] = {0, 1, 2, 4, 5, 6, 7, 9, 10, 11};
  phi.apply = [](const Vec& x) -> Vec {
    Vec y(10);
    for (int i = 0; i < 10; ++i) y(i) = x(keep[i]);
    return y;
  };
  phi.jacobian = [](const Vec&) -> Mat {
    Mat J = Mat::Zero(10, 12);
    for (int i = 0; i < 10; ++i) J(i, keep[i]) = 1.0;
    return J;
  };
  return phi;
}

ProjectionMap trunk_projection(const TrunkParams& p) {
  p.validate();
  const int n = p.n_links;
  ProjectionMap phi;
  phi.source_dim = 2 * n;
  phi.target_dim = 4;
  phi.apply = [p, n](const Vec& x) -> Vec {
    Vec y(4);
    y.head(2) = detail::trunk_fk_t<double>(Vec(x.head(n)), p);
    y.tail(2) = detail::trunk_ee_jacobian_t<double>(Vec(x.head(n)), p) * x.tail(n);
    return y;
  };
  phi.jacobian = [p, n](const Vec& x) -> Mat {
    detail::VecT<Dual> xd = x.cast<Dual>();
    Mat J(4, 2 * n);
    for (int j = 0; j < 2 * n; ++j) {
      xd(j).d = 1.0;
      detail::VecT<Dual> q = xd.head(n);
      detail::VecT<Dual> qd = xd.tail(n);
      detail::VecT<Dual> pe = detail::trunk_fk_t<Dual>(q, p);
      detail::VecT<Dual> ve = detail::trunk_ee_jacobian_t<Dual>(q, p) * qd;
      J(0, j) = pe(0).d;
      J(1, j) = pe(1).d;
      J(2, j) = ve(0).d;
      J(3, j) = ve(1).d;
      xd(j).d = 0.0;
    }
    return J;
  };
  return phi;
}

}  // namespace mts
