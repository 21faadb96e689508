#pragma once

#include <functional>
#include <type_traits>
#include <vector>

#include "mts/common.hpp"
#include "mts/dual.hpp"

namespace mts {

enum class SystemId { DiffDrive, Drone, Trunk };

SystemId parse_system_id(const std::string& name);
std::string to_string(SystemId id);

struct DiffDriveParams {
  double m_tot = 220.0;   // total mass [kg]
  double m_c = 200.0;     // mass without wheels [kg]
  double R_w = 0.16;      // wheel radius [m]
  double L_tw = 0.32;     // half track width [m]
  double d = 0.01;        // rear-axle distance [m]
  double I_zz = 9.6;      // body inertia [kg m^2]
  double I_w = 0.1;       // wheel + motor inertia [kg m^2]
  double K_1 = 1.0;       // motor constant
  double K_2 = 1.0;       // motor constant
  double L_act = 1e-4;    // actuator inductance [H]
  double R_act = 0.05;    // actuator resistance [Ohm]
  void validate() const;
};

struct DroneParams {
  double m_d = 2.0;       // drone mass [kg]
  double m_l = 0.3;       // load mass [kg]
  double I_xx = 0.05;     // body inertia [kg m^2]
  double g = 9.81;        // gravity [m/s^2]
  double k_S = 2000.0;    // spring stiffness [N/m]
  double l_0 = 0.3;       // spring rest length [m]
  double kappa = 1.0;     // thrust constant
  double L_rot = 0.2;     // half rotor distance [m]
  double r_min = 1e-6;    // singularity guard on the spring length [m]
  // Rotor-speed box |w_i| <= w_bound. The printed value 10 leaves hover
  // (w_i = 11.28) outside the box and, with |u_i| <= 5 and dt0 = 0.02,
  // makes the first dozen shooting stages infeasible from a hover start,
  // so the default coincides with the thrust limit instead.
  double w_bound = 15.0;
  void validate() const;
};

struct TrunkParams {
  int n_links = 16;       // even, >= 2
  double m_l = 2.98e-3;   // link mass [kg]
  double l = 0.015625;    // link half length [m]
  double I_zz = 3.79e-7;  // link inertia [kg m^2]
  double c = 3.0;         // joint stiffness [N m/rad]
  double d_l = 0.15;      // joint damping [N m s/rad]
  double gear = 2.0;      // torque gear constant on the inputs
  double g = 9.81;        // gravity [m/s^2]
  void validate() const;
};

// Continuous-time dynamics description. rhs and its Jacobians are plain
// callables so integrators and the SQP stay model-agnostic.
struct ModelDef {
  int n_x = 0;
  int n_u = 0;
  bool stiff = false;
  std::function<Vec(const Vec&, const Vec&)> rhs;
  std::function<Mat(const Vec&, const Vec&)> jac_x;
  std::function<Mat(const Vec&, const Vec&)> jac_u;
};

// Differentiable map from a full-model state onto the reduced state space.
struct ProjectionMap {
  int source_dim = 0;
  int target_dim = 0;
  std::function<Vec(const Vec&)> apply;
  std::function<Mat(const Vec&)> jacobian;
};

namespace detail {

// Make the double overloads visible next to the Dual ones so that templated
// dynamics pick the right trig functions for plain doubles.
using std::abs;
using std::cos;
using std::exp;
using std::log;
using std::sin;
using std::sqrt;

template <class S>
using VecT = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <class S>
using MatT = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

// In-place Gaussian elimination with partial pivoting; works for double and
// Dual scalars alike (pivot comparison on the value part).
template <class S>
VecT<S> solve_dense(MatT<S> A, VecT<S> b) {
  const int n = static_cast<int>(A.rows());
  for (int k = 0; k < n; ++k) {
    int piv = k;
    double best = std::abs(value(A(k, k)));
    for (int i = k + 1; i < n; ++i) {
      const double cand = std::abs(value(A(i, k)));
      if (cand > best) {
        best = cand;
        piv = i;
      }
    }
    if (best == 0.0) throw NumericalFailure("solve_dense: singular matrix");
    if (piv != k) {
      A.row(piv).swap(A.row(k));
      std::swap(b(piv), b(k));
    }
    for (int i = k + 1; i < n; ++i) {
      const S f = A(i, k) / A(k, k);
      for (int j = k + 1; j < n; ++j) A(i, j) -= f * A(k, j);
      b(i) -= f * b(k);
    }
  }
  VecT<S> x(n);
  for (int i = n - 1; i >= 0; --i) {
    S acc = b(i);
    for (int j = i + 1; j < n; ++j) acc -= A(i, j) * x(j);
    x(i) = acc / A(i, i);
  }
  return x;
}

template <class S>
VecT<S> diffdrive_slow_rhs_t(const VecT<S>& x, const VecT<S>& u,
                             const DiffDriveParams& p) {
  const S v = x(2), th = x(3), om = x(4);
  const S tau_r = u(0), tau_l = u(1);
  const S a1 = (tau_r + tau_l) / p.R_w;
  const double a2 = 2.0 * p.I_w / (p.R_w * p.R_w);
  const S a3 = (tau_r - tau_l) / p.R_w;
  VecT<S> dx(5);
  dx(0) = v * cos(th);
  dx(1) = v * sin(th);
  dx(2) = (a1 + p.m_c * p.d * om * om) / (p.m_tot + a2);
  dx(3) = om;
  dx(4) = (p.L_tw * a3 - p.m_c * p.d * om * v) / (p.I_zz + p.L_tw * p.L_tw * a2);
  return dx;
}

template <class S>
VecT<S> diffdrive_full_rhs_t(const VecT<S>& x, const VecT<S>& u,
                             const DiffDriveParams& p) {
  const S v = x(2), th = x(3), om = x(4), I_r = x(5), I_l = x(6);
  const S V_r = u(0), V_l = u(1);
  VecT<S> u_tau(2);
  u_tau << p.K_1 * I_r, p.K_2 * I_l;
  VecT<S> x5 = x.head(5);
  VecT<S> mech = diffdrive_slow_rhs_t<S>(x5, u_tau, p);
  // Wheel speeds from body velocities; p_x_dot = v cos(th), p_y_dot = v sin(th).
  const S psi1 = (v + p.L_tw * om) / p.R_w;
  const S psi2 = (v - p.L_tw * om) / p.R_w;
  VecT<S> dx(7);
  dx.head(5) = mech;
  dx(5) = (V_r - p.R_act * I_r - p.K_1 * psi1) / p.L_act;
  dx(6) = (V_l - p.R_act * I_l - p.K_2 * psi2) / p.L_act;
  return dx;
}

// Full drone: x = [p_y, p_z, phi, r, theta, dp_y, dp_z, dphi, dr, dtheta, w1, w2].
template <class S>
VecT<S> drone_full_rhs_t(const VecT<S>& x, const VecT<S>& u,
                         const DroneParams& p) {
  const S phi = x(2), r = x(3), th = x(4);
  const S dphi = x(7), dr = x(8), dth = x(9);
  const S w1 = x(10), w2 = x(11);
  if (value(r) <= p.r_min)
    throw std::domain_error("drone_full_rhs: spring length at singularity");
  const S thrust = p.kappa * (w1 + w2);
  VecT<S> dx(12);
  dx(0) = x(5);
  dx(1) = x(6);
  dx(2) = dphi;
  dx(3) = dr;
  dx(4) = dth;
  dx(5) = (-thrust * sin(phi) - p.k_S * p.l_0 * sin(th) + p.k_S * r * sin(th)) / p.m_d;
  dx(6) = (-p.m_d * p.g + thrust * cos(phi) + p.k_S * p.l_0 * cos(th) -
           p.k_S * r * cos(th)) / p.m_d;
  dx(7) = p.L_rot * p.kappa * (-w1 + w2) / p.I_xx;
  dx(8) = p.k_S * (p.l_0 - r) / p.m_l + r * dth * dth +
          thrust * cos(phi - th) / p.m_d + p.k_S * (p.l_0 - r) / p.m_d;
  dx(9) = (-2.0 * p.m_d * p.m_l * dr * dth +
           p.kappa * p.m_l * (w1 + w2) * sin(phi - th)) / (p.m_d * p.m_l * r);
  dx(10) = u(0);
  dx(11) = u(1);
  return dx;
}

// Reduced drone (rigid pendulum of length l_0):
// x = [p_y, p_z, phi, theta, dp_y, dp_z, dphi, dtheta, w1, w2].
template <class S>
VecT<S> drone_slow_rhs_t(const VecT<S>& x, const VecT<S>& u,
                         const DroneParams& p) {
  const S phi = x(2), th = x(3);
  const S dth = x(7);
  const S w1 = x(8), w2 = x(9);
  const double md = p.m_d, ml = p.m_l, l0 = p.l_0, kap = p.kappa, g = p.g;
  const double den = 2.0 * md * (md + ml);
  VecT<S> dx(10);
  dx(0) = x(4);
  dx(1) = x(5);
  dx(2) = x(6);
  dx(3) = dth;
  dx(4) = (-2.0 * md * kap * (w1 + w2) * sin(phi) +
           2.0 * md * l0 * ml * sin(th) * dth * dth -
           kap * ml * (w1 * sin(phi - 2.0 * th) + w1 * sin(phi) +
                       w2 * sin(phi - 2.0 * th) + w2 * sin(phi))) / den;
  dx(5) = (-2.0 * md * md * g + 2.0 * md * kap * (w1 + w2) * cos(phi) -
           2.0 * md * g * ml - 2.0 * md * l0 * ml * cos(th) * dth * dth -
           kap * ml * (w1 * cos(phi - 2.0 * th) - w1 * cos(phi) +
                       w2 * cos(phi - 2.0 * th) - w2 * cos(phi))) / den;
  dx(6) = p.L_rot * kap * (-w1 + w2) / p.I_xx;
  dx(7) = kap * ml * (w1 + w2) * sin(phi - th) / (md * l0 * ml);
  dx(8) = u(0);
  dx(9) = u(1);
  return dx;
}

// Coordinate acceleration of the suspended load, used in the drone stage
// cost. Derived by differentiating the load position
// p_load = p + r [sin(theta), -cos(theta)] twice along the dynamics.
template <class S>
VecT<S> drone_load_accel_t(const VecT<S>& x, const DroneParams& p, bool full) {
  VecT<S> u0 = VecT<S>::Zero(2);
  S r, dr, th, dth, ddpy, ddpz, ddr, ddth;
  if (full) {
    VecT<S> dx = drone_full_rhs_t<S>(x, u0, p);
    r = x(3);
    th = x(4);
    dr = x(8);
    dth = x(9);
    ddpy = dx(5);
    ddpz = dx(6);
    ddr = dx(8);
    ddth = dx(9);
  } else {
    VecT<S> dx = drone_slow_rhs_t<S>(x, u0, p);
    r = S(p.l_0);
    th = x(3);
    dr = S(0.0);
    dth = x(7);
    ddpy = dx(4);
    ddpz = dx(5);
    ddr = S(0.0);
    ddth = dx(7);
  }
  const S st = sin(th), ct = cos(th);
  VecT<S> a(2);
  a(0) = ddpy + ddr * st + 2.0 * dr * dth * ct + r * ddth * ct - r * dth * dth * st;
  a(1) = ddpz - ddr * ct + 2.0 * dr * dth * st + r * ddth * st + r * dth * dth * ct;
  return a;
}

// Planar serial chain hanging along -z at q = 0. Link i points along
// d_i = (-sin a_i, -cos a_i) with a_i the cumulative joint angle.
template <class S>
VecT<S> trunk_fk_t(const VecT<S>& q, const TrunkParams& p) {
  const int n = p.n_links;
  VecT<S> ee = VecT<S>::Zero(2);
  S a = S(0.0);
  for (int i = 0; i < n; ++i) {
    a += q(i);
    ee(0) -= 2.0 * p.l * sin(a);
    ee(1) -= 2.0 * p.l * cos(a);
  }
  return ee;
}

template <class S>
MatT<S> trunk_ee_jacobian_t(const VecT<S>& q, const TrunkParams& p) {
  const int n = p.n_links;
  // Column j = 2l * sum_{i>=j} e_i with e_i = d(d_i)/da = (-cos a_i, sin a_i).
  std::vector<S> ca(n), sa(n);
  S a = S(0.0);
  for (int i = 0; i < n; ++i) {
    a += q(i);
    ca[i] = cos(a);
    sa[i] = sin(a);
  }
  MatT<S> J = MatT<S>::Zero(2, n);
  S sx = S(0.0), sy = S(0.0);
  for (int j = n - 1; j >= 0; --j) {
    sx += -2.0 * p.l * ca[j];
    sy += 2.0 * p.l * sa[j];
    J(0, j) = sx;
    J(1, j) = sy;
  }
  return J;
}

template <class S>
VecT<S> trunk_full_rhs_t(const VecT<S>& x, const VecT<S>& u,
                         const TrunkParams& p) {
  const int n = p.n_links;
  const VecT<S> q = x.head(n);
  const VecT<S> qd = x.tail(n);

  // Cumulative angles, link directions and their derivatives.
  std::vector<S> a(n), ad(n);
  std::vector<S> dx_(n), dz_(n), ex_(n), ez_(n);
  {
    S acc = S(0.0), accd = S(0.0);
    for (int i = 0; i < n; ++i) {
      acc += q(i);
      accd += qd(i);
      a[i] = acc;
      ad[i] = accd;
      dx_[i] = -sin(acc);
      dz_[i] = -cos(acc);
      ex_[i] = -cos(acc);
      ez_[i] = sin(acc);
    }
  }

  // Prefix sums of e_m (for COM position Jacobians) and of the centripetal
  // terms -d_m * ad_m^2 (for the zero-acceleration COM accelerations).
  std::vector<S> Px(n + 1, S(0.0)), Pz(n + 1, S(0.0));
  std::vector<S> Cx(n + 1, S(0.0)), Cz(n + 1, S(0.0));
  for (int m = 0; m < n; ++m) {
    Px[m + 1] = Px[m] + ex_[m];
    Pz[m + 1] = Pz[m] + ez_[m];
    Cx[m + 1] = Cx[m] - dx_[m] * ad[m] * ad[m];
    Cz[m + 1] = Cz[m] - dz_[m] * ad[m] * ad[m];
  }

  MatT<S> M = MatT<S>::Zero(n, n);
  VecT<S> h = VecT<S>::Zero(n);
  MatT<S> Jc(2, n);
  const double ml = p.m_l, l = p.l;
  for (int i = 0; i < n; ++i) {
    // dc_i/dq_j = 2l * sum_{m=j}^{i-1} e_m + l e_i for j <= i.
    for (int j = 0; j <= i; ++j) {
      Jc(0, j) = 2.0 * l * (Px[i] - Px[j]) + l * ex_[i];
      Jc(1, j) = 2.0 * l * (Pz[i] - Pz[j]) + l * ez_[i];
    }
    // COM acceleration at zero joint acceleration (centripetal only).
    const S c0x = 2.0 * l * Cx[i] - l * dx_[i] * ad[i] * ad[i];
    const S c0z = 2.0 * l * Cz[i] - l * dz_[i] * ad[i] * ad[i];
    for (int j = 0; j <= i; ++j) {
      for (int k = 0; k <= i; ++k)
        M(j, k) += ml * (Jc(0, j) * Jc(0, k) + Jc(1, j) * Jc(1, k)) + p.I_zz;
      h(j) += ml * (c0x * Jc(0, j) + c0z * Jc(1, j)) + ml * p.g * Jc(1, j);
    }
  }
  for (int j = 0; j < n; ++j) h(j) += p.c * q(j) + p.d_l * qd(j);

  VecT<S> tau(n);
  for (int j = 0; j < n; ++j)
    tau(j) = p.gear * (j < n / 2 ? u(0) : u(1));

  VecT<S> qdd = solve_dense<S>(M, VecT<S>(tau - h));
  VecT<S> dx(2 * n);
  dx.head(n) = qd;
  dx.tail(n) = qdd;
  return dx;
}

}  // namespace detail

// Wraps a scalar-generic rhs callable into a ModelDef; Jacobians come from
// forward-mode dual numbers.
template <class F>
ModelDef make_model(int n_x, int n_u, bool stiff, F f) {
  ModelDef m;
  m.n_x = n_x;
  m.n_u = n_u;
  m.stiff = stiff;
  m.rhs = [f](const Vec& x, const Vec& u) -> Vec {
    detail::VecT<double> r = f(detail::VecT<double>(x), detail::VecT<double>(u));
    return r;
  };
  m.jac_x = [f, n_x](const Vec& x, const Vec& u) -> Mat {
    detail::VecT<Dual> xd = x.cast<Dual>();
    detail::VecT<Dual> ud = u.cast<Dual>();
    Mat J;
    for (int j = 0; j < n_x; ++j) {
      xd(j).d = 1.0;
      detail::VecT<Dual> r = f(xd, ud);
      xd(j).d = 0.0;
      if (j == 0) J.resize(r.size(), n_x);
      for (int i = 0; i < r.size(); ++i) J(i, j) = r(i).d;
    }
    return J;
  };
  m.jac_u = [f, n_u](const Vec& x, const Vec& u) -> Mat {
    detail::VecT<Dual> xd = x.cast<Dual>();
    detail::VecT<Dual> ud = u.cast<Dual>();
    Mat J;
    for (int j = 0; j < n_u; ++j) {
      ud(j).d = 1.0;
      detail::VecT<Dual> r = f(xd, ud);
      ud(j).d = 0.0;
      if (j == 0) J.resize(r.size(), n_u);
      for (int i = 0; i < r.size(); ++i) J(i, j) = r(i).d;
    }
    return J;
  };
  return m;
}

// Plain-double entry points.
Vec diffdrive_full_rhs(const Vec& x, const Vec& u, const DiffDriveParams& p);
Vec diffdrive_slow_rhs(const Vec& x, const Vec& u, const DiffDriveParams& p);
Vec drone_full_rhs(const Vec& x, const Vec& u, const DroneParams& p);
Vec drone_slow_rhs(const Vec& x, const Vec& u, const DroneParams& p);
Vec trunk_full_rhs(const Vec& x, const Vec& u, const TrunkParams& p);
Eigen::Vector2d trunk_fk(const Vec& q, const TrunkParams& p);
Mat trunk_ee_jacobian(const Vec& q, const TrunkParams& p);

// Total mechanical energy (kinetic + gravitational + spring) of the trunk.
double trunk_energy(const Vec& x, const TrunkParams& p);

ModelDef diffdrive_full_model(const DiffDriveParams& p);
ModelDef diffdrive_slow_model(const DiffDriveParams& p);
ModelDef drone_full_model(const DroneParams& p);
ModelDef drone_slow_model(const DroneParams& p);
ModelDef trunk_full_model(const TrunkParams& p);
ModelDef trunk_slow_model();

// Hover equilibrium of the full drone model.
Vec drone_hover_state(const DroneParams& p);
Vec drone_hover_input(const DroneParams& p);

ProjectionMap diffdrive_projection();
ProjectionMap drone_projection();
ProjectionMap trunk_projection(const TrunkParams& p);

}  // namespace mts
