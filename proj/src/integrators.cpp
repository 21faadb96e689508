#include "mts/integrators.hpp"

#include <Eigen/Eigenvalues>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>

namespace mts {

namespace {

ButcherTableau build_gl_tableau(int s) {
  if (s < 1 || s > 4) throw InvalidArgument("GL stages must be in 1..4");
  ButcherTableau t;
  t.s = s;
  // Golub-Welsch on [-1, 1]: nodes are eigenvalues of the Jacobi matrix,
  // weights 2 * (first eigenvector component)^2.
  Mat J = Mat::Zero(s, s);
  for (int k = 1; k < s; ++k) {
    const double beta = k / std::sqrt(4.0 * k * k - 1.0);
    J(k, k - 1) = beta;
    J(k - 1, k) = beta;
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(J);
  Vec nodes = es.eigenvalues();
  Mat vecs = es.eigenvectors();
  t.c.resize(s);
  t.b.resize(s);
  for (int i = 0; i < s; ++i) {
    t.c(i) = 0.5 * (nodes(i) + 1.0);
    t.b(i) = vecs(0, i) * vecs(0, i);  // weight/2 after the [0,1] shift
  }
  // Collocation conditions: sum_j A(i,j) c_j^{k-1} = c_i^k / k, k = 1..s.
  Mat V(s, s);
  for (int k = 0; k < s; ++k)
    for (int j = 0; j < s; ++j) V(k, j) = std::pow(t.c(j), k);
  t.A.resize(s, s);
  for (int i = 0; i < s; ++i) {
    Vec rhs(s);
    for (int k = 1; k <= s; ++k) rhs(k - 1) = std::pow(t.c(i), k) / k;
    t.A.row(i) = V.fullPivLu().solve(rhs).transpose();
  }
  // Quadrature order check up to 2s.
  for (int k = 1; k <= 2 * s; ++k) {
    double q = 0.0;
    for (int i = 0; i < s; ++i) q += t.b(i) * std::pow(t.c(i), k - 1);
    if (std::abs(q - 1.0 / k) > 1e-12)
      throw NumericalFailure("GL tableau failed order condition");
  }
  return t;
}

}  // namespace

const ButcherTableau& gauss_legendre_tableau(int s) {
  static const std::array<ButcherTableau, 4> tables = {
      build_gl_tableau(1), build_gl_tableau(2), build_gl_tableau(3),
      build_gl_tableau(4)};
  if (s < 1 || s > 4) throw InvalidArgument("GL stages must be in 1..4");
  return tables[s - 1];
}

StepResult erk4_step(const ModelDef& model, const Vec& x, const Vec& u,
                     double dt) {
  if (!(dt > 0.0)) throw InvalidArgument("erk4_step: dt must be > 0");
  const int n = model.n_x;
  const int m = model.n_u;
  const Mat I = Mat::Identity(n, n);

  const Vec k1 = model.rhs(x, u);
  const Vec x2 = x + 0.5 * dt * k1;
  const Vec k2 = model.rhs(x2, u);
  const Vec x3 = x + 0.5 * dt * k2;
  const Vec k3 = model.rhs(x3, u);
  const Vec x4 = x + dt * k3;
  const Vec k4 = model.rhs(x4, u);

  // Chain rule through the stage recursion.
  const Mat J1x = model.jac_x(x, u), J1u = model.jac_u(x, u);
  const Mat J2x = model.jac_x(x2, u), J2u = model.jac_u(x2, u);
  const Mat J3x = model.jac_x(x3, u), J3u = model.jac_u(x3, u);
  const Mat J4x = model.jac_x(x4, u), J4u = model.jac_u(x4, u);

  const Mat dk1x = J1x;
  const Mat dk2x = J2x * (I + 0.5 * dt * dk1x);
  const Mat dk3x = J3x * (I + 0.5 * dt * dk2x);
  const Mat dk4x = J4x * (I + dt * dk3x);

  const Mat dk1u = J1u;
  const Mat dk2u = J2u + J2x * (0.5 * dt * dk1u);
  const Mat dk3u = J3u + J3x * (0.5 * dt * dk2u);
  const Mat dk4u = J4u + J4x * (dt * dk3u);

  StepResult r;
  r.x_next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  r.dx_dx = I + (dt / 6.0) * (dk1x + 2.0 * dk2x + 2.0 * dk3x + dk4x);
  r.dx_du = Mat::Zero(n, m) +
            (dt / 6.0) * (dk1u + 2.0 * dk2u + 2.0 * dk3u + dk4u);
  return r;
}

namespace {

void assemble_newton_matrix(const ButcherTableau& tab, double dt,
                            const std::vector<Mat>& Jx, int n, Mat& M) {
  const int s = tab.s;
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < s; ++j) {
      Mat blk = -dt * tab.A(i, j) * Jx[i];
      if (i == j) blk += Mat::Identity(n, n);
      M.block(i * n, j * n, n, n) = blk;
    }
}

// Solves the collocation stage equations K_i = f(x + dt sum_j A_ij K_j, u)
// by a damped modified Newton iteration: the Jacobian (and its LU) is reused
// across iterations and only refreshed when contraction degrades, so each
// iteration costs s rhs evaluations instead of s Jacobians.
int solve_stages(const ModelDef& model, const Vec& x, const Vec& u, double dt,
                 const IntegratorSpec& spec, const ButcherTableau& tab,
                 Mat& K) {
  const int s = tab.s;
  const int n = model.n_x;

  // Stage derivatives, initialized with the explicit rhs at (x, u).
  const Vec f0 = model.rhs(x, u);
  K.resize(n, s);
  for (int i = 0; i < s; ++i) K.col(i) = f0;

  auto stage_state = [&](const Mat& Kc, int i) -> Vec {
    Vec xi = x;
    for (int j = 0; j < s; ++j) xi += dt * tab.A(i, j) * Kc.col(j);
    return xi;
  };
  auto residual = [&](const Mat& Kc, Vec* Fout) -> double {
    double norm = 0.0;
    for (int i = 0; i < s; ++i) {
      const Vec ri = Kc.col(i) - model.rhs(stage_state(Kc, i), u);
      if (Fout) Fout->segment(i * n, n) = ri;
      norm = std::max(norm, ri.lpNorm<Eigen::Infinity>());
      if (!std::isfinite(norm)) break;
    }
    return norm;
  };
  // Residual tolerance relative to the stage-derivative scale: stiff models
  // produce K of order 1e6 whose double-precision floor sits far above any
  // absolute tolerance.
  auto tol_scaled = [&] {
    return spec.newton_tol * (1.0 + K.cwiseAbs().maxCoeff());
  };

  Mat M(s * n, s * n);
  Vec F(s * n);
  std::vector<Mat> Jx(s);
  Eigen::PartialPivLU<Mat> lu;
  bool refresh = true;
  double f_prev = std::numeric_limits<double>::infinity();
  int iters = 0;
  bool converged = false;
  for (; iters < spec.newton_max_iter; ++iters) {
    const double f_norm = residual(K, &F);
    if (f_norm < tol_scaled()) {
      converged = true;
      break;
    }
    if (f_norm > 0.3 * f_prev) refresh = true;  // weak contraction
    f_prev = f_norm;
    if (refresh) {
      // A single Jacobian shared across stages suffices for the modified
      // Newton matrix; the stage states differ only within one substep.
      Jx.assign(s, model.jac_x(stage_state(K, 0), u));
      assemble_newton_matrix(tab, dt, Jx, n, M);
      lu.compute(M);
      refresh = false;
    }
    const Vec dK = lu.solve(F);
    const Mat dKm = Eigen::Map<const Mat>(dK.data(), n, s);
    // Damped update: backtrack on the residual norm so the iteration also
    // converges from poor initial guesses (same fixed point, merely
    // globalized). Residual trials reuse only rhs evaluations.
    double alpha = 1.0;
    for (int t = 0; t < 10; ++t, alpha *= 0.5) {
      const double f_try = residual(K - alpha * dKm, nullptr);
      if (std::isfinite(f_try) && f_try < (1.0 - 1e-4 * alpha) * f_norm) break;
    }
    K -= alpha * dKm;
    if (alpha < 1.0) refresh = true;
    if (std::getenv("MTS_IRK_TRACE"))
      std::fprintf(stderr, "    irk it=%d |F|=%.3e alpha=%.3e |K|=%.3e\n",
                   iters, f_norm, alpha, K.cwiseAbs().maxCoeff());
  }
  if (!converged) {
    // The iteration may stall at its double-precision floor slightly above
    // the target; accept anything within three orders of it.
    if (residual(K, nullptr) >= 1e3 * tol_scaled())
      throw NewtonDivergence("irk_gl_step: Newton did not converge");
  }
  return iters;
}

StepResult irk_gl_step_single(const ModelDef& model, const Vec& x, const Vec& u,
                              double dt, const IntegratorSpec& spec) {
  const ButcherTableau& tab = gauss_legendre_tableau(spec.gl_stages);
  const int s = tab.s;
  const int n = model.n_x;
  const int m = model.n_u;

  Mat K;
  const int iters = solve_stages(model, x, u, dt, spec, tab, K);

  // Sensitivities by the implicit function theorem at the converged stages.
  Mat M(s * n, s * n);
  std::vector<Mat> Jx(s);
  Mat rhs_x(s * n, n), rhs_u(s * n, m);
  for (int i = 0; i < s; ++i) {
    Vec xi = x;
    for (int j = 0; j < s; ++j) xi += dt * tab.A(i, j) * K.col(j);
    Jx[i] = model.jac_x(xi, u);
    rhs_x.middleRows(i * n, n) = Jx[i];
    rhs_u.middleRows(i * n, n) = model.jac_u(xi, u);
  }
  assemble_newton_matrix(tab, dt, Jx, n, M);
  Eigen::PartialPivLU<Mat> lu(M);
  const Mat dK_dx = lu.solve(rhs_x);
  const Mat dK_du = lu.solve(rhs_u);

  StepResult r;
  r.x_next = x;
  r.dx_dx = Mat::Identity(n, n);
  r.dx_du = Mat::Zero(n, m);
  for (int i = 0; i < s; ++i) {
    r.x_next += dt * tab.b(i) * K.col(i);
    r.dx_dx += dt * tab.b(i) * dK_dx.middleRows(i * n, n);
    r.dx_du += dt * tab.b(i) * dK_du.middleRows(i * n, n);
  }
  r.newton_iters = iters;
  return r;
}

Vec irk_gl_state_single(const ModelDef& model, const Vec& x, const Vec& u,
                        double dt, const IntegratorSpec& spec) {
  const ButcherTableau& tab = gauss_legendre_tableau(spec.gl_stages);
  Mat K;
  solve_stages(model, x, u, dt, spec, tab, K);
  Vec xn = x;
  for (int i = 0; i < tab.s; ++i) xn += dt * tab.b(i) * K.col(i);
  return xn;
}

Vec erk4_state(const ModelDef& model, const Vec& x, const Vec& u, double dt) {
  const Vec k1 = model.rhs(x, u);
  const Vec k2 = model.rhs(x + 0.5 * dt * k1, u);
  const Vec k3 = model.rhs(x + 0.5 * dt * k2, u);
  const Vec k4 = model.rhs(x + dt * k3, u);
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace

StepResult irk_gl_step(const ModelDef& model, const Vec& x, const Vec& u,
                       double dt, const IntegratorSpec& spec) {
  if (!(dt > 0.0)) throw InvalidArgument("irk_gl_step: dt must be > 0");
  return irk_gl_step_single(model, x, u, dt, spec);
}

StepResult integrate_step(const ModelDef& model, const Vec& x, const Vec& u,
                          double dt, const IntegratorSpec& spec) {
  const int n_sub = std::max(1, spec.substeps);
  auto one = [&](const Vec& xs, double h) {
    return spec.scheme == IntegratorSpec::Scheme::ERK4
               ? erk4_step(model, xs, u, h)
               : irk_gl_step(model, xs, u, h, spec);
  };
  StepResult r = one(x, dt / n_sub);
  for (int j = 1; j < n_sub; ++j) {
    const StepResult next = one(r.x_next, dt / n_sub);
    r.x_next = next.x_next;
    r.dx_dx = next.dx_dx * r.dx_dx;
    r.dx_du = next.dx_dx * r.dx_du + next.dx_du;
    r.newton_iters += next.newton_iters;
  }
  return r;
}

Vec integrate_state(const ModelDef& model, const Vec& x, const Vec& u,
                    double dt, const IntegratorSpec& spec) {
  if (!(dt > 0.0)) throw InvalidArgument("integrate_state: dt must be > 0");
  const int n_sub = std::max(1, spec.substeps);
  Vec xs = x;
  for (int j = 0; j < n_sub; ++j)
    xs = spec.scheme == IntegratorSpec::Scheme::ERK4
             ? erk4_state(model, xs, u, dt / n_sub)
             : irk_gl_state_single(model, xs, u, dt / n_sub, spec);
  return xs;
}

std::vector<Vec> simulate(const ModelDef& model, const IntegratorSpec& spec,
                          const Vec& x0, const std::vector<Vec>& us, double dt,
                          int n_steps) {
  if (us.size() != 1 && static_cast<int>(us.size()) != n_steps)
    throw InvalidArgument("simulate: need one input or one per step");
  std::vector<Vec> traj;
  traj.reserve(n_steps + 1);
  traj.push_back(x0);
  for (int k = 0; k < n_steps; ++k) {
    const Vec& u = us.size() == 1 ? us[0] : us.at(k);
    traj.push_back(integrate_state(model, traj.back(), u, dt, spec));
  }
  return traj;
}

}  // namespace mts
