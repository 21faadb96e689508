#pragma once

#include <vector>

#include "mts/models.hpp"

namespace mts {

struct IntegratorSpec {
  enum class Scheme { ERK4, GL };
  Scheme scheme = Scheme::ERK4;
  int gl_stages = 4;             // s in 1..4, order 2s
  double newton_tol = 1e-12;  // relative to the stage-derivative scale
  int newton_max_iter = 20;
  // Internal integration steps per call, fixed a priori so the discrete map
  // does not depend on the state (smaller steps enlarge the Newton basin on
  // very stiff models).
  int substeps = 1;

  static IntegratorSpec erk4() { return {}; }
  static IntegratorSpec gl(int s) {
    IntegratorSpec spec;
    spec.scheme = Scheme::GL;
    spec.gl_stages = s;
    return spec;
  }
};

struct ButcherTableau {
  int s = 0;
  Mat A;
  Vec b;
  Vec c;
};

// Gauss-Legendre collocation tableau; nodes/weights via Golub-Welsch, the A
// matrix from the collocation conditions. Order conditions up to 2s are
// verified on construction.
const ButcherTableau& gauss_legendre_tableau(int s);

struct StepResult {
  Vec x_next;
  Mat dx_dx;   // sensitivity of the step map w.r.t. x
  Mat dx_du;   // sensitivity w.r.t. u
  int newton_iters = 0;
};

StepResult erk4_step(const ModelDef& model, const Vec& x, const Vec& u, double dt);

StepResult irk_gl_step(const ModelDef& model, const Vec& x, const Vec& u,
                       double dt, const IntegratorSpec& spec);

StepResult integrate_step(const ModelDef& model, const Vec& x, const Vec& u,
                          double dt, const IntegratorSpec& spec);

// Same step map without sensitivities; cheaper for merit evaluations and
// plant rollouts.
Vec integrate_state(const ModelDef& model, const Vec& x, const Vec& u,
                    double dt, const IntegratorSpec& spec);

// Repeated one-step application with a piecewise-constant input schedule.
// us must have n_steps entries (or exactly one, reused for every step).
std::vector<Vec> simulate(const ModelDef& model, const IntegratorSpec& spec,
                          const Vec& x0, const std::vector<Vec>& us, double dt,
                          int n_steps);

}  // namespace mts
