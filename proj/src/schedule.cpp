#include "mts/schedule.hpp"

#include <cmath>

namespace mts {

namespace {

double geometric_sum(double dt0, int N, double alpha) {
  if (std::abs(alpha - 1.0) < 1e-14) return N * dt0;
  return dt0 * (std::pow(alpha, N) - 1.0) / (alpha - 1.0);
}

}  // namespace

ScheduleSpec build_schedule(double dt0, int N, double T, ScheduleMode mode) {
  if (!(dt0 > 0.0)) throw InvalidArgument("build_schedule: dt0 must be > 0");
  if (N < 1) throw InvalidArgument("build_schedule: N must be >= 1");

  ScheduleSpec s;
  s.dt0 = dt0;
  s.N = N;
  s.T = T;
  s.mode = mode;

  if (mode == ScheduleMode::Uniform) {
    if (std::abs(N * dt0 - T) > 1e-9 * std::max(1.0, T))
      throw InfeasibleSchedule("uniform schedule requires T = N * dt0");
    s.alpha = 1.0;
  } else {
    if (T < N * dt0 - 1e-12)
      throw InfeasibleSchedule("exponential schedule requires T >= N * dt0");
    if (std::abs(T - N * dt0) <= 1e-12) {
      s.alpha = 1.0;
    } else {
      double lo = 1.0, hi = 1.0;
      while (geometric_sum(dt0, N, hi) < T) hi = 1.0 + 2.0 * (hi - 1.0) + 1e-6;
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double g = geometric_sum(dt0, N, mid) - T;
        if (std::abs(g) < 1e-12) {
          lo = hi = mid;
          break;
        }
        (g < 0.0 ? lo : hi) = mid;
      }
      s.alpha = 0.5 * (lo + hi);
    }
  }

  s.dts.resize(N);
  double dt = dt0;
  for (int k = 0; k < N; ++k) {
    s.dts[k] = dt;
    dt *= s.alpha;
  }
  return s;
}

}  // namespace mts
