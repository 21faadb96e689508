#pragma once

#include <vector>

#include "mts/common.hpp"

namespace mts {

enum class ScheduleMode { Uniform, Exponential };

struct ScheduleSpec {
  double dt0 = 0.0;
  int N = 0;
  double T = 0.0;
  ScheduleMode mode = ScheduleMode::Uniform;
  double alpha = 1.0;
  std::vector<double> dts;  // dt_k = dt0 * alpha^k, length N

  // Time offset of stage k from the start of the horizon.
  double stage_time(int k) const {
    double t = 0.0;
    for (int j = 0; j < k; ++j) t += dts[j];
    return t;
  }
};

// Exponential mode solves sum_{k<N} dt0 * alpha^k = T for alpha >= 1 by
// bisection on the geometric-sum equation.
ScheduleSpec build_schedule(double dt0, int N, double T, ScheduleMode mode);

}  // namespace mts
