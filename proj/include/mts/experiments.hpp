#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mts/sqp.hpp"

namespace mts {

struct ClosedLoopConfig {
  SystemId system = SystemId::DiffDrive;
  int variant = 0;
  double duration = -1.0;  // < 0: system default (10 s / 3 s / 2 s)
  int plant_gl_stages = 2;
  int plant_substeps = 10;  // plant step = dt0 / substeps
  std::optional<Vec> initial_state;
  std::uint64_t seed = 0;
  SqpSettings sqp;  // lm_reg / kkt_tol < 0 pick the per-system defaults
  SystemConfig config;

  ClosedLoopConfig() {
    sqp.lm_reg = -1.0;
    sqp.kkt_tol = -1.0;
  }
};

struct ClosedLoopRow {
  double t = 0.0;
  Vec x_plant;
  Vec u;
  double stage_cost = 0.0;
  double solve_time = 0.0;  // seconds, wall clock around sqp_solve
  int sqp_iters = 0;
  bool solver_failed = false;
};

struct ClosedLoopLog {
  std::vector<ClosedLoopRow> rows;
  Vec x_final;
  bool aborted = false;           // 5 consecutive solver failures
  bool aggregates_valid = false;  // false for empty runs
  double mean_cost = 0.0, std_cost = 0.0;
  double mean_solve = 0.0, std_solve = 0.0;
  double mean_iter_time = 0.0, std_iter_time = 0.0;

  void compute_aggregates();
};

double system_default_duration(SystemId id);

// Closed loop: warm-started MPC at period dt0, plant integrated with GL
// substeps, stage cost reported with the baseline full-model cost for every
// variant. The plan overload drives an arbitrary (e.g. sweep) plan.
ClosedLoopLog run_closed_loop(const ClosedLoopConfig& cfg);
ClosedLoopLog run_closed_loop(const ClosedLoopConfig& cfg,
                              const PhasePlan& plan);

struct VariantResult {
  int variant = 0;
  int n_shooting_vars = 0;
  ClosedLoopLog log;
};

std::vector<int> default_variants(SystemId id);

// Runs each variant from the same initial state; parallel across variants
// (worker count capped by MTS_MPC_THREADS).
std::vector<VariantResult> compare_variants(const ClosedLoopConfig& cfg,
                                            const std::vector<int>& variants);

struct SweepResult {
  std::vector<int> candidates;
  std::vector<double> mean_cost;
  std::vector<double> rel_increase;  // vs. the variant-0 baseline
  double baseline_cost = 0.0;
  double epsilon = 0.0;
  int chosen = -1;  // smallest passing candidate, -1 when none passes
};

// Switching-stage sweep: closed-loop cost of the MTS plan for each candidate
// k_bar against the variant-0 baseline; candidates must be sorted ascending.
SweepResult tune_switching_stage(const ClosedLoopConfig& cfg,
                                 const std::vector<int>& candidates,
                                 double epsilon);

int worker_count();  // MTS_MPC_THREADS or hardware concurrency

}  // namespace mts
