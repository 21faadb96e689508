#include "mts/experiments.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>

namespace mts {

namespace {

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

MeanStd mean_std(const std::vector<double>& v) {
  MeanStd ms;
  if (v.empty()) return ms;
  for (double x : v) ms.mean += x;
  ms.mean /= static_cast<double>(v.size());
  double acc = 0.0;
  for (double x : v) acc += (x - ms.mean) * (x - ms.mean);
  ms.std = std::sqrt(acc / static_cast<double>(v.size()));
  return ms;
}

SqpSettings resolve_settings(const ClosedLoopConfig& cfg) {
  SqpSettings s = cfg.sqp;
  if (s.lm_reg < 0.0) {
    s.lm_reg = cfg.system == SystemId::Drone ? cfg.config.drone_lm_reg : 0.0;
    if (cfg.system == SystemId::Trunk) s.lm_init = cfg.config.trunk_lm_reg;
  }
  // Per-system stationarity tolerances for the closed loop. The diff-drive
  // cost gradients are of order 1e4-1e6 and the trunk Gauss-Newton iteration
  // is only linearly convergent, so an absolute 1e-6 would burn the whole
  // iteration budget every period without changing the applied input.
  if (s.kkt_tol < 0.0)
    s.kkt_tol = cfg.system == SystemId::Drone ? 1e-6 : 1e-3;
  return s;
}

ModelDef plant_model(const ClosedLoopConfig& cfg) {
  switch (cfg.system) {
    case SystemId::DiffDrive: return diffdrive_full_model(cfg.config.diffdrive);
    case SystemId::Drone: return drone_full_model(cfg.config.drone);
    case SystemId::Trunk: return trunk_full_model(cfg.config.trunk);
  }
  throw InvalidArgument("unknown system id");
}

}  // namespace

void ClosedLoopLog::compute_aggregates() {
  aggregates_valid = !rows.empty();
  if (!aggregates_valid) return;
  std::vector<double> costs, solves, iter_times;
  costs.reserve(rows.size());
  solves.reserve(rows.size());
  for (const auto& r : rows) {
    costs.push_back(r.stage_cost);
    solves.push_back(r.solve_time);
    if (r.sqp_iters > 0)
      iter_times.push_back(r.solve_time / static_cast<double>(r.sqp_iters));
  }
  const MeanStd c = mean_std(costs), s = mean_std(solves),
                it = mean_std(iter_times);
  mean_cost = c.mean;
  std_cost = c.std;
  mean_solve = s.mean;
  std_solve = s.std;
  mean_iter_time = it.mean;
  std_iter_time = it.std;
}

double system_default_duration(SystemId id) {
  switch (id) {
    case SystemId::DiffDrive: return 10.0;
    case SystemId::Drone: return 3.0;
    case SystemId::Trunk: return 2.0;
  }
  throw InvalidArgument("unknown system id");
}

ClosedLoopLog run_closed_loop(const ClosedLoopConfig& cfg) {
  const PhasePlan plan =
      make_variant_plan(cfg.system, cfg.variant, cfg.config);
  return run_closed_loop(cfg, plan);
}

ClosedLoopLog run_closed_loop(const ClosedLoopConfig& cfg,
                              const PhasePlan& plan) {
  const double dt0 = plan.schedule.dt0;
  const double duration =
      cfg.duration >= 0.0 ? cfg.duration : system_default_duration(cfg.system);
  const double steps_frac = duration / dt0;
  const int n_steps = static_cast<int>(std::llround(steps_frac));
  if (std::abs(steps_frac - n_steps) > 1e-6)
    throw InvalidArgument("run_closed_loop: duration must be a multiple of dt0");
  if (cfg.plant_substeps < 2)
    throw InvalidArgument("run_closed_loop: plant step must be <= dt0 / 2");

  const ModelDef plant = plant_model(cfg);
  const IntegratorSpec plant_integ = IntegratorSpec::gl(cfg.plant_gl_stages);
  const double dt_plant = dt0 / cfg.plant_substeps;
  const SqpSettings settings = resolve_settings(cfg);

  Vec x_plant = cfg.initial_state ? *cfg.initial_state
                                  : cfg.config.initial_state(cfg.system);
  ClosedLoopLog log;
  log.rows.reserve(n_steps);
  SqpWorkspace ws;
  Vec u_prev = Vec::Zero(plan.n_u(0));
  int consecutive_failures = 0;

  for (int step = 0; step < n_steps; ++step) {
    const double t = step * dt0;
    ClosedLoopRow row;
    row.t = t;
    row.x_plant = x_plant;

    const Vec x_init =
        plan.project_initial ? plan.projection.apply(x_plant) : x_plant;
    Vec u0 = u_prev;
    const auto tic = std::chrono::steady_clock::now();
    try {
      if (ws.valid) warm_start_shift(ws, plan);
      const SqpStats stats = sqp_solve(plan, x_init, t, ws, settings);
      row.sqp_iters = stats.iterations;
      u0 = ws.u.front();
      consecutive_failures = 0;
    } catch (const std::exception&) {
      row.solver_failed = true;
      ws.valid = false;  // cold start on the next period
      ++consecutive_failures;
    }
    row.solve_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - tic)
            .count();
    row.u = u0;
    row.stage_cost = reporting_stage_cost(cfg.system, cfg.config, x_plant, u0, t);
    log.rows.push_back(row);
    if (consecutive_failures >= 5) {
      log.aborted = true;
      break;
    }

    for (int i = 0; i < cfg.plant_substeps; ++i)
      x_plant = integrate_state(plant, x_plant, u0, dt_plant, plant_integ);
    u_prev = u0;
  }
  log.x_final = x_plant;
  log.compute_aggregates();
  return log;
}

std::vector<int> default_variants(SystemId id) {
  // Variant 3 needs shared full/reduced inputs, available only on the drone.
  if (id == SystemId::Drone) return {0, 1, 2, 3, 4, 5, 6};
  return {0, 1, 2, 4, 5, 6};
}

int worker_count() {
  if (const char* env = std::getenv("MTS_MPC_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

namespace {

// Index-parallel fan-out with a shared work counter.
void parallel_for(int n_jobs, const std::function<void(int)>& body) {
  const int workers = std::min(worker_count(), n_jobs);
  if (workers <= 1) {
    for (int i = 0; i < n_jobs; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex error_mutex;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n_jobs; i = next.fetch_add(1)) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

std::vector<VariantResult> compare_variants(const ClosedLoopConfig& cfg,
                                            const std::vector<int>& variants) {
  std::vector<VariantResult> results(variants.size());
  parallel_for(static_cast<int>(variants.size()), [&](int i) {
    ClosedLoopConfig run_cfg = cfg;
    run_cfg.variant = variants[i];
    const PhasePlan plan =
        make_variant_plan(cfg.system, variants[i], cfg.config);
    results[i].variant = variants[i];
    results[i].n_shooting_vars = plan.shooting_variable_count();
    results[i].log = run_closed_loop(run_cfg, plan);
  });
  return results;
}

SweepResult tune_switching_stage(const ClosedLoopConfig& cfg,
                                 const std::vector<int>& candidates,
                                 double epsilon) {
  if (candidates.empty())
    throw InvalidArgument("tune_switching_stage: no candidates");
  for (size_t i = 1; i < candidates.size(); ++i)
    if (candidates[i] <= candidates[i - 1])
      throw InvalidArgument("tune_switching_stage: candidates must ascend");
  if (epsilon < 0.0)
    throw InvalidArgument("tune_switching_stage: epsilon must be nonnegative");

  SweepResult res;
  res.candidates = candidates;
  res.epsilon = epsilon;
  res.mean_cost.assign(candidates.size(), 0.0);
  res.rel_increase.assign(candidates.size(), 0.0);

  ClosedLoopConfig base_cfg = cfg;
  base_cfg.variant = 0;
  const int n_jobs = static_cast<int>(candidates.size()) + 1;
  parallel_for(n_jobs, [&](int i) {
    if (i == 0) {
      res.baseline_cost = run_closed_loop(base_cfg).mean_cost;
      return;
    }
    const PhasePlan plan =
        make_mts_plan(cfg.system, cfg.config, candidates[i - 1]);
    ClosedLoopConfig run_cfg = cfg;
    run_cfg.variant = plan.variant;
    res.mean_cost[i - 1] = run_closed_loop(run_cfg, plan).mean_cost;
  });
  for (size_t i = 0; i < candidates.size(); ++i) {
    res.rel_increase[i] =
        (res.mean_cost[i] - res.baseline_cost) / std::abs(res.baseline_cost);
    if (res.chosen < 0 && res.rel_increase[i] < epsilon)
      res.chosen = candidates[i];
  }
  return res;
}

}  // namespace mts
