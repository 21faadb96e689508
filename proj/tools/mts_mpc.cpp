#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "mts/config.hpp"
#include "mts/eds.hpp"
#include "mts/schedule.hpp"

namespace {

using namespace mts;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

std::ofstream open_csv(const std::string& dir, const std::string& name) {
  std::filesystem::create_directories(dir);
  const auto path = std::filesystem::path(dir) / name;
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out.precision(12);
  return out;
}

int cmd_eds(const RunConfig& cfg) {
  std::ofstream out = open_csv(cfg.out_dir, "eds.csv");
  out << "# sensitivity of the first optimal input to stage disturbances\n";
  out << "seed,k,frobenius_norm,slope,r2\n";
  std::vector<double> slopes;
  for (const auto seed : cfg.eds.seeds) {
    const LqInstance inst = random_instance(seed, cfg.eds.n, cfg.eds.m,
                                            cfg.eds.N, cfg.eds.spectral_radius);
    const std::vector<double> norms = sensitivity_norms(inst);
    const DecayFit fit = decay_fit(norms);
    slopes.push_back(fit.slope);
    for (size_t k = 0; k < norms.size(); ++k)
      out << seed << ',' << k << ',' << norms[k] << ',' << fit.slope << ','
          << fit.r2 << '\n';
  }
  if (!slopes.empty()) {
    std::sort(slopes.begin(), slopes.end());
    std::cout << "eds: " << cfg.eds.seeds.size() << " instances, median slope "
              << slopes[slopes.size() / 2] << "\n";
  }
  return kExitOk;
}

int cmd_compare(const RunConfig& cfg) {
  const SystemId id = cfg.loop.system;
  const std::vector<int> variants =
      cfg.variants.empty() ? default_variants(id) : cfg.variants;
  const auto results = compare_variants(cfg.loop, variants);

  std::ofstream out =
      open_csv(cfg.out_dir, "results_" + to_string(id) + ".csv");
  out << "# timing columns are environment-dependent\n";
  out << "variant,mean_cost,std_cost,mean_solve_s,std_solve_s,"
         "mean_iter_s,std_iter_s,n_shooting_vars\n";
  bool aborted = false;
  for (const auto& r : results) {
    out << r.variant << ',' << r.log.mean_cost << ',' << r.log.std_cost << ','
        << r.log.mean_solve << ',' << r.log.std_solve << ','
        << r.log.mean_iter_time << ',' << r.log.std_iter_time << ','
        << r.n_shooting_vars << '\n';
    aborted = aborted || r.log.aborted;

    std::ofstream traj = open_csv(
        cfg.out_dir,
        "traj_" + to_string(id) + "_" + std::to_string(r.variant) + ".csv");
    traj << "# timing columns are environment-dependent\n";
    traj << "t,stage_cost,solve_s,sqp_iters,solver_failed";
    if (!r.log.rows.empty()) {
      for (int i = 0; i < r.log.rows.front().x_plant.size(); ++i)
        traj << ",x" << i;
      for (int i = 0; i < r.log.rows.front().u.size(); ++i) traj << ",u" << i;
    }
    traj << '\n';
    for (const auto& row : r.log.rows) {
      traj << row.t << ',' << row.stage_cost << ',' << row.solve_time << ','
           << row.sqp_iters << ',' << (row.solver_failed ? 1 : 0);
      for (int i = 0; i < row.x_plant.size(); ++i) traj << ',' << row.x_plant(i);
      for (int i = 0; i < row.u.size(); ++i) traj << ',' << row.u(i);
      traj << '\n';
    }
  }
  if (aborted) {
    std::cerr << "compare: at least one run aborted\n";
    return kExitRuntime;
  }
  return kExitOk;
}

int cmd_sweep(const RunConfig& cfg) {
  const SystemId id = cfg.loop.system;
  const std::vector<int> candidates = cfg.sweep.candidates.empty()
                                          ? default_sweep_candidates(id)
                                          : cfg.sweep.candidates;
  const SweepResult res =
      tune_switching_stage(cfg.loop, candidates, cfg.sweep.epsilon);

  std::ofstream out = open_csv(cfg.out_dir, "sweep_" + to_string(id) + ".csv");
  out << "# baseline_cost=" << res.baseline_cost
      << " epsilon=" << res.epsilon << '\n';
  out << "k_bar,mean_cost,rel_increase,chosen\n";
  for (size_t i = 0; i < res.candidates.size(); ++i)
    out << res.candidates[i] << ',' << res.mean_cost[i] << ','
        << res.rel_increase[i] << ','
        << (res.candidates[i] == res.chosen ? 1 : 0) << '\n';
  if (res.chosen < 0) {
    std::cerr << "sweep: no candidate within epsilon; refine the schedule\n";
    return kExitRuntime;
  }
  std::cout << "sweep: chose k_bar = " << res.chosen << "\n";
  return kExitOk;
}

int cmd_schedule(double dt0, int N, double T) {
  const bool uniform = std::abs(N * dt0 - T) <= 1e-9 * std::max(1.0, T);
  const ScheduleSpec sched = build_schedule(
      dt0, N, T, uniform ? ScheduleMode::Uniform : ScheduleMode::Exponential);
  std::cout << "# mode="
            << (uniform ? "uniform" : "exponential") << " alpha=" << sched.alpha
            << "\nk,dt\n";
  for (int k = 0; k < N; ++k) std::cout << k << ',' << sched.dts[k] << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-timescale MPC experiments"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false, out_set = false;
  for (auto* name : {"eds", "compare", "sweep"}) {
    auto* sub = app.add_subcommand(
        name, std::string("run the ") + name + " experiment");
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--out", out_dir, "output directory")
        ->each([&](const std::string&) { out_set = true; });
    sub->add_option("--seed", seed, "RNG seed override")
        ->each([&](const std::string&) { seed_set = true; });
  }
  auto* sched = app.add_subcommand("schedule", "print a step-size schedule");
  double dt0 = 0.01, T = 1.0;
  int N = 100;
  sched->add_option("--dt0", dt0, "first step size")->required();
  sched->add_option("--N", N, "number of intervals")->required();
  sched->add_option("--T", T, "horizon length")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (sched->parsed()) return cmd_schedule(dt0, N, T);

    RunConfig cfg;
    try {
      if (!config_path.empty()) cfg = load_config(config_path);
    } catch (const InvalidArgument& e) {
      std::cerr << e.what() << "\n";
      return kExitUsage;
    }
    if (out_set) cfg.out_dir = out_dir;
    if (seed_set) cfg.loop.seed = seed;

    if (app.get_subcommand("eds")->parsed()) return cmd_eds(cfg);
    if (app.get_subcommand("compare")->parsed()) return cmd_compare(cfg);
    if (app.get_subcommand("sweep")->parsed()) return cmd_sweep(cfg);
    return kExitUsage;
  } catch (const InvalidArgument& e) {
    std::cerr << e.what() << "\n";
    return kExitUsage;
  } catch (const InfeasibleSchedule& e) {
    std::cerr << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return kExitRuntime;
  }
}
