#pragma once

#include <string>

#include "mts/experiments.hpp"

namespace mts {

struct EdsConfig {
  std::vector<std::uint64_t> seeds;  // empty list allowed (header-only CSV)
  int n = 4;
  int m = 2;
  int N = 40;
  double spectral_radius = 0.95;

  EdsConfig() {
    seeds.resize(20);
    for (int i = 0; i < 20; ++i) seeds[i] = static_cast<std::uint64_t>(i + 1);
  }
};

struct SweepConfig {
  std::vector<int> candidates;  // empty: per-system default grid
  double epsilon = 0.01;
};

// Top-level run configuration; every absent JSON field keeps the defaults
// baked into the member structs (paper table values).
struct RunConfig {
  ClosedLoopConfig loop;
  std::vector<int> variants;  // empty: all defined for the system
  SweepConfig sweep;
  EdsConfig eds;
  std::string out_dir = ".";
};

RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::string& path);

std::vector<int> default_sweep_candidates(SystemId id);

}  // namespace mts
