#include "mts/config.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

namespace mts {

namespace {

using nlohmann::json;

template <class T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

void maybe_vec(const json& j, const char* key, Vec& out) {
  if (!j.contains(key)) return;
  const auto arr = j.at(key).get<std::vector<double>>();
  if (static_cast<int>(arr.size()) != out.size())
    throw InvalidArgument(std::string("config: '") + key + "' must have " +
                          std::to_string(out.size()) + " entries");
  for (size_t i = 0; i < arr.size(); ++i) out(static_cast<int>(i)) = arr[i];
}

void parse_params(const json& j, SystemConfig& cfg) {
  if (j.contains("diffdrive")) {
    const json& p = j.at("diffdrive");
    auto& d = cfg.diffdrive;
    maybe(p, "m_tot", d.m_tot);
    maybe(p, "m_c", d.m_c);
    maybe(p, "R_w", d.R_w);
    maybe(p, "L_tw", d.L_tw);
    maybe(p, "d", d.d);
    maybe(p, "I_zz", d.I_zz);
    maybe(p, "I_w", d.I_w);
    maybe(p, "K_1", d.K_1);
    maybe(p, "K_2", d.K_2);
    maybe(p, "L_act", d.L_act);
    maybe(p, "R_act", d.R_act);
  }
  if (j.contains("drone")) {
    const json& p = j.at("drone");
    auto& d = cfg.drone;
    maybe(p, "m_d", d.m_d);
    maybe(p, "m_l", d.m_l);
    maybe(p, "I_xx", d.I_xx);
    maybe(p, "g", d.g);
    maybe(p, "k_S", d.k_S);
    maybe(p, "l_0", d.l_0);
    maybe(p, "kappa", d.kappa);
    maybe(p, "L_rot", d.L_rot);
    maybe(p, "w_bound", d.w_bound);
  }
  if (j.contains("trunk")) {
    const json& p = j.at("trunk");
    auto& d = cfg.trunk;
    maybe(p, "n_links", d.n_links);
    maybe(p, "m_l", d.m_l);
    maybe(p, "l", d.l);
    maybe(p, "I_zz", d.I_zz);
    maybe(p, "c", d.c);
    maybe(p, "d_l", d.d_l);
    maybe(p, "gear", d.gear);
    maybe(p, "g", d.g);
  }
}

void parse_weights(const json& j, SystemConfig& cfg) {
  maybe_vec(j, "dd_Q", cfg.dd_Q);
  maybe_vec(j, "dd_Q_hat", cfg.dd_Q_hat);
  maybe_vec(j, "dd_R_hat", cfg.dd_R_hat);
  maybe_vec(j, "drone_Q", cfg.drone_Q);
  maybe_vec(j, "drone_Q_load", cfg.drone_Q_load);
  maybe_vec(j, "drone_R", cfg.drone_R);
  maybe_vec(j, "trunk_Q", cfg.trunk_Q);
  maybe_vec(j, "trunk_R_full", cfg.trunk_R_full);
  maybe_vec(j, "trunk_R_slow", cfg.trunk_R_slow);
}

void parse_task(const json& j, SystemConfig& cfg) {
  maybe_vec(j, "dd_x0", cfg.dd_x0);
  if (j.contains("drone_goal")) {
    const auto arr = j.at("drone_goal").get<std::vector<double>>();
    if (arr.size() != 2)
      throw InvalidArgument("config: 'drone_goal' must have 2 entries");
    cfg.drone_goal = Eigen::Vector2d(arr[0], arr[1]);
  }
  maybe(j, "trunk_ref_radius", cfg.trunk_ref_radius);
  maybe(j, "trunk_ref_period", cfg.trunk_ref_period);
  if (j.contains("trunk_ref_center")) {
    const auto arr = j.at("trunk_ref_center").get<std::vector<double>>();
    if (arr.size() != 2)
      throw InvalidArgument("config: 'trunk_ref_center' must have 2 entries");
    cfg.trunk_ref_center = Eigen::Vector2d(arr[0], arr[1]);
  }
  maybe(j, "drone_lm_reg", cfg.drone_lm_reg);
  maybe(j, "trunk_lm_reg", cfg.trunk_lm_reg);
  maybe(j, "trunk_irk_substeps", cfg.trunk_irk_substeps);
}

}  // namespace

std::vector<int> default_sweep_candidates(SystemId id) {
  switch (id) {
    case SystemId::DiffDrive: return {6, 11, 16, 21, 26, 31, 36};
    case SystemId::Drone: return {13, 18, 23, 28, 33, 38, 43};
    case SystemId::Trunk: return {2, 4, 6, 8, 10, 12, 14, 16, 18, 20, 22, 24};
  }
  throw InvalidArgument("unknown system id");
}

RunConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text, /*cb=*/nullptr, /*allow_exceptions=*/true,
                    /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("config: JSON parse error: ") + e.what());
  }
  try {
    RunConfig cfg;
    if (j.contains("system"))
      cfg.loop.system = parse_system_id(j.at("system").get<std::string>());
    maybe(j, "variants", cfg.variants);
    maybe(j, "duration", cfg.loop.duration);
    maybe(j, "seed", cfg.loop.seed);
    maybe(j, "out_dir", cfg.out_dir);
    if (j.contains("plant")) {
      const json& p = j.at("plant");
      maybe(p, "gl_stages", cfg.loop.plant_gl_stages);
      maybe(p, "substeps", cfg.loop.plant_substeps);
    }
    if (j.contains("sqp")) {
      const json& p = j.at("sqp");
      maybe(p, "max_sqp_iter", cfg.loop.sqp.max_sqp_iter);
      maybe(p, "kkt_tol", cfg.loop.sqp.kkt_tol);
      maybe(p, "lm_reg", cfg.loop.sqp.lm_reg);
    }
    if (j.contains("initial_state")) {
      const auto arr = j.at("initial_state").get<std::vector<double>>();
      Vec x0(arr.size());
      for (size_t i = 0; i < arr.size(); ++i) x0(static_cast<int>(i)) = arr[i];
      cfg.loop.initial_state = x0;
    }
    if (j.contains("params")) parse_params(j.at("params"), cfg.loop.config);
    if (j.contains("weights")) parse_weights(j.at("weights"), cfg.loop.config);
    if (j.contains("task")) parse_task(j.at("task"), cfg.loop.config);
    if (j.contains("sweep")) {
      const json& p = j.at("sweep");
      maybe(p, "candidates", cfg.sweep.candidates);
      maybe(p, "epsilon", cfg.sweep.epsilon);
    }
    if (j.contains("eds")) {
      const json& p = j.at("eds");
      maybe(p, "seeds", cfg.eds.seeds);
      maybe(p, "n", cfg.eds.n);
      maybe(p, "m", cfg.eds.m);
      maybe(p, "N", cfg.eds.N);
      maybe(p, "spectral_radius", cfg.eds.spectral_radius);
    }
    return cfg;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("config: invalid field: ") + e.what());
  }
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

}  // namespace mts
