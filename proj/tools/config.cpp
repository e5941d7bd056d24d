#include "config.hpp"

#include <filesystem>
#include <fstream>

#include "diffinv/error.hpp"

namespace diffinv::cli {

nlohmann::json default_config() {
  return {
      {"seed", 0},
      {"out", "out"},
      {"workers", 0},
      {"grid", {{"nx", 16}, {"ny", 16}, {"h", 1.0 / 15.0}}},
      {"prior",
       {{"n", 2048},
        {"background", 1.0},
        {"block_value", 5.0},
        {"p_two", 0.5},
        {"p_left", 0.25},
        {"p_right", 0.25},
        {"min_side", 3},
        {"max_side", 6},
        {"output", "prior.dfc"},
        {"preview", 24}}},
      {"sde", {{"family", "ve-geometric"}, {"sigma_hat", 25.0}, {"beta_slope", 32.0}, {"T", 1.0}}},
      {"score",
       {{"channels", 32},
        {"epochs", 60},
        {"batch", 64},
        {"lr", 2e-4},
        {"t_floor", 1e-3},
        {"data", "prior.dfc"},
        {"checkpoint", "score.dfc"},
        {"loss_csv", "score_loss.csv"},
        {"resume", false}}},
      {"surrogate",
       {{"channels", 32},
        {"pre_epochs", 150},
        {"semi_epochs", 100},
        {"batch", 64},
        {"lr", 1e-3},
        {"ul_weight", 1.0},
        {"n_supervised", 200},
        {"n_unsupervised", 2000},
        {"n_heldout", 100},
        {"data_seed", 7001},
        {"energy", "dirichlet"},
        {"traction", 1.0},
        {"nu", 0.3},
        {"checkpoint", "surrogate.dfc"},
        {"loss_csv", "surrogate_loss.csv"}}},
      {"forward", {{"kind", "surrogate"}}},
      {"sampler",
       {{"chains", 256},
        {"steps", 2000},
        {"corrector_steps", 1},
        {"snr", 0.1},
        {"snr_vp", 0.36},
        {"rho_mode", "time-decreasing"},
        {"eta_mode", "auto"},
        {"divergence_limit", 1e4},
        {"r_sweep", nlohmann::json::array()},
        {"score_checkpoint", "score.dfc"},
        {"reference", "prior.dfc"},
        {"output", "samples.dfc"}}},
      {"invert",
       {{"truth_seed", 9001},
        {"noise_levels", {0.02, 0.05, 0.1, 0.2, 0.4, 0.8}},
        {"use_sigma_model", true},
        {"output_prefix", "posterior"}}},
      {"enki",
       {{"ensemble", 1024},
        {"iterations", 100},
        {"tikhonov", 0.01},
        {"sigma_eps", 0.02},
        {"output", "enki.dfc"},
        {"misfit_csv", "enki_misfit.csv"}}},
      {"fid", {{"a", ""}, {"b", ""}}},
      {"summarize", {{"samples", "samples.dfc"}, {"d_neighbor", 0.0}, {"noise_level", 0.02}}},
  };
}

void merge_config(nlohmann::json& base, const nlohmann::json& overlay) {
  if (!overlay.is_object() || !base.is_object()) {
    base = overlay;
    return;
  }
  for (auto it = overlay.begin(); it != overlay.end(); ++it) {
    if (it.key() == "include") continue;
    if (base.contains(it.key()) && base[it.key()].is_object() && it.value().is_object())
      merge_config(base[it.key()], it.value());
    else
      base[it.key()] = it.value();
  }
}

namespace {

nlohmann::json read_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("config: cannot open '" + path + "'");
  nlohmann::json j = nlohmann::json::parse(f, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config: malformed JSON in '" + path + "'");
  if (!j.is_object()) throw ConfigError("config: top level must be an object in '" + path + "'");

  if (j.contains("include")) {
    if (!j["include"].is_array()) throw ConfigError("config: 'include' must be a list in '" + path + "'");
    const auto dir = std::filesystem::path(path).parent_path();
    nlohmann::json merged = nlohmann::json::object();
    for (const auto& inc : j["include"]) {
      const auto inc_path = (dir / inc.get<std::string>()).string();
      merge_config(merged, read_config_file(inc_path));
    }
    merge_config(merged, j);
    return merged;
  }
  return j;
}

}  // namespace

nlohmann::json load_config(const std::string& path) {
  nlohmann::json cfg = default_config();
  merge_config(cfg, read_config_file(path));
  return cfg;
}

}  // namespace diffinv::cli
