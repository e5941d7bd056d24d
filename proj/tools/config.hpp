#pragma once

#include <string>

#include <json.hpp>

namespace diffinv::cli {

/// Full default configuration tree; every numeric default the commands use.
nlohmann::json default_config();

/// Load a config file, process its "include" list (paths relative to the
/// file, merged in order, later keys win), and overlay everything onto the
/// defaults.
nlohmann::json load_config(const std::string& path);

/// Deep merge: object values merge recursively, everything else overwrites.
void merge_config(nlohmann::json& base, const nlohmann::json& overlay);

}  // namespace diffinv::cli
