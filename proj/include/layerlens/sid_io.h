#pragma once

#include <filesystem>

#include <json.hpp>

#include "layerlens/sid.h"

namespace layerlens {

nlohmann::json to_json(const SidConfig& cfg);
/// Overlays the keys present in `j` onto `base`. Unknown keys raise ConfigError.
SidConfig sid_config_from_json(const nlohmann::json& j, SidConfig base = {});

/// Scalars and diagnostics; the per-unit tensors live in separate LLTN files.
nlohmann::json to_json(const SidResult& r);

/// Writes <stem>.json, <stem>.H_i.lltn and <stem>.log_sigma.lltn atomically.
void write_sid_result(const SidResult& r, const std::filesystem::path& stem);
SidResult read_sid_result(const std::filesystem::path& stem);

}  // namespace layerlens
