#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>

#include <json.hpp>

#include "layerlens/model.h"

namespace layerlens {

struct CheckpointMeta {
  std::size_t epoch = 0;
  double loss = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t seed = 0;
};

struct Checkpoint {
  ModelGraph model;
  CheckpointMeta meta;
};

nlohmann::json layer_to_json(const LayerSpec& spec);
LayerSpec layer_from_json(const nlohmann::json& j);
nlohmann::json graph_to_json(const ModelGraph& model);

/// Directory layout: graph.json, meta.json and one <layer>.<param>.lltn per parameter.
void save_checkpoint(const ModelGraph& model, const CheckpointMeta& meta, const std::filesystem::path& dir);
/// Validates every file before returning; never yields a partial model.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace layerlens
