#include "layerlens/checkpoint.h"

#include <cmath>
#include <fstream>
#include <map>

#include "layerlens/error.h"
#include "layerlens/lltn.h"

namespace layerlens {

using nlohmann::json;

json layer_to_json(const LayerSpec& spec) {
  json j{{"name", spec.name}, {"kind", std::string(to_string(spec.kind))}};
  switch (spec.kind) {
    case LayerKind::dense:
      j["units"] = spec.units;
      break;
    case LayerKind::conv:
    case LayerKind::transpose_conv:
      j["channels"] = spec.channels;
      j["kernel"] = spec.kernel;
      j["stride"] = spec.stride;
      j["padding"] = spec.padding;
      break;
    case LayerKind::residual_block:
      j["channels"] = spec.channels;
      j["upsample"] = spec.upsample;
      break;
    case LayerKind::add_skip:
      j["from"] = spec.from;
      break;
    case LayerKind::reshape:
      j["shape"] = spec.target_shape;
      break;
    case LayerKind::relu:
    case LayerKind::flatten:
      break;
  }
  return j;
}

LayerSpec layer_from_json(const json& j) {
  try {
    LayerSpec s;
    s.kind = layer_kind_from_string(j.at("kind").get<std::string>());
    s.name = j.at("name").get<std::string>();
    s.units = j.value("units", std::size_t{0});
    s.channels = j.value("channels", std::size_t{0});
    s.kernel = j.value("kernel", std::size_t{3});
    s.stride = j.value("stride", std::size_t{1});
    s.padding = j.value("padding", std::size_t{0});
    s.upsample = j.value("upsample", false);
    s.from = j.value("from", std::string{});
    s.target_shape = j.value("shape", Shape{});
    return s;
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed layer spec: ") + e.what());
  }
}

json graph_to_json(const ModelGraph& model) {
  json layers = json::array();
  for (const auto& spec : model.layers()) layers.push_back(layer_to_json(spec));
  json params = json::array();
  for (const auto& p : model.parameters()) {
    params.push_back({{"layer", p.layer}, {"name", p.name}, {"file", p.key() + ".lltn"}, {"shape", p.value().shape()}});
  }
  return {{"input_shape", model.input_shape()}, {"layers", layers}, {"parameters", params}};
}

void save_checkpoint(const ModelGraph& model, const CheckpointMeta& meta, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());
  for (const auto& p : model.parameters()) write_lltn(dir / (p.key() + ".lltn"), p.value());
  json m{{"epoch", meta.epoch}, {"seed", meta.seed}};
  m["loss"] = std::isfinite(meta.loss) ? json(meta.loss) : json(nullptr);
  write_file_atomic(dir / "meta.json", m.dump(2) + "\n");
  // graph.json last: its presence marks a complete checkpoint.
  write_file_atomic(dir / "graph.json", graph_to_json(model).dump(2) + "\n");
}

namespace {
json read_json(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}
}  // namespace

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const json graph = read_json(dir / "graph.json");
  const json meta = read_json(dir / "meta.json");
  try {
    std::vector<LayerSpec> specs;
    for (const auto& l : graph.at("layers")) specs.push_back(layer_from_json(l));
    ModelGraph model = ModelGraph::build(std::move(specs), graph.at("input_shape").get<Shape>(), 0);
    const auto& listed = graph.at("parameters");
    if (listed.size() != model.parameters().size()) throw IoError("checkpoint parameter count mismatch");
    std::map<std::string, Tensor> loaded;
    for (const auto& p : listed) {
      const std::string file = p.at("file").get<std::string>();
      if (file.find('/') != std::string::npos || file.find("..") != std::string::npos) {
        throw IoError("checkpoint parameter file name '" + file + "' escapes the directory");
      }
      loaded.emplace(p.at("layer").get<std::string>() + "." + p.at("name").get<std::string>(), read_lltn(dir / file));
    }
    for (const auto& p : model.parameters()) {
      auto it = loaded.find(p.key());
      if (it == loaded.end()) throw IoError("checkpoint lacks parameter " + p.key());
      model.set_parameter(p.layer, p.name, std::move(it->second));
    }
    Checkpoint ck{std::move(model), {}};
    ck.meta.epoch = meta.at("epoch").get<std::size_t>();
    ck.meta.seed = meta.at("seed").get<std::uint64_t>();
    ck.meta.loss = meta.at("loss").is_null() ? std::numeric_limits<double>::quiet_NaN() : meta.at("loss").get<double>();
    return ck;
  } catch (const json::exception& e) {
    throw IoError(dir.string() + ": malformed checkpoint: " + e.what());
  } catch (const IoError&) {
    throw;
  } catch (const Error& e) {
    throw IoError(dir.string() + ": inconsistent checkpoint: " + e.what());
  }
}

}  // namespace layerlens
