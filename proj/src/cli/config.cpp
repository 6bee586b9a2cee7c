#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>

#include "layerlens/checkpoint.h"
#include "layerlens/cli.h"
#include "layerlens/error.h"
#include "layerlens/sid_io.h"
#include "layerlens/zoo.h"

namespace layerlens::cli {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& section, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw ConfigError("'" + section + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (auto a : allowed) known = known || key == a;
    if (!known) throw ConfigError("unknown key '" + key + "' in " + section);
  }
}

std::string where(const std::string& section, const char* key) { return section + "." + key; }

std::string get_string(const json& j, const std::string& section, const char* key, std::string fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_string()) throw ConfigError(where(section, key) + " must be a string");
  return j[key].get<std::string>();
}

bool is_count(const json& v) { return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0); }

std::size_t get_size(const json& j, const std::string& section, const char* key, std::size_t fallback) {
  if (!j.contains(key)) return fallback;
  if (!is_count(j[key])) throw ConfigError(where(section, key) + " must be a non-negative integer");
  return j[key].get<std::size_t>();
}

double get_double(const json& j, const std::string& section, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) throw ConfigError(where(section, key) + " must be a number");
  return j[key].get<double>();
}

bool get_bool(const json& j, const std::string& section, const char* key, bool fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_boolean()) throw ConfigError(where(section, key) + " must be true or false");
  return j[key].get<bool>();
}

std::vector<std::string> get_strings(const json& j, const std::string& section, const char* key) {
  std::vector<std::string> out;
  if (!j.contains(key)) return out;
  if (!j[key].is_array()) throw ConfigError(where(section, key) + " must be a list of strings");
  for (const auto& v : j[key]) {
    if (!v.is_string()) throw ConfigError(where(section, key) + " must be a list of strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

std::vector<std::size_t> get_sizes(const json& j, const std::string& section, const char* key,
                                   std::vector<std::size_t> fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_array()) throw ConfigError(where(section, key) + " must be a list of non-negative integers");
  std::vector<std::size_t> out;
  for (const auto& v : j[key]) {
    if (!is_count(v)) throw ConfigError(where(section, key) + " must be a list of non-negative integers");
    out.push_back(v.get<std::size_t>());
  }
  return out;
}

std::uint64_t env_seed() {
  const char* text = std::getenv("LAYERLENS_SEED");
  if (text == nullptr || *text == '\0') return 0;
  std::uint64_t seed = 0;
  const char* end = text + std::char_traits<char>::length(text);
  auto [ptr, ec] = std::from_chars(text, end, seed);
  if (ec != std::errc() || ptr != end) throw ConfigError("LAYERLENS_SEED must be a non-negative integer");
  return seed;
}

DatasetConfig parse_dataset(const json& j) {
  check_keys(j, "dataset", {"path", "format", "labels", "limit", "kind", "count", "size", "separation", "seed"});
  DatasetConfig d;
  d.format = get_string(j, "dataset", "format", "");
  d.path = get_string(j, "dataset", "path", "");
  d.labels = get_string(j, "dataset", "labels", "");
  d.limit = get_size(j, "dataset", "limit", d.limit);
  d.kind = get_string(j, "dataset", "kind", d.kind);
  d.count = get_size(j, "dataset", "count", d.count);
  d.size = get_size(j, "dataset", "size", d.size);
  d.separation = get_double(j, "dataset", "separation", d.separation);
  if (j.contains("seed")) d.seed = get_size(j, "dataset", "seed", 0);
  if (d.format == "cifar10") {
    if (d.path.empty()) throw ConfigError("dataset.path is required for cifar10");
  } else if (d.format == "lltn") {
    if (d.path.empty() || d.labels.empty()) throw ConfigError("dataset.path and dataset.labels are required for lltn");
  } else if (d.format == "synthetic") {
    if (d.kind != "shapes" && d.kind != "blobs") throw ConfigError("dataset.kind must be shapes or blobs");
    if (d.count == 0) throw ConfigError("dataset.count must be positive");
  } else {
    throw ConfigError("dataset.format must be cifar10, lltn or synthetic");
  }
  return d;
}

ModelConfig parse_model(const json& j, const std::string& section) {
  check_keys(j, section, {"id", "architecture", "checkpoint", "classes", "channels", "blocks", "hidden"});
  ModelConfig m;
  m.id = get_string(j, section, "id", "");
  m.architecture = get_string(j, section, "architecture", "");
  m.checkpoint = get_string(j, section, "checkpoint", "");
  m.classes = get_size(j, section, "classes", m.classes);
  m.channels = get_size(j, section, "channels", m.channels);
  m.blocks = get_size(j, section, "blocks", m.blocks);
  m.hidden = get_size(j, section, "hidden", m.hidden);
  if (m.architecture.empty() == m.checkpoint.empty()) {
    throw ConfigError(section + " needs exactly one of 'architecture' and 'checkpoint'");
  }
  return m;
}

TrainConfig parse_train(const json& j, const std::string& section, TrainConfig t,
                        std::initializer_list<std::string_view> extra = {}) {
  std::vector<std::string_view> keys{"optimizer", "learning_rate", "batch_size", "epochs", "loss"};
  keys.insert(keys.end(), extra);
  if (!j.is_object()) throw ConfigError("'" + section + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw ConfigError("unknown key '" + key + "' in " + section);
    }
  }
  if (j.contains("optimizer")) t.optimizer = optimizer_from_string(get_string(j, section, "optimizer", ""));
  if (j.contains("loss")) t.loss = loss_from_string(get_string(j, section, "loss", ""));
  t.learning_rate = get_double(j, section, "learning_rate", t.learning_rate);
  t.batch_size = get_size(j, section, "batch_size", t.batch_size);
  t.epochs = get_size(j, section, "epochs", t.epochs);
  return t;
}

json train_json(const TrainConfig& t) {
  return {{"optimizer", to_string(t.optimizer)}, {"learning_rate", t.learning_rate}, {"batch_size", t.batch_size},
          {"epochs", t.epochs}, {"loss", to_string(t.loss)}};
}

json model_json(const ModelConfig& m) {
  json j{{"classes", m.classes}, {"channels", m.channels}, {"blocks", m.blocks}, {"hidden", m.hidden}};
  if (!m.id.empty()) j["id"] = m.id;
  if (!m.architecture.empty()) j["architecture"] = m.architecture;
  if (!m.checkpoint.empty()) j["checkpoint"] = m.checkpoint.string();
  return j;
}

}  // namespace

RunConfig parse_run_config(const json& j, const Overrides& overrides) {
  check_keys(j, "config", {"dataset", "model", "models", "estimator", "layers", "outputs", "seed", "inputs", "jobs",
                           "train", "decoder", "mask", "concentration", "coherency", "damage", "sweep", "report"});
  RunConfig cfg;
  if (overrides.seed) {
    cfg.seed = *overrides.seed;
  } else if (j.contains("seed")) {
    cfg.seed = get_size(j, "config", "seed", 0);
  } else {
    cfg.seed = env_seed();
  }

  if (!j.contains("dataset")) throw ConfigError("config needs a 'dataset' section");
  cfg.dataset = parse_dataset(j["dataset"]);
  if (j.contains("model")) cfg.model = parse_model(j["model"], "model");
  if (j.contains("models")) {
    if (!j["models"].is_array()) throw ConfigError("'models' must be a list");
    for (std::size_t i = 0; i < j["models"].size(); ++i) {
      cfg.models.push_back(parse_model(j["models"][i], "models[" + std::to_string(i) + "]"));
    }
  }

  SidConfig est;
  if (j.contains("estimator")) {
    if (j["estimator"].is_object() && j["estimator"].contains("seed")) {
      throw ConfigError("estimator.seed is not allowed; set the top-level 'seed'");
    }
    est = sid_config_from_json(j["estimator"]);
  }
  if (overrides.alpha) est.alpha = *overrides.alpha;
  est.seed = cfg.seed;
  est.validate();
  cfg.estimator = est;

  if (j.contains("layers")) {
    const json& l = j["layers"];
    if (l.is_string()) {
      if (l.get<std::string>() != "all") throw ConfigError("'layers' must be a list of names or \"all\"");
    } else {
      cfg.layers = get_strings(j, "config", "layers");
      if (cfg.layers.empty()) throw ConfigError("'layers' is empty");
    }
  }
  cfg.outputs = overrides.out ? *overrides.out : std::filesystem::path(get_string(j, "config", "outputs", cfg.outputs));
  cfg.inputs = get_sizes(j, "config", "inputs", cfg.inputs);
  if (cfg.inputs.empty()) throw ConfigError("'inputs' is empty");
  cfg.jobs = overrides.jobs ? *overrides.jobs : get_size(j, "config", "jobs", cfg.jobs);
  if (cfg.jobs == 0) throw ConfigError("jobs must be at least 1");

  cfg.train.seed = cfg.seed;
  if (j.contains("train")) cfg.train = parse_train(j["train"], "train", cfg.train);
  cfg.train.validate();

  cfg.decoder.train.loss = LossKind::mse;
  cfg.decoder.train.epochs = 20;
  cfg.decoder.train.seed = cfg.seed;
  if (j.contains("decoder")) {
    const json& d = j["decoder"];
    cfg.decoder.train = parse_train(d, "decoder", cfg.decoder.train, {"kind", "samples"});
    if (d.contains("kind")) cfg.decoder.kind = decoder_kind_from_string(get_string(d, "decoder", "kind", ""));
    cfg.decoder.samples = get_size(d, "decoder", "samples", 0);
  }
  cfg.decoder.train.validate();

  if (j.contains("mask")) {
    const json& m = j["mask"];
    check_keys(m, "mask", {"source", "path"});
    MaskConfig mask;
    mask.source = get_string(m, "mask", "source", mask.source);
    mask.path = get_string(m, "mask", "path", "");
    if (mask.source == "file" && mask.path.empty()) throw ConfigError("mask.path is required when mask.source is file");
    if (mask.source != "file" && mask.source != "boxes") throw ConfigError("mask.source must be boxes or file");
    cfg.mask = mask;
  }
  if (j.contains("concentration")) {
    check_keys(j["concentration"], "concentration", {"maps"});
    for (auto& p : get_strings(j["concentration"], "concentration", "maps")) cfg.entropy_maps.emplace_back(p);
  }
  if (j.contains("coherency")) {
    check_keys(j["coherency"], "coherency", {"layers", "feature_layer"});
    cfg.coherency_layers = get_strings(j["coherency"], "coherency", "layers");
    cfg.coherency_feature_layer = get_string(j["coherency"], "coherency", "feature_layer", "");
  }
  if (j.contains("damage")) {
    const json& d = j["damage"];
    check_keys(d, "damage", {"n", "positions", "train"});
    cfg.damage_n = get_size(d, "damage", "n", cfg.damage_n);
    cfg.damage_positions = get_sizes(d, "damage", "positions", cfg.damage_positions);
    cfg.damage_train = get_bool(d, "damage", "train", cfg.damage_train);
    if (cfg.damage_n == 0) throw ConfigError("damage.n must be positive");
    if (cfg.damage_positions.empty()) throw ConfigError("damage.positions is empty");
  }
  if (j.contains("sweep")) {
    check_keys(j["sweep"], "sweep", {"checkpoints"});
    for (auto& p : get_strings(j["sweep"], "sweep", "checkpoints")) cfg.sweep_checkpoints.emplace_back(p);
  }
  if (j.contains("report")) {
    check_keys(j["report"], "report", {"ru"});
    cfg.report_ru = get_bool(j["report"], "report", "ru", false);
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path, const Overrides& overrides) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_run_config(j, overrides);
}

json to_json(const RunConfig& cfg) {
  const DatasetConfig& d = cfg.dataset;
  json dataset{{"format", d.format}};
  if (d.format == "synthetic") {
    dataset.update({{"kind", d.kind}, {"count", d.count}, {"size", d.size}, {"separation", d.separation},
                    {"seed", d.seed.value_or(cfg.seed)}});
  } else {
    dataset["path"] = d.path.string();
    if (d.format == "lltn") dataset["labels"] = d.labels.string();
    if (d.format == "cifar10") dataset["limit"] = d.limit;
  }
  json estimator = layerlens::to_json(cfg.estimator);
  estimator.erase("seed");

  json j{{"dataset", dataset},
         {"estimator", estimator},
         {"outputs", cfg.outputs.string()},
         {"seed", cfg.seed},
         {"inputs", cfg.inputs},
         {"jobs", cfg.jobs},
         {"train", train_json(cfg.train)}};
  if (!cfg.model.architecture.empty() || !cfg.model.checkpoint.empty()) j["model"] = model_json(cfg.model);
  if (!cfg.models.empty()) {
    j["models"] = json::array();
    for (const auto& m : cfg.models) j["models"].push_back(model_json(m));
  }
  j["layers"] = cfg.layers.empty() ? json("all") : json(cfg.layers);
  json decoder = train_json(cfg.decoder.train);
  decoder["kind"] = to_string(cfg.decoder.kind);
  decoder["samples"] = cfg.decoder.samples;
  j["decoder"] = decoder;
  if (cfg.mask) j["mask"] = {{"source", cfg.mask->source}, {"path", cfg.mask->path.string()}};
  if (!cfg.entropy_maps.empty()) {
    json maps = json::array();
    for (const auto& p : cfg.entropy_maps) maps.push_back(p.string());
    j["concentration"] = {{"maps", maps}};
  }
  j["coherency"] = {{"layers", cfg.coherency_layers}, {"feature_layer", cfg.coherency_feature_layer}};
  j["damage"] = {{"n", cfg.damage_n}, {"positions", cfg.damage_positions}, {"train", cfg.damage_train}};
  json sweep = json::array();
  for (const auto& p : cfg.sweep_checkpoints) sweep.push_back(p.string());
  j["sweep"] = {{"checkpoints", sweep}};
  j["report"] = {{"ru", cfg.report_ru}};
  return j;
}

Dataset load_dataset(const RunConfig& cfg) {
  const DatasetConfig& d = cfg.dataset;
  if (d.format == "cifar10") return load_cifar10(d.path, d.limit);
  if (d.format == "lltn") return load_lltn_pair(d.path, d.labels);
  const std::uint64_t seed = d.seed.value_or(cfg.seed);
  if (d.kind == "blobs") return make_blobs((d.count + 1) / 2, d.separation, seed);
  return make_shapes(d.count, d.size, seed);
}

std::string model_id(const ModelConfig& model) {
  if (!model.id.empty()) return model.id;
  if (!model.architecture.empty()) return model.architecture;
  const auto name = model.checkpoint.filename();
  return (name.empty() ? model.checkpoint.parent_path().filename() : name).string();
}

ModelGraph load_model(const ModelConfig& model, const Dataset& data, std::uint64_t seed) {
  if (model.architecture.empty() && model.checkpoint.empty()) throw ConfigError("config needs a 'model' section");
  const Shape input = data.input_shape();
  ModelGraph graph = [&] {
    if (!model.checkpoint.empty()) return load_checkpoint(model.checkpoint).model;
    const std::size_t classes = model.classes > 0 ? model.classes : data.num_classes();
    if (model.architecture == "tiny-resnet") {
      return ModelGraph::build(tiny_resnet(input, classes, model.channels, model.blocks), input, seed);
    }
    if (model.architecture == "mlp") return ModelGraph::build(mlp(input, classes, model.hidden), input, seed);
    return make_architecture(model.architecture, input, classes, seed);
  }();
  if (graph.input_shape() != input) {
    throw ConfigError("model '" + model_id(model) + "' expects inputs of shape " + to_string(graph.input_shape()) +
                      " but the dataset has " + to_string(input));
  }
  return graph;
}

}  // namespace layerlens::cli
