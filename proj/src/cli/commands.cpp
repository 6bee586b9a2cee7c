#include <charconv>
#include <cmath>
#include <iostream>
#include <map>
#include <limits>

#include "layerlens/checkpoint.h"
#include "layerlens/cli.h"
#include "layerlens/error.h"
#include "layerlens/lltn.h"
#include "layerlens/metrics.h"
#include "layerlens/rng.h"
#include "layerlens/sid_io.h"
#include "layerlens/surgery.h"

namespace layerlens::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string padded(std::size_t n, int width) {
  std::string s = std::to_string(n);
  return std::string(s.size() < static_cast<std::size_t>(width) ? width - s.size() : 0, '0') + s;
}

void write_json(const fs::path& path, const json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

void prepare_outputs(const RunConfig& cfg, std::string_view verb) {
  fs::create_directories(cfg.outputs);
  json resolved = to_json(cfg);
  resolved["verb"] = verb;
  write_json(cfg.outputs / "resolved_config.json", resolved);
  write_json(cfg.outputs / "provenance.json",
             {{"tool", "layerlens"}, {"version", LAYERLENS_VERSION}, {"verb", verb}, {"seed", cfg.seed}});
}

std::vector<std::string> resolve_layers(const RunConfig& cfg, std::span<const ModelEntry> models) {
  std::vector<std::string> layers = cfg.layers;
  if (layers.empty()) {
    for (const auto& name : models.front().model.layer_names()) {
      bool everywhere = true;
      for (const auto& m : models) everywhere = everywhere && m.model.has_layer(name);
      if (everywhere) layers.push_back(name);
    }
  }
  for (const auto& m : models)
    for (const auto& name : layers)
      if (!m.model.has_layer(name)) throw ConfigError("model '" + m.id + "' has no layer '" + name + "'");
  return layers;
}

std::vector<Tensor> select_inputs(const RunConfig& cfg, const Dataset& data) {
  std::vector<Tensor> out;
  for (std::size_t i : cfg.inputs) {
    if (i >= data.size()) {
      throw ConfigError("input index " + std::to_string(i) + " is out of range for a dataset of " +
                        std::to_string(data.size()) + " samples");
    }
    out.push_back(data.input(i));
  }
  return out;
}

std::pair<std::size_t, std::size_t> spatial_dims(const Shape& s) {
  if (s.size() == 3) return {s[1], s[2]};
  if (s.size() == 2) return {s[0], s[1]};
  if (s.size() == 1) return {1, s[0]};
  throw ShapeError("inputs of shape " + to_string(s) + " have no spatial layout");
}

std::vector<Mask> select_masks(const RunConfig& cfg, const Dataset& data) {
  std::vector<Mask> out;
  if (!cfg.mask) return out;
  const auto [h, w] = spatial_dims(data.input_shape());
  if (cfg.mask->source == "file") {
    const Mask m = read_mask(cfg.mask->path, h, w);
    out.assign(cfg.inputs.size(), m);
    return out;
  }
  if (data.boxes.size() != data.size()) throw ConfigError("mask.source is boxes but the dataset has no boxes");
  for (std::size_t i : cfg.inputs) out.push_back(Mask::from_box(h, w, data.boxes.at(i)));
  return out;
}

InputSet make_input_set(const RunConfig& cfg, const Dataset& data) {
  return {"inputs", select_inputs(cfg, data), select_masks(cfg, data)};
}

Dataset decoder_data(const RunConfig& cfg, const Dataset& data) {
  if (cfg.decoder.samples == 0 || cfg.decoder.samples >= data.size()) return data;
  std::vector<std::size_t> idx(cfg.decoder.samples);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return data.subset(idx);
}

using DecoderMap = std::map<std::pair<std::string, std::string>, DecoderSpec>;

DecoderMap train_decoders(const RunConfig& cfg, std::span<const ModelEntry> models,
                          const std::vector<std::string>& layers, const Dataset& data) {
  const Dataset train_set = decoder_data(cfg, data);
  DecoderMap out;
  for (const auto& m : models) {
    for (const auto& layer : layers) {
      DecoderSpec d = train_decoder(m.model, layer, train_set, cfg.decoder.train, cfg.decoder.kind);
      save_decoder(d, cfg.outputs / "decoders" / m.id / layer);
      std::cout << "decoder " << m.id << " " << layer << " validation_mse=" << fmt(d.validation_mse) << "\n";
      out.emplace(std::pair{m.id, layer}, std::move(d));
    }
  }
  return out;
}

void write_cell(const fs::path& root, const RunConfig& cfg, const CellResult& c) {
  if (!c.error.empty()) return;
  const fs::path dir = root / c.model / c.layer;
  fs::create_directories(dir);
  const std::string stem = "input_" + std::to_string(cfg.inputs[c.input_index]);
  write_sid_result(c.sid, dir / (stem + ".sid"));
  export_heatmap(c.sid.H_i, dir / (stem + ".sid.pgm"));
  if (c.ru) {
    write_ru_result(*c.ru, dir / (stem + ".ru"));
    export_heatmap(c.ru->H_hat_i, dir / (stem + ".ru.pgm"));
  }
}

int report_status(const LayerwiseReport& report) {
  bool errors = false, nonconformant = false;
  for (const auto& r : report.records) {
    std::cout << r.model << " " << r.layer << " " << r.input_set << " H_total=" << fmt(r.H_total);
    if (!std::isnan(r.H_hat_total)) std::cout << " H_hat_total=" << fmt(r.H_hat_total);
    if (!std::isnan(r.concentration)) std::cout << " concentration=" << fmt(r.concentration);
    std::cout << " epsilon=" << fmt(r.epsilon) << (r.conformant ? "" : " NONCONFORMANT") << "\n";
    for (const auto& e : r.errors) std::cerr << "layerlens: " << r.model << " " << r.layer << ": " << e << "\n";
    errors = errors || !r.errors.empty();
    nonconformant = nonconformant || !r.conformant;
  }
  if (errors) return static_cast<int>(ExitCode::failure);
  if (nonconformant) return static_cast<int>(ExitCode::nonconformant);
  return static_cast<int>(ExitCode::success);
}

/// Runs the grid, writes per-cell files under outputs/cells and report.csv.
LayerwiseReport run_grid(const RunConfig& cfg, std::span<const ModelEntry> models,
                         const std::vector<std::string>& layers, const InputSet& inputs,
                         const DecoderMap* decoders = nullptr) {
  ReportOptions options;
  options.jobs = cfg.jobs;
  if (decoders != nullptr) {
    options.decoder_for = [decoders](const ModelEntry& m, const std::string& layer) {
      return decoders->at({m.id, layer});
    };
  }
  const fs::path cells = cfg.outputs / "cells";
  options.on_cell = [&](const CellResult& c) { write_cell(cells, cfg, c); };
  LayerwiseReport report = layerwise_report(models, layers, std::span(&inputs, 1), cfg.estimator, options);
  export_csv(report, cfg.outputs / "report.csv");
  return report;
}

std::vector<ModelEntry> single_model(const RunConfig& cfg, const Dataset& data) {
  return {{model_id(cfg.model), load_model(cfg.model, data, cfg.seed)}};
}

void check_classes(const ModelGraph& model, const Dataset& data, const TrainConfig& train) {
  if (train.loss != LossKind::cross_entropy) return;
  const Shape& out = model.output_shape();
  if (out.size() != 1 || out[0] < data.num_classes()) {
    throw ConfigError("model output " + to_string(out) + " cannot score the dataset's " +
                      std::to_string(data.num_classes()) + " classes");
  }
}

ModelGraph train_quietly(const ModelGraph& model, const Dataset& data, const TrainConfig& train) {
  check_classes(model, data, train);
  return layerlens::train(model, data, train).model;
}

}  // namespace

int cmd_train(const RunConfig& cfg) {
  const Dataset data = load_dataset(cfg);
  ModelGraph model = load_model(cfg.model, data, cfg.seed);
  std::size_t first_epoch = 1;
  if (!cfg.model.checkpoint.empty()) first_epoch = load_checkpoint(cfg.model.checkpoint).meta.epoch + 1;
  check_classes(model, data, cfg.train);
  prepare_outputs(cfg, "train");

  std::string losses = "epoch,loss\n";
  auto on_epoch = [&](const ModelGraph& m, std::size_t epoch, double loss) {
    save_checkpoint(m, {epoch, loss, cfg.seed}, cfg.outputs / "checkpoints" / ("epoch_" + padded(epoch, 3)));
    losses += std::to_string(epoch) + "," + fmt(loss) + "\n";
    std::cout << "epoch " << epoch << " loss " << fmt(loss) << "\n";
  };
  TrainResult result = layerlens::train(model, data, cfg.train, on_epoch, first_epoch);
  write_file_atomic(cfg.outputs / "loss.csv", losses);
  const double acc = result.model.output_shape().size() == 1 && cfg.train.loss == LossKind::cross_entropy
                         ? accuracy(result.model, data)
                         : std::numeric_limits<double>::quiet_NaN();
  write_json(cfg.outputs / "train_summary.json",
             {{"first_epoch", first_epoch},
              {"last_epoch", first_epoch + cfg.train.epochs - 1},
              {"final_loss", result.loss_trace.empty() ? json(nullptr) : json(result.loss_trace.back())},
              {"accuracy", std::isnan(acc) ? json(nullptr) : json(acc)}});
  return static_cast<int>(ExitCode::success);
}

int cmd_sid(const RunConfig& cfg) {
  const Dataset data = load_dataset(cfg);
  const auto models = single_model(cfg, data);
  const auto layers = resolve_layers(cfg, models);
  const InputSet inputs = make_input_set(cfg, data);
  prepare_outputs(cfg, "sid");
  return report_status(run_grid(cfg, models, layers, inputs));
}

int cmd_ru(const RunConfig& cfg) {
  const Dataset data = load_dataset(cfg);
  const auto models = single_model(cfg, data);
  const auto layers = resolve_layers(cfg, models);
  const InputSet inputs = make_input_set(cfg, data);
  prepare_outputs(cfg, "ru");
  const DecoderMap decoders = train_decoders(cfg, models, layers, data);
  return report_status(run_grid(cfg, models, layers, inputs, &decoders));
}

int cmd_concentration(const RunConfig& cfg) {
  if (!cfg.mask) throw ConfigError("concentration needs a 'mask' section");
  if (!cfg.entropy_maps.empty()) {
    if (cfg.mask->source != "file") throw ConfigError("concentration over entropy maps needs mask.source = file");
    prepare_outputs(cfg, "concentration");
    std::string csv = "map,concentration\n";
    for (const auto& path : cfg.entropy_maps) {
      const Tensor map = spatial_map(read_lltn(path));
      const double c = concentration(map, read_mask(cfg.mask->path, map.shape()[0], map.shape()[1]));
      csv += path.string() + "," + fmt(c) + "\n";
      std::cout << path.string() << " concentration=" << fmt(c) << "\n";
    }
    write_file_atomic(cfg.outputs / "concentration.csv", csv);
    return static_cast<int>(ExitCode::success);
  }
  const Dataset data = load_dataset(cfg);
  const auto models = single_model(cfg, data);
  const auto layers = resolve_layers(cfg, models);
  const InputSet inputs = make_input_set(cfg, data);
  prepare_outputs(cfg, "concentration");
  return report_status(run_grid(cfg, models, layers, inputs));
}

int cmd_coherency(const RunConfig& cfg) {
  const Dataset data = load_dataset(cfg);
  const ModelGraph model = load_model(cfg.model, data, cfg.seed);
  std::vector<std::string> layers = cfg.coherency_layers;
  if (layers.empty()) {
    for (const auto& name : model.layer_names()) {
      try {
        rescale_partner(model, name);
        layers.push_back(name);
      } catch (const ModelError&) {
      }
    }
  }
  if (layers.empty()) throw ConfigError("model has no layer pair that can be rescaled");
  const std::vector<Tensor> inputs = select_inputs(cfg, data);
  prepare_outputs(cfg, "coherency");

  LayerwiseReport report;
  std::string csv = "layer,partner,feature_layer,input,output_max_diff,max_delta_H,pass\n";
  bool all_pass = true, conformant = true;
  for (const auto& layer : layers) {
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      const CoherencyReport c = coherency_check(model, layer, inputs[k], cfg.estimator, cfg.coherency_feature_layer);
      const std::string input = "input_" + std::to_string(cfg.inputs[k]);
      csv += c.layer + "," + c.partner + "," + c.feature_layer + "," + input + "," + fmt(c.output_max_diff) + "," +
             fmt(c.max_delta_H) + "," + (c.pass ? "true" : "false") + "\n";
      std::cout << (c.pass ? "PASS " : "FAIL ") << c.layer << " -> " << c.partner << " on " << c.feature_layer << " "
                << input << ": max |dH| = " << fmt(c.max_delta_H) << ", output diff = " << fmt(c.output_max_diff)
                << "\n";
      all_pass = all_pass && c.pass;
      for (const auto* r : {&c.original, &c.rescaled}) {
        ReportRecord rec;
        rec.model = r == &c.original ? "original" : "rescaled_" + c.layer;
        rec.layer = c.feature_layer;
        rec.input_set = input;
        rec.H_total = r->H_total;
        rec.epsilon = r->epsilon_achieved;
        rec.delta_f_sq = r->delta_f_sq;
        rec.conformant = r->conformant;
        rec.count = 1;
        conformant = conformant && r->conformant;
        report.records.push_back(rec);
      }
    }
  }
  write_file_atomic(cfg.outputs / "coherency.csv", csv);
  export_csv(report, cfg.outputs / "report.csv");
  if (!all_pass) return static_cast<int>(ExitCode::failure);
  return static_cast<int>(conformant ? ExitCode::success : ExitCode::nonconformant);
}

int cmd_damage(const RunConfig& cfg) {
  const Dataset data = load_dataset(cfg);
  const ModelGraph base = load_model(cfg.model, data, cfg.seed);
  std::vector<ModelEntry> models{{"original", base}};
  for (std::size_t p : cfg.damage_positions) {
    const std::uint64_t seed = RngStream(cfg.seed).derive("insert" + std::to_string(p)).next_u64();
    models.push_back({"insert_" + std::to_string(p), insert_block(base, p, cfg.damage_n, seed)});
  }
  const auto layers = resolve_layers(cfg, std::span<const ModelEntry>(models.data(), 1));
  RunConfig scoped = cfg;
  scoped.layers = layers;
  resolve_layers(scoped, models);
  const InputSet inputs = make_input_set(cfg, data);
  prepare_outputs(cfg, "damage");

  json summary{{"n", cfg.damage_n}, {"trained", cfg.damage_train}, {"models", json::array()}};
  for (auto& m : models) {
    if (cfg.damage_train) m.model = train_quietly(m.model, data, cfg.train);
    save_checkpoint(m.model, {cfg.damage_train ? cfg.train.epochs : 0, std::numeric_limits<double>::quiet_NaN(), cfg.seed},
                    cfg.outputs / "models" / m.id);
  }
  const LayerwiseReport report = run_grid(cfg, models, layers, inputs);
  const int status = report_status(report);

  // wide table: one column group per model
  std::map<std::pair<std::string, std::string>, const ReportRecord*> by;
  for (const auto& r : report.records) by[{r.model, r.layer}] = &r;
  std::string csv = "layer";
  for (const auto& m : models) csv += "," + m.id + "_H_total," + m.id + "_epsilon," + m.id + "_conformant";
  csv += "\n";
  for (const auto& layer : layers) {
    csv += layer;
    for (const auto& m : models) {
      const ReportRecord* r = by.at({m.id, layer});
      csv += "," + fmt(r->H_total) + "," + fmt(r->epsilon) + "," + (r->conformant ? "true" : "false");
    }
    csv += "\n";
  }
  write_file_atomic(cfg.outputs / "damage.csv", csv);

  for (std::size_t k = 0; k < models.size(); ++k) {
    json entry{{"id", models[k].id}};
    if (models[k].model.output_shape().size() == 1 && cfg.train.loss == LossKind::cross_entropy) {
      entry["accuracy"] = accuracy(models[k].model, data);
    }
    if (k > 0) {
      std::size_t more = 0, compared = 0;
      double diff = 0.0;
      for (const auto& layer : layers) {
        const double d = by.at({models[k].id, layer})->H_total - by.at({"original", layer})->H_total;
        if (std::isnan(d)) continue;
        ++compared;
        diff += d;
        if (d > 0) ++more;
      }
      entry["position"] = cfg.damage_positions[k - 1];
      entry["layers_compared"] = compared;
      entry["layers_with_more_discarding"] = more;
      entry["mean_H_total_difference"] = compared > 0 ? json(diff / static_cast<double>(compared)) : json(nullptr);
      std::cout << models[k].id << ": higher SID than the original at " << more << " of " << compared
                << " layers, mean difference " << (compared > 0 ? fmt(diff / static_cast<double>(compared)) : "nan")
                << " nats\n";
    }
    summary["models"].push_back(entry);
  }
  write_json(cfg.outputs / "damage_summary.json", summary);
  return status;
}

int cmd_sweep(const RunConfig& cfg) {
  if (cfg.sweep_checkpoints.empty()) throw ConfigError("empty sweep: no checkpoints listed under sweep.checkpoints");
  const Dataset data = load_dataset(cfg);
  std::vector<ModelEntry> models;
  for (const auto& path : cfg.sweep_checkpoints) {
    ModelConfig m;
    m.checkpoint = path;
    models.push_back({model_id(m), load_model(m, data, cfg.seed)});
  }
  const auto layers = resolve_layers(cfg, models);
  const InputSet inputs = make_input_set(cfg, data);
  prepare_outputs(cfg, "sweep");
  return report_status(run_grid(cfg, models, layers, inputs));
}

int cmd_report(const RunConfig& cfg) {
  const Dataset data = load_dataset(cfg);
  std::vector<ModelEntry> models;
  for (const auto& m : cfg.models.empty() ? std::vector<ModelConfig>{cfg.model} : cfg.models) {
    models.push_back({model_id(m), load_model(m, data, cfg.seed)});
  }
  for (std::size_t i = 0; i < models.size(); ++i)
    for (std::size_t k = 0; k < i; ++k)
      if (models[i].id == models[k].id) throw ConfigError("duplicate model id '" + models[i].id + "'");
  const auto layers = resolve_layers(cfg, models);
  const InputSet inputs = make_input_set(cfg, data);
  prepare_outputs(cfg, "report");
  if (!cfg.report_ru) return report_status(run_grid(cfg, models, layers, inputs));
  const DecoderMap decoders = train_decoders(cfg, models, layers, data);
  return report_status(run_grid(cfg, models, layers, inputs, &decoders));
}

}  // namespace layerlens::cli
