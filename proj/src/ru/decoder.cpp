#include <bit>
#include <cmath>
#include <fstream>

#include "layerlens/checkpoint.h"
#include "layerlens/error.h"
#include "layerlens/lltn.h"
#include "layerlens/ru.h"

namespace layerlens {

namespace {

constexpr std::size_t kDecoderWidth = 16;
constexpr std::size_t kDenseHidden = 128;
constexpr std::size_t kResidualBlocks = 3;

bool upsampleable(const Shape& feature, const Shape& input) {
  if (feature.size() != 3 || input.size() != 3) return false;
  if (input[1] % feature[1] != 0 || input[2] % feature[2] != 0) return false;
  const std::size_t ry = input[1] / feature[1], rx = input[2] / feature[2];
  return ry == rx && std::has_single_bit(ry);
}

std::vector<LayerSpec> flatten_head(const Shape& feature, const Shape& input, bool hidden) {
  std::vector<LayerSpec> specs;
  if (feature.size() > 1) specs.push_back(LayerSpec::flatten("dec_flatten"));
  if (hidden) {
    specs.push_back(LayerSpec::dense("dec_fc1", kDenseHidden));
    specs.push_back(LayerSpec::relu("dec_relu1"));
  }
  specs.push_back(LayerSpec::dense("dec_out", numel(input)));
  if (input.size() != 1) specs.push_back(LayerSpec::reshape("dec_reshape", input));
  return specs;
}

}  // namespace

double ru_floor() { return std::log(kRuFloorSigma) + kEntropyConstant; }

DecoderKind decoder_kind_from_string(std::string_view name) {
  if (name == "auto" || name == "automatic") return DecoderKind::automatic;
  if (name == "residual") return DecoderKind::residual;
  if (name == "dense") return DecoderKind::dense;
  if (name == "linear") return DecoderKind::linear;
  throw ConfigError("unknown decoder kind '" + std::string(name) + "' (auto, residual, dense, linear)");
}

std::string_view to_string(DecoderKind kind) {
  switch (kind) {
    case DecoderKind::automatic: return "auto";
    case DecoderKind::residual: return "residual";
    case DecoderKind::dense: return "dense";
    case DecoderKind::linear: return "linear";
  }
  return "auto";
}

std::vector<LayerSpec> decoder_layers(const Shape& feature, const Shape& input, DecoderKind kind) {
  if (kind == DecoderKind::automatic) {
    kind = upsampleable(feature, input) ? DecoderKind::residual : DecoderKind::dense;
  }
  if (kind == DecoderKind::linear) return flatten_head(feature, input, false);
  if (kind == DecoderKind::dense) return flatten_head(feature, input, true);

  if (!upsampleable(feature, input)) {
    throw ConfigError("residual decoder needs a [C,h,w] feature whose size divides the input by a power of two; got " +
                      to_string(feature) + " -> " + to_string(input));
  }
  const std::size_t ups = static_cast<std::size_t>(std::countr_zero(input[1] / feature[1]));
  const std::size_t blocks = std::max(kResidualBlocks, ups);
  std::vector<LayerSpec> specs;
  for (std::size_t b = 0; b < blocks; ++b) {
    specs.push_back(LayerSpec::residual_block("dec_block" + std::to_string(b + 1), kDecoderWidth, b < ups));
  }
  specs.push_back(LayerSpec::conv("dec_out", input[0], 1));
  return specs;
}

DecoderSpec train_decoder(const ModelGraph& model, std::string_view layer, const Dataset& data,
                          const TrainConfig& cfg, DecoderKind kind) {
  cfg.validate();
  if (data.size() == 0) throw ConfigError("decoder training needs a non-empty dataset");
  if (data.input_shape() != model.input_shape()) {
    throw ShapeError("dataset inputs " + to_string(data.input_shape()) + " do not match the model input " +
                     to_string(model.input_shape()));
  }
  Dataset pairs{forward_to(model, data.inputs, layer), data.inputs, {}};
  auto [fit, validation] = split(pairs, 0.1, cfg.seed);

  TrainConfig decoder_cfg = cfg;
  decoder_cfg.loss = LossKind::mse;
  ModelGraph g = ModelGraph::build(decoder_layers(model.output_shape(layer), model.input_shape(), kind),
                                   model.output_shape(layer), RngStream(cfg.seed).derive("decoder").next_u64());
  TrainResult trained = train(g, fit, decoder_cfg);
  DecoderSpec out{std::move(trained.model), std::string(layer), 0.0};
  out.validation_mse = evaluate_loss(out.graph, validation, LossKind::mse);
  return out;
}

double reconstruction_mse(const ModelGraph& model, const DecoderSpec& decoder, const Dataset& data) {
  Dataset pairs{forward_to(model, data.inputs, decoder.layer), data.inputs, {}};
  return evaluate_loss(decoder.graph, pairs, LossKind::mse);
}

void save_decoder(const DecoderSpec& decoder, const std::filesystem::path& dir) {
  save_checkpoint(decoder.graph, {0, decoder.validation_mse, 0}, dir);
  nlohmann::json j{{"layer", decoder.layer}, {"validation_mse", nullptr}};
  if (std::isfinite(decoder.validation_mse)) j["validation_mse"] = decoder.validation_mse;
  write_file_atomic(dir / "decoder.json", j.dump(2) + "\n");
}

DecoderSpec load_decoder(const std::filesystem::path& dir) {
  Checkpoint c = load_checkpoint(dir);
  const std::vector<char> bytes = read_file_bytes(dir / "decoder.json");
  try {
    const auto j = nlohmann::json::parse(bytes.begin(), bytes.end());
    const auto& mse = j.at("validation_mse");
    return {std::move(c.model), j.at("layer").get<std::string>(),
            mse.is_null() ? std::numeric_limits<double>::quiet_NaN() : mse.get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed decoder.json in " + dir.string() + ": " + e.what());
  }
}

}  // namespace layerlens
