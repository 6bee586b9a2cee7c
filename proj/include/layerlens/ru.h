#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "layerlens/dataset.h"
#include "layerlens/model.h"
#include "layerlens/sid.h"
#include "layerlens/train.h"

namespace layerlens {

/// Lower bound on reported reconstruction entropy: ln(1e-6) + C.
inline constexpr double kRuFloorSigma = 1e-6;
double ru_floor();

enum class DecoderKind {
  automatic,  ///< residual when the feature is an upsampleable map, dense otherwise
  residual,   ///< residual blocks, stride-2 transposed convs in the upsampling blocks, 1x1 output conv
  dense,      ///< flatten -> dense(128) -> relu -> dense -> reshape
  linear      ///< flatten -> dense -> reshape
};
DecoderKind decoder_kind_from_string(std::string_view name);
std::string_view to_string(DecoderKind kind);

/// Layer list mapping `feature` back to `input`.
std::vector<LayerSpec> decoder_layers(const Shape& feature, const Shape& input, DecoderKind kind);

/// Decoder g for one feature layer of h. Parameters are never changed after training.
struct DecoderSpec {
  ModelGraph graph;
  std::string layer;
  double validation_mse = std::numeric_limits<double>::quiet_NaN();
};

/// Trains g on (h(x), x) pairs with an MSE loss, 90/10 train/validation split.
DecoderSpec train_decoder(const ModelGraph& model, std::string_view layer, const Dataset& data,
                          const TrainConfig& cfg, DecoderKind kind = DecoderKind::automatic);

/// Mean squared reconstruction error of g(h(x)) against x.
double reconstruction_mse(const ModelGraph& model, const DecoderSpec& decoder, const Dataset& data);

/// Checkpoint directory plus decoder.json naming the feature layer.
void save_decoder(const DecoderSpec& decoder, const std::filesystem::path& dir);
DecoderSpec load_decoder(const std::filesystem::path& dir);

struct PixelRu {
  Tensor H_hat_i;
  std::vector<std::size_t> floored_units;
};

/// H^_i = 0.5 * ln(mean_s (x_i - g(h(x + sigma * noise_s))_i)^2) + C, floor-clamped.
PixelRu pixel_ru(const ModelGraph& model, const DecoderSpec& decoder, const Tensor& x, const SigmaField& sigma,
                 const Tensor& noise);
/// Same, on `samples` stratified draws from `rng`.
PixelRu pixel_ru(const ModelGraph& model, const DecoderSpec& decoder, const Tensor& x, const SigmaField& sigma,
                 std::size_t samples, RngStream& rng);

/// (1/delta_f^2) * mean_s ||h(x') - f||^2 - (lambda/2) * sum_i (ln mean_s (x_i - x^'_i)^2 + C),
/// both terms on the same draws.
LossAndGrad ru_loss(const ModelGraph& model, const DecoderSpec& decoder, const Tensor& x, const SigmaField& sigma,
                    double lambda, double delta_f_sq, const Tensor& noise);

struct RuResult {
  Tensor H_hat_i;
  double H_hat_total = 0.0;
  Tensor log_sigma;
  double epsilon_achieved = 0.0;
  double epsilon_target = 0.0;
  double delta_f_sq = 0.0;
  double lambda_final = 0.0;
  std::size_t steps_used = 0;
  std::size_t rounds_used = 0;
  std::vector<std::size_t> capped_units;
  std::vector<std::size_t> floored_units;
  bool conformant = false;
  double decoder_mse = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t seed = 0;
};

/// Learns sigma under the same constraint as estimate_sid and reports H^_i
/// on cfg.eval_samples held-out draws.
RuResult estimate_ru(const ModelGraph& model, const DecoderSpec& decoder, const Tensor& x, const SidConfig& cfg);

nlohmann::json to_json(const RuResult& r);
/// Writes <stem>.json, <stem>.H_hat_i.lltn and <stem>.log_sigma.lltn atomically.
void write_ru_result(const RuResult& r, const std::filesystem::path& stem);

}  // namespace layerlens
