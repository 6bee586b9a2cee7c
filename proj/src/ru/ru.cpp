#include "layerlens/ru.h"

#include <algorithm>
#include <cmath>

#include "layerlens/error.h"
#include "layerlens/lltn.h"
#include "layerlens/sigma_search.h"

namespace layerlens {

namespace {

constexpr std::size_t kEvalChunk = 128;
constexpr double kFloorVariance = kRuFloorSigma * kRuFloorSigma;

void check_decoder(const ModelGraph& model, const DecoderSpec& decoder) {
  if (decoder.graph.input_shape() != model.output_shape(decoder.layer)) {
    throw ShapeError("decoder expects features " + to_string(decoder.graph.input_shape()) + " but layer '" +
                     decoder.layer + "' produces " + to_string(model.output_shape(decoder.layer)));
  }
  if (decoder.graph.output_shape() != model.input_shape()) {
    throw ShapeError("decoder output " + to_string(decoder.graph.output_shape()) + " does not match the input " +
                     to_string(model.input_shape()));
  }
}

// 0.5 * sum_i (ln mean_s (x_i - g(f'_s)_i)^2 + C)
EntropyTerm reconstruction_entropy(const DecoderSpec& decoder, const Tensor& x) {
  return [&decoder, x](const Var&, const Var&, const Var& features) {
    const double samples = static_cast<double>(features.shape()[0]);
    Var err = sub(decoder.graph.forward(features), Var::constant(x));
    Var variance = scale(sum_batch(square(err)), 1.0 / samples);
    Var logs = reduce_sum(log(clamp_min(variance, kFloorVariance)));
    const double constant = static_cast<double>(x.size()) * kEntropyConstant;
    return scale(add(logs, Var::constant(Tensor::scalar(constant))), 0.5);
  };
}

}  // namespace

PixelRu pixel_ru(const ModelGraph& model, const DecoderSpec& decoder, const Tensor& x, const SigmaField& sigma,
                 const Tensor& noise) {
  check_decoder(model, decoder);
  if (sigma.log_sigma.shape() != x.shape()) throw ShapeError("sigma field shape does not match the input");
  const std::size_t samples = noise.shape()[0];
  const std::size_t units = x.size();
  if (noise.size() != samples * units) throw ShapeError("noise batch does not match the input");
  const Tensor s = sigma.sigma();

  std::vector<double> acc(units, 0.0);
  for (std::size_t start = 0; start < samples; start += kEvalChunk) {
    const std::size_t count = std::min(kEvalChunk, samples - start);
    Shape shape{count};
    shape.insert(shape.end(), x.shape().begin(), x.shape().end());
    Tensor xp(shape);
    for (std::size_t k = 0; k < count; ++k)
      for (std::size_t i = 0; i < units; ++i) xp[k * units + i] = x[i] + s[i] * noise[(start + k) * units + i];
    const Tensor rec = decoder.graph.forward(model.forward(Var::constant(std::move(xp)), decoder.layer)).value();
    for (std::size_t k = 0; k < count; ++k)
      for (std::size_t i = 0; i < units; ++i) {
        const double e = x[i] - rec[k * units + i];
        acc[i] += e * e;
      }
  }

  PixelRu out{Tensor(x.shape()), {}};
  const double floor = ru_floor();
  for (std::size_t i = 0; i < units; ++i) {
    const double variance = acc[i] / static_cast<double>(samples);
    const double h = variance > 0.0 ? 0.5 * std::log(variance) + kEntropyConstant : floor;
    if (h <= floor) {
      out.H_hat_i[i] = floor;
      out.floored_units.push_back(i);
    } else {
      out.H_hat_i[i] = h;
    }
  }
  return out;
}

PixelRu pixel_ru(const ModelGraph& model, const DecoderSpec& decoder, const Tensor& x, const SigmaField& sigma,
                 std::size_t samples, RngStream& rng) {
  if (samples == 0) throw ConfigError("pixel_ru needs at least one sample");
  return pixel_ru(model, decoder, x, sigma, stratified_gaussian(rng, samples, x.shape()));
}

LossAndGrad ru_loss(const ModelGraph& model, const DecoderSpec& decoder, const Tensor& x, const SigmaField& sigma,
                    double lambda, double delta_f_sq, const Tensor& noise) {
  check_decoder(model, decoder);
  if (!(delta_f_sq > 0.0)) throw DegenerateLayerError("ru_loss: delta_f^2 must be positive");
  if (sigma.log_sigma.shape() != x.shape()) throw ShapeError("sigma field shape does not match the input");
  FeatureProbe probe(model, decoder.layer, x);
  Var leaf = Var::leaf(sigma.log_sigma);
  ObjectiveValue value = objective(probe, reconstruction_entropy(decoder, x), leaf, noise, lambda, delta_f_sq);
  LossAndGrad out;
  out.loss = value.loss.value().item();
  out.deviation = value.deviation;
  out.grad = backward(value.loss).of(leaf);
  return out;
}

RuResult estimate_ru(const ModelGraph& model, const DecoderSpec& decoder, const Tensor& x, const SidConfig& cfg) {
  cfg.validate();
  check_decoder(model, decoder);
  const double delta_f_sq = feature_baseline(model, decoder.layer, x, cfg.tau, cfg.baseline_samples, cfg.seed);
  FeatureProbe probe(model, decoder.layer, x);
  SearchOutcome found = search_sigma(probe, reconstruction_entropy(decoder, x), delta_f_sq, cfg);
  PixelRu pixels = pixel_ru(model, decoder, x, SigmaField{found.log_sigma}, held_out_noise(cfg, x.shape()));

  RuResult r;
  r.H_hat_i = std::move(pixels.H_hat_i);
  r.H_hat_total = sum(r.H_hat_i);
  r.log_sigma = std::move(found.log_sigma);
  r.epsilon_achieved = found.epsilon;
  r.epsilon_target = cfg.alpha * delta_f_sq;
  r.delta_f_sq = delta_f_sq;
  r.lambda_final = found.lambda;
  r.steps_used = found.steps;
  r.rounds_used = found.rounds;
  r.capped_units = std::move(found.capped_units);
  r.floored_units = std::move(pixels.floored_units);
  r.conformant = found.conformant;
  r.decoder_mse = decoder.validation_mse;
  r.seed = cfg.seed;
  return r;
}

nlohmann::json to_json(const RuResult& r) {
  nlohmann::json j{{"H_hat_total", r.H_hat_total},
                   {"units", r.H_hat_i.size()},
                   {"shape", r.H_hat_i.shape()},
                   {"epsilon_achieved", r.epsilon_achieved},
                   {"epsilon_target", r.epsilon_target},
                   {"delta_f_sq", r.delta_f_sq},
                   {"lambda_final", r.lambda_final},
                   {"steps_used", r.steps_used},
                   {"rounds_used", r.rounds_used},
                   {"capped_units", r.capped_units},
                   {"floored_units", r.floored_units},
                   {"conformant", r.conformant},
                   {"decoder_mse", nullptr},
                   {"seed", r.seed}};
  if (std::isfinite(r.decoder_mse)) j["decoder_mse"] = r.decoder_mse;
  return j;
}

void write_ru_result(const RuResult& r, const std::filesystem::path& stem) {
  const auto sibling = [&](const std::string& suffix) {
    return stem.parent_path() / (stem.filename().string() + suffix);
  };
  write_lltn(sibling(".H_hat_i.lltn"), r.H_hat_i);
  write_lltn(sibling(".log_sigma.lltn"), r.log_sigma);
  write_file_atomic(sibling(".json"), to_json(r).dump(2) + "\n");
}

}  // namespace layerlens
