#pragma once

#include <cstdint>
#include <functional>
#include <string_view>
#include <vector>

#include "layerlens/dataset.h"
#include "layerlens/model.h"

namespace layerlens {

enum class OptimizerKind { sgd, adam };
enum class LossKind { cross_entropy, mse };

OptimizerKind optimizer_from_string(std::string_view name);
LossKind loss_from_string(std::string_view name);
std::string_view to_string(OptimizerKind kind);
std::string_view to_string(LossKind kind);

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::adam;
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::cross_entropy;

  /// Throws ConfigError on non-positive rates or sizes.
  void validate() const;
};

struct TrainResult {
  ModelGraph model;
  std::vector<double> loss_trace;  ///< mean training loss per epoch
};

/// Called after each epoch with the updated model, the absolute epoch number and its mean loss.
using EpochCallback = std::function<void(const ModelGraph&, std::size_t epoch, double loss)>;

/// Minibatch training. Epoch numbering starts at `first_epoch` so a resumed
/// run continues its shuffling sequence. A non-finite loss aborts with
/// NumericalError naming the epoch and batch.
TrainResult train(const ModelGraph& model, const Dataset& data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {}, std::size_t first_epoch = 1);

double evaluate_loss(const ModelGraph& model, const Dataset& data, LossKind loss);
double accuracy(const ModelGraph& model, const Dataset& data);

}  // namespace layerlens
