#include "layerlens/train.h"

#include <algorithm>
#include <memory>
#include <numeric>
#include <string>

#include "layerlens/error.h"
#include "layerlens/optim.h"
#include "layerlens/rng.h"

namespace layerlens {

OptimizerKind optimizer_from_string(std::string_view name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + std::string(name) + "'");
}

LossKind loss_from_string(std::string_view name) {
  if (name == "cross-entropy" || name == "cross_entropy") return LossKind::cross_entropy;
  if (name == "mse") return LossKind::mse;
  throw ConfigError("unknown loss '" + std::string(name) + "'");
}

std::string_view to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }
std::string_view to_string(LossKind kind) { return kind == LossKind::mse ? "mse" : "cross-entropy"; }

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
}

namespace {

struct Batch {
  Tensor inputs;
  Tensor targets;
  std::vector<std::size_t> labels;
};

Batch gather(const Dataset& data, std::span<const std::size_t> idx, LossKind loss) {
  const std::size_t in_size = data.inputs.size() / data.size();
  const std::size_t t_size = data.targets.size() / data.size();
  Shape xs = data.inputs.shape();
  xs[0] = idx.size();
  Shape ts = data.targets.shape();
  ts[0] = idx.size();
  Batch b{Tensor(xs), Tensor(ts), {}};
  for (std::size_t r = 0; r < idx.size(); ++r) {
    std::copy_n(data.inputs.data().begin() + static_cast<std::ptrdiff_t>(idx[r] * in_size), in_size,
                b.inputs.data().begin() + static_cast<std::ptrdiff_t>(r * in_size));
    std::copy_n(data.targets.data().begin() + static_cast<std::ptrdiff_t>(idx[r] * t_size), t_size,
                b.targets.data().begin() + static_cast<std::ptrdiff_t>(r * t_size));
  }
  if (loss == LossKind::cross_entropy) {
    Dataset view;
    view.targets = b.targets;
    b.labels = view.labels();
  }
  return b;
}

Var batch_loss(const Var& out, const Batch& b, LossKind loss) {
  if (loss == LossKind::cross_entropy) return softmax_cross_entropy(out, b.labels);
  if (out.shape() != b.targets.shape()) {
    throw ShapeError("mse target shape " + to_string(b.targets.shape()) + " does not match model output " +
                     to_string(out.shape()));
  }
  return mse(out, Var::constant(b.targets));
}

std::unique_ptr<Optimizer> make_optimizer(const TrainConfig& cfg) {
  if (cfg.optimizer == OptimizerKind::sgd) return std::make_unique<Sgd>(cfg.learning_rate);
  return std::make_unique<Adam>(cfg.learning_rate);
}

}  // namespace

TrainResult train(const ModelGraph& model, const Dataset& data, const TrainConfig& cfg, const EpochCallback& on_epoch,
                  std::size_t first_epoch) {
  cfg.validate();
  if (data.size() == 0) throw ConfigError("training dataset is empty");
  if (data.input_shape() != model.input_shape()) {
    throw ShapeError("dataset inputs " + to_string(data.input_shape()) + " do not match model input " +
                     to_string(model.input_shape()));
  }
  TrainResult result{model, {}};
  auto optimizer = make_optimizer(cfg);
  const RngStream root(cfg.seed);
  const std::size_t n = data.size();

  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    const std::size_t epoch = first_epoch + e;
    RngStream rng = root.derive("epoch" + std::to_string(epoch));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    double total = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size, ++batch_index) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      const Batch b = gather(data, std::span(order).subspan(start, stop - start), cfg.loss);
      auto leaves = result.model.parameter_leaves();
      double value = 0.0;
      Gradients grads;
      try {
        Var loss = batch_loss(result.model.forward(Var::constant(b.inputs), {}, leaves), b, cfg.loss);
        value = loss.value().item();
        grads = backward(loss);
      } catch (const NumericalError& err) {
        throw NumericalError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch_index) + ": " + err.what());
      }
      std::vector<Tensor> values;
      std::vector<Tensor> grad_values;
      values.reserve(leaves.size());
      for (const auto& leaf : leaves) {
        values.push_back(leaf.value());
        grad_values.push_back(grads.contains(leaf) ? grads.of(leaf) : Tensor(leaf.shape()));
      }
      optimizer->step(values, grad_values);
      const auto params = result.model.parameters();
      for (std::size_t i = 0; i < values.size(); ++i) {
        if (!values[i].all_finite()) {
          throw NumericalError("training diverged at epoch " + std::to_string(epoch) + ": parameter " +
                               params[i].key() + " became non-finite");
        }
      }
      for (std::size_t i = 0; i < values.size(); ++i) {
        result.model.set_parameter(params[i].layer, params[i].name, std::move(values[i]));
      }
      total += value * static_cast<double>(stop - start);
    }
    const double epoch_loss = total / static_cast<double>(n);
    result.loss_trace.push_back(epoch_loss);
    if (on_epoch) on_epoch(result.model, epoch, epoch_loss);
  }
  return result;
}

double evaluate_loss(const ModelGraph& model, const Dataset& data, LossKind loss) {
  if (data.size() == 0) throw ConfigError("evaluation dataset is empty");
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  double total = 0.0;
  constexpr std::size_t kChunk = 256;
  for (std::size_t start = 0; start < all.size(); start += kChunk) {
    const std::size_t stop = std::min(all.size(), start + kChunk);
    const Batch b = gather(data, std::span(all).subspan(start, stop - start), loss);
    total += batch_loss(model.forward(Var::constant(b.inputs)), b, loss).value().item() *
             static_cast<double>(stop - start);
  }
  return total / static_cast<double>(data.size());
}

double accuracy(const ModelGraph& model, const Dataset& data) {
  const auto labels = data.labels();
  const Tensor out = model.forward(Var::constant(data.inputs)).value();
  const std::size_t k = out.shape()[1];
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double* row = out.data().data() + i * k;
    if (static_cast<std::size_t>(std::max_element(row, row + k) - row) == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

}  // namespace layerlens
