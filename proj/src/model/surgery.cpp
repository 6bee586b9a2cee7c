#include "layerlens/surgery.h"

#include <vector>

#include "layerlens/error.h"

namespace layerlens {

namespace {

Tensor scaled(const Tensor& t, double factor) {
  Tensor out = t;
  for (auto& v : out.data()) v *= factor;
  return out;
}

}  // namespace

ModelGraph insert_block(const ModelGraph& model, std::size_t position, std::size_t n, std::uint64_t seed,
                        BlockInit init) {
  if (n == 0) throw ModelError("inserted block width N must be at least 1");
  std::vector<std::size_t> blocks;
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    if (model.layers()[i].kind == LayerKind::residual_block) blocks.push_back(i);
  }
  if (position == 0 || position >= blocks.size()) {
    throw ModelError("insert position " + std::to_string(position) + " is not between two residual blocks (model has " +
                     std::to_string(blocks.size()) + ")");
  }
  const std::size_t after = blocks[position - 1];
  const std::string& block_name = model.layers()[after].name;
  const std::size_t m = model.output_shape(block_name)[0];
  if (init == BlockInit::identity && n != m) throw ModelError("identity-initialized block requires N == M");

  const std::string prefix = "insert" + std::to_string(position) + "_";
  std::vector<LayerSpec> specs(model.layers().begin(), model.layers().end());
  const std::vector<LayerSpec> added{LayerSpec::conv(prefix + "conv1", n, 1), LayerSpec::relu(prefix + "relu1"),
                                     LayerSpec::conv(prefix + "conv2", m, 1), LayerSpec::relu(prefix + "relu2")};
  specs.insert(specs.begin() + static_cast<std::ptrdiff_t>(after + 1), added.begin(), added.end());

  ModelGraph out = ModelGraph::build(std::move(specs), model.input_shape(), seed);
  for (const auto& p : model.parameters()) out.set_parameter(p.layer, p.name, p.value());
  if (init == BlockInit::identity) {
    for (const auto* conv : {&added[0], &added[2]}) {
      Tensor w(Shape{m, m, 1, 1});
      for (std::size_t c = 0; c < m; ++c) w[c * m + c] = 1.0;
      out.set_parameter(conv->name, "weight", std::move(w));
      out.set_parameter(conv->name, "bias", Tensor(Shape{m}));
    }
  }
  return out;
}

std::string rescale_partner(const ModelGraph& model, std::string_view layer) {
  const std::size_t li = model.layer_index(layer);
  const auto layers = model.layers();
  if (!is_affine(layers[li].kind) || layers[li].kind == LayerKind::transpose_conv) {
    throw ModelError("rescale_pair: layer '" + std::string(layer) + "' is not a conv or dense layer");
  }
  for (std::size_t j = li + 1; j < layers.size(); ++j) {
    const LayerKind k = layers[j].kind;
    if (k == LayerKind::conv || k == LayerKind::dense) {
      // A skip connection reading a scaled activation would break output preservation.
      for (std::size_t s = j + 1; s < layers.size(); ++s) {
        if (layers[s].kind != LayerKind::add_skip) continue;
        for (std::size_t r = li; r < j; ++r) {
          if (layers[s].from == layers[r].name) {
            throw ModelError("rescale_pair: scaled output of '" + layers[r].name + "' feeds skip '" +
                             layers[s].name + "'");
          }
        }
      }
      return layers[j].name;
    }
    if (k != LayerKind::relu && k != LayerKind::flatten) {
      throw ModelError("rescale_pair: layer '" + layers[j].name + "' (" + std::string(to_string(k)) +
                       ") between '" + std::string(layer) + "' and its successor is not positively homogeneous");
    }
  }
  throw ModelError("rescale_pair: layer '" + std::string(layer) + "' has no following conv/dense layer");
}

ModelGraph rescale_pair(const ModelGraph& model, std::string_view layer, double factor) {
  if (!(factor > 0.0)) throw ModelError("rescale factor must be positive");
  const std::string next = rescale_partner(model, layer);
  ModelGraph out = model;
  out.set_parameter(layer, "weight", scaled(model.parameter(layer, "weight"), 1.0 / factor));
  out.set_parameter(layer, "bias", scaled(model.parameter(layer, "bias"), 1.0 / factor));
  out.set_parameter(next, "weight", scaled(model.parameter(next, "weight"), factor));
  return out;
}

}  // namespace layerlens
