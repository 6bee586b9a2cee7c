#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "layerlens/autodiff.h"
#include "layerlens/tensor.h"

namespace layerlens {

/// Reserved name addressing the raw input in forward_to().
inline constexpr std::string_view kInputLayer = "input";

enum class LayerKind { dense, conv, relu, transpose_conv, residual_block, flatten, add_skip, reshape };

std::string_view to_string(LayerKind kind);
LayerKind layer_kind_from_string(std::string_view name);

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::string name;
  std::size_t units = 0;     // dense
  std::size_t channels = 0;  // conv, transpose_conv, residual_block: output channels
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 0;
  bool upsample = false;     // residual_block: both tracks use stride-2 transposed convs
  std::string from;          // add_skip: earlier layer whose output is added
  Shape target_shape;        // reshape

  static LayerSpec dense(std::string name, std::size_t units);
  static LayerSpec conv(std::string name, std::size_t channels, std::size_t kernel, std::size_t stride = 1,
                        std::size_t padding = 0);
  static LayerSpec transpose_conv(std::string name, std::size_t channels, std::size_t kernel,
                                  std::size_t stride = 1, std::size_t padding = 0);
  static LayerSpec relu(std::string name);
  static LayerSpec flatten(std::string name);
  static LayerSpec residual_block(std::string name, std::size_t channels, bool upsample = false);
  static LayerSpec add_skip(std::string name, std::string from);
  static LayerSpec reshape(std::string name, Shape target);

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// True for layers that own a weight and bias applied as y = x (*) w + b.
bool is_affine(LayerKind kind);

struct Parameter {
  std::string layer;
  std::string name;
  Var var;

  const Tensor& value() const { return var.value(); }
  std::string key() const { return layer + "." + name; }
};

/// Ordered layer graph with parameters. Copies share immutable parameter
/// storage; set_parameter() replaces, never mutates in place.
class ModelGraph {
 public:
  /// Validates the shape chain and draws He-uniform weights (zero biases).
  static ModelGraph build(std::vector<LayerSpec> specs, Shape input_shape, std::uint64_t seed);

  const Shape& input_shape() const { return input_shape_; }
  std::span<const LayerSpec> layers() const { return specs_; }
  std::vector<std::string> layer_names() const;
  bool has_layer(std::string_view name) const;
  /// Index into layers(); throws ModelError for unknown names.
  std::size_t layer_index(std::string_view name) const;
  const LayerSpec& layer(std::string_view name) const { return specs_[layer_index(name)]; }
  /// Unbatched output shape of a layer ("input" gives the input shape).
  const Shape& output_shape(std::string_view name) const;
  const Shape& output_shape() const { return shapes_.back(); }
  const std::string& last_layer() const { return specs_.back().name; }

  std::span<const Parameter> parameters() const { return params_; }
  const Tensor& parameter(std::string_view layer, std::string_view name) const;
  void set_parameter(std::string_view layer, std::string_view name, Tensor value);
  /// Parameters belonging to one layer, in creation order.
  std::vector<const Parameter*> layer_parameters(std::string_view layer) const;
  std::size_t parameter_count() const;

  /// Leaf variables for every parameter, in parameters() order.
  std::vector<Var> parameter_leaves() const;

  /// Evaluates the graph on a batch x: [N, input...] up to and including
  /// `until` (empty = last layer). `bound` overrides the stored parameters.
  Var forward(const Var& x, std::string_view until = {}, std::span<const Var> bound = {}) const;

 private:
  Var run_layer(std::size_t index, const Var& in, std::span<const Var> outputs, std::span<const Var> bound) const;
  const Var& param_var(std::size_t index, std::span<const Var> bound) const;
  std::optional<std::size_t> find_parameter(std::string_view layer, std::string_view name) const;

  Shape input_shape_;
  std::vector<LayerSpec> specs_;
  std::vector<Shape> shapes_;
  std::vector<Parameter> params_;
  std::vector<std::size_t> first_param_;  // per layer, index into params_
};

/// Exact prefix evaluation for a single input (shape == input shape) or a
/// batch (leading batch axis).
Tensor forward_to(const ModelGraph& model, const Tensor& x, std::string_view layer);
Tensor forward(const ModelGraph& model, const Tensor& x);

}  // namespace layerlens
