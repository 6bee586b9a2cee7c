#include "layerlens/model.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "layer_rules.h"
#include "layerlens/error.h"
#include "layerlens/rng.h"

namespace layerlens {

ModelGraph ModelGraph::build(std::vector<LayerSpec> specs, Shape input_shape, std::uint64_t seed) {
  if (specs.empty()) throw ModelError("a model needs at least one layer");
  if (input_shape.empty() || numel(input_shape) == 0) throw ShapeError("model input shape must be non-empty");
  ModelGraph g;
  g.input_shape_ = std::move(input_shape);
  g.specs_ = std::move(specs);

  std::set<std::string, std::less<>> seen;
  const RngStream root(seed);
  Shape current = g.input_shape_;
  for (std::size_t i = 0; i < g.specs_.size(); ++i) {
    const LayerSpec& spec = g.specs_[i];
    if (spec.name.empty() || spec.name == kInputLayer || !seen.insert(spec.name).second) {
      throw ModelError("layer name '" + spec.name + "' is empty, reserved, or duplicated");
    }
    auto lookup = [&](std::string_view name) -> const Shape& {
      if (name == kInputLayer) return g.input_shape_;
      for (std::size_t j = 0; j < i; ++j)
        if (g.specs_[j].name == name) return g.shapes_[j];
      throw ShapeError("layer '" + spec.name + "' refers to unknown or later layer '" + std::string(name) + "'");
    };
    Shape out = detail::infer_output_shape(spec, current, lookup);
    g.first_param_.push_back(g.params_.size());
    for (const auto& ps : detail::parameter_shapes(spec, current)) {
      Tensor value(ps.shape);
      if (ps.fan_in > 0) {
        // He-uniform: U(-sqrt(6/fan_in), sqrt(6/fan_in))
        const double limit = std::sqrt(6.0 / static_cast<double>(ps.fan_in));
        RngStream rng = root.derive(spec.name + "." + ps.name);
        value = uniform(rng, ps.shape, -limit, limit);
      }
      g.params_.push_back(Parameter{spec.name, ps.name, Var::constant(std::move(value))});
    }
    g.shapes_.push_back(out);
    current = std::move(out);
  }
  g.first_param_.push_back(g.params_.size());
  return g;
}

std::vector<std::string> ModelGraph::layer_names() const {
  std::vector<std::string> names;
  names.reserve(specs_.size());
  for (const auto& s : specs_) names.push_back(s.name);
  return names;
}

bool ModelGraph::has_layer(std::string_view name) const {
  if (name == kInputLayer) return true;
  for (const auto& s : specs_)
    if (s.name == name) return true;
  return false;
}

std::size_t ModelGraph::layer_index(std::string_view name) const {
  for (std::size_t i = 0; i < specs_.size(); ++i)
    if (specs_[i].name == name) return i;
  throw ModelError("unknown layer '" + std::string(name) + "'");
}

const Shape& ModelGraph::output_shape(std::string_view name) const {
  if (name == kInputLayer) return input_shape_;
  return shapes_[layer_index(name)];
}

std::optional<std::size_t> ModelGraph::find_parameter(std::string_view layer, std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].layer == layer && params_[i].name == name) return i;
  return std::nullopt;
}

const Tensor& ModelGraph::parameter(std::string_view layer, std::string_view name) const {
  auto idx = find_parameter(layer, name);
  if (!idx) throw ModelError("no parameter '" + std::string(name) + "' in layer '" + std::string(layer) + "'");
  return params_[*idx].value();
}

void ModelGraph::set_parameter(std::string_view layer, std::string_view name, Tensor value) {
  auto idx = find_parameter(layer, name);
  if (!idx) throw ModelError("no parameter '" + std::string(name) + "' in layer '" + std::string(layer) + "'");
  if (value.shape() != params_[*idx].value().shape()) {
    throw ShapeError("parameter " + params_[*idx].key() + " expects shape " + to_string(params_[*idx].value().shape()) +
                     ", got " + to_string(value.shape()));
  }
  if (!value.all_finite()) throw NumericalError("non-finite value for parameter " + params_[*idx].key());
  params_[*idx].var = Var::constant(std::move(value));
}

std::vector<const Parameter*> ModelGraph::layer_parameters(std::string_view layer) const {
  const std::size_t li = layer_index(layer);
  std::vector<const Parameter*> out;
  for (std::size_t i = first_param_[li]; i < first_param_[li + 1]; ++i) out.push_back(&params_[i]);
  return out;
}

std::size_t ModelGraph::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value().size();
  return n;
}

std::vector<Var> ModelGraph::parameter_leaves() const {
  std::vector<Var> leaves;
  leaves.reserve(params_.size());
  for (const auto& p : params_) leaves.push_back(Var::leaf(p.value()));
  return leaves;
}

const Var& ModelGraph::param_var(std::size_t index, std::span<const Var> bound) const {
  return bound.empty() ? params_[index].var : bound[index];
}

namespace {

Var channel_bias(const Var& y, const Var& bias) {
  return add(y, reshape(bias, Shape{bias.shape()[0], 1, 1}));
}

}  // namespace

Var ModelGraph::run_layer(std::size_t index, const Var& in, std::span<const Var> outputs,
                          std::span<const Var> bound) const {
  const LayerSpec& spec = specs_[index];
  const std::size_t p0 = first_param_[index];
  auto param = [&](std::size_t k) -> const Var& { return param_var(p0 + k, bound); };
  const std::size_t batch = in.shape()[0];
  switch (spec.kind) {
    case LayerKind::dense:
      return add(matmul(in, transpose(param(0))), param(1));
    case LayerKind::conv:
      return channel_bias(conv2d(in, param(0), {spec.stride, spec.padding}), param(1));
    case LayerKind::transpose_conv:
      return channel_bias(transpose_conv2d(in, param(0), {spec.stride, spec.padding}), param(1));
    case LayerKind::relu:
      return relu(in);
    case LayerKind::flatten:
      return reshape(in, Shape{batch, numel(shapes_[index])});
    case LayerKind::reshape: {
      Shape s{batch};
      s.insert(s.end(), spec.target_shape.begin(), spec.target_shape.end());
      return reshape(in, std::move(s));
    }
    case LayerKind::add_skip: {
      if (spec.from == kInputLayer) return add(in, outputs[0]);
      return add(in, outputs[layer_index(spec.from) + 1]);
    }
    case LayerKind::residual_block: {
      Var main;
      Var skip = in;
      if (spec.upsample) {
        main = channel_bias(transpose_conv2d(in, param(0), {2, 0}), param(1));
        skip = channel_bias(transpose_conv2d(in, param(4), {2, 0}), param(5));
      } else {
        main = channel_bias(conv2d(in, param(0), {1, 1}), param(1));
        if (first_param_[index + 1] - p0 == 6) skip = channel_bias(conv2d(in, param(4), {1, 0}), param(5));
      }
      main = channel_bias(conv2d(relu(main), param(2), {1, 1}), param(3));
      return relu(add(main, skip));
    }
  }
  throw ModelError("unsupported layer kind in '" + spec.name + "'");
}

Var ModelGraph::forward(const Var& x, std::string_view until, std::span<const Var> bound) const {
  const Shape& xs = x.shape();
  if (xs.size() != input_shape_.size() + 1 || !std::equal(input_shape_.begin(), input_shape_.end(), xs.begin() + 1)) {
    throw ShapeError("model expects a batch of " + to_string(input_shape_) + ", got " + to_string(xs));
  }
  if (!bound.empty() && bound.size() != params_.size()) {
    throw ModelError("bound parameter count does not match the model");
  }
  if (until == kInputLayer) return x;
  const std::size_t last = until.empty() ? specs_.size() - 1 : layer_index(until);
  bool keep = false;
  for (std::size_t i = 0; i <= last; ++i) keep = keep || specs_[i].kind == LayerKind::add_skip;
  std::vector<Var> outputs;
  if (keep) outputs.push_back(x);
  Var h = x;
  for (std::size_t i = 0; i <= last; ++i) {
    h = run_layer(i, h, outputs, bound);
    if (keep) outputs.push_back(h);
  }
  return h;
}

Tensor forward_to(const ModelGraph& model, const Tensor& x, std::string_view layer) {
  if (x.shape() == model.input_shape()) {
    Var out = model.forward(Var::constant(batched(x)), layer);
    return slice_batch(out.value(), 0);
  }
  return model.forward(Var::constant(x), layer).value();
}

Tensor forward(const ModelGraph& model, const Tensor& x) { return forward_to(model, x, model.last_layer()); }

}  // namespace layerlens
