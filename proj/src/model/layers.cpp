#include <algorithm>
#include <array>
#include <utility>

#include "layer_rules.h"
#include "layerlens/error.h"

namespace layerlens {

namespace {
constexpr std::array<std::pair<LayerKind, std::string_view>, 8> kKindNames{{
    {LayerKind::dense, "dense"},
    {LayerKind::conv, "conv"},
    {LayerKind::relu, "relu"},
    {LayerKind::transpose_conv, "transpose_conv"},
    {LayerKind::residual_block, "residual_block"},
    {LayerKind::flatten, "flatten"},
    {LayerKind::add_skip, "add_skip"},
    {LayerKind::reshape, "reshape"},
}};
}  // namespace

std::string_view to_string(LayerKind kind) {
  for (const auto& [k, name] : kKindNames)
    if (k == kind) return name;
  return "unknown";
}

LayerKind layer_kind_from_string(std::string_view name) {
  for (const auto& [k, n] : kKindNames)
    if (n == name) return k;
  throw ConfigError("unknown layer kind '" + std::string(name) + "'");
}

bool is_affine(LayerKind kind) {
  return kind == LayerKind::dense || kind == LayerKind::conv || kind == LayerKind::transpose_conv;
}

LayerSpec LayerSpec::dense(std::string name, std::size_t units) {
  LayerSpec s;
  s.kind = LayerKind::dense;
  s.name = std::move(name);
  s.units = units;
  return s;
}

LayerSpec LayerSpec::conv(std::string name, std::size_t channels, std::size_t kernel, std::size_t stride,
                          std::size_t padding) {
  LayerSpec s;
  s.kind = LayerKind::conv;
  s.name = std::move(name);
  s.channels = channels;
  s.kernel = kernel;
  s.stride = stride;
  s.padding = padding;
  return s;
}

LayerSpec LayerSpec::transpose_conv(std::string name, std::size_t channels, std::size_t kernel, std::size_t stride,
                                    std::size_t padding) {
  LayerSpec s = conv(std::move(name), channels, kernel, stride, padding);
  s.kind = LayerKind::transpose_conv;
  return s;
}

LayerSpec LayerSpec::relu(std::string name) {
  LayerSpec s;
  s.kind = LayerKind::relu;
  s.name = std::move(name);
  return s;
}

LayerSpec LayerSpec::flatten(std::string name) {
  LayerSpec s;
  s.kind = LayerKind::flatten;
  s.name = std::move(name);
  return s;
}

LayerSpec LayerSpec::residual_block(std::string name, std::size_t channels, bool upsample) {
  LayerSpec s;
  s.kind = LayerKind::residual_block;
  s.name = std::move(name);
  s.channels = channels;
  s.upsample = upsample;
  return s;
}

LayerSpec LayerSpec::add_skip(std::string name, std::string from) {
  LayerSpec s;
  s.kind = LayerKind::add_skip;
  s.name = std::move(name);
  s.from = std::move(from);
  return s;
}

LayerSpec LayerSpec::reshape(std::string name, Shape target) {
  LayerSpec s;
  s.kind = LayerKind::reshape;
  s.name = std::move(name);
  s.target_shape = std::move(target);
  return s;
}

namespace detail {

namespace {

std::size_t conv_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad, const LayerSpec& spec) {
  const std::size_t padded = in + 2 * pad;
  if (stride == 0 || k == 0 || k > padded || (padded - k) % stride != 0) {
    throw ShapeError("layer '" + spec.name + "': conv output size is not an integer for input extent " +
                     std::to_string(in));
  }
  return (padded - k) / stride + 1;
}

std::size_t tconv_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad, const LayerSpec& spec) {
  const long long out = static_cast<long long>((in - 1) * stride + k) - 2 * static_cast<long long>(pad);
  if (stride == 0 || k == 0 || out <= 0) {
    throw ShapeError("layer '" + spec.name + "': transposed conv output would be empty");
  }
  return static_cast<std::size_t>(out);
}

void require_rank(const LayerSpec& spec, const Shape& in, std::size_t rank) {
  if (in.size() != rank) {
    throw ShapeError("layer '" + spec.name + "' (" + std::string(to_string(spec.kind)) + ") expects a rank-" +
                     std::to_string(rank) + " input, got " + to_string(in));
  }
}

void require_positive(const LayerSpec& spec, std::size_t v, const char* what) {
  if (v == 0) throw ShapeError("layer '" + spec.name + "': " + what + " must be positive");
}

}  // namespace

Shape infer_output_shape(const LayerSpec& spec, const Shape& in, const ShapeLookup& lookup) {
  switch (spec.kind) {
    case LayerKind::dense:
      require_rank(spec, in, 1);
      require_positive(spec, spec.units, "units");
      return {spec.units};
    case LayerKind::conv:
      require_rank(spec, in, 3);
      require_positive(spec, spec.channels, "channels");
      return {spec.channels, conv_extent(in[1], spec.kernel, spec.stride, spec.padding, spec),
              conv_extent(in[2], spec.kernel, spec.stride, spec.padding, spec)};
    case LayerKind::transpose_conv:
      require_rank(spec, in, 3);
      require_positive(spec, spec.channels, "channels");
      return {spec.channels, tconv_extent(in[1], spec.kernel, spec.stride, spec.padding, spec),
              tconv_extent(in[2], spec.kernel, spec.stride, spec.padding, spec)};
    case LayerKind::residual_block:
      require_rank(spec, in, 3);
      require_positive(spec, spec.channels, "channels");
      if (spec.upsample) return {spec.channels, in[1] * 2, in[2] * 2};
      return {spec.channels, in[1], in[2]};
    case LayerKind::relu:
      return in;
    case LayerKind::flatten:
      return {numel(in)};
    case LayerKind::add_skip: {
      const Shape& other = lookup(spec.from);
      if (other != in) {
        throw ShapeError("layer '" + spec.name + "': cannot add '" + spec.from + "' of shape " + to_string(other) +
                         " to " + to_string(in));
      }
      return in;
    }
    case LayerKind::reshape:
      if (spec.target_shape.empty() || numel(spec.target_shape) != numel(in)) {
        throw ShapeError("layer '" + spec.name + "': cannot reshape " + to_string(in) + " to " +
                         to_string(spec.target_shape));
      }
      return spec.target_shape;
  }
  throw ShapeError("layer '" + spec.name + "': unsupported kind");
}

std::vector<ParameterShape> parameter_shapes(const LayerSpec& spec, const Shape& in) {
  const std::size_t k = spec.kernel;
  switch (spec.kind) {
    case LayerKind::dense:
      return {{"weight", {spec.units, in[0]}, in[0]}, {"bias", {spec.units}, 0}};
    case LayerKind::conv:
      return {{"weight", {spec.channels, in[0], k, k}, in[0] * k * k}, {"bias", {spec.channels}, 0}};
    case LayerKind::transpose_conv: {
      const std::size_t overlap = std::max<std::size_t>(1, (k * k) / (spec.stride * spec.stride));
      return {{"weight", {in[0], spec.channels, k, k}, in[0] * overlap}, {"bias", {spec.channels}, 0}};
    }
    case LayerKind::residual_block: {
      const std::size_t cin = in[0], c = spec.channels;
      std::vector<ParameterShape> out;
      if (spec.upsample) {
        out.push_back({"conv1.weight", {cin, c, 2, 2}, cin});
      } else {
        out.push_back({"conv1.weight", {c, cin, 3, 3}, cin * 9});
      }
      out.push_back({"conv1.bias", {c}, 0});
      out.push_back({"conv2.weight", {c, c, 3, 3}, c * 9});
      out.push_back({"conv2.bias", {c}, 0});
      if (spec.upsample) {
        out.push_back({"skip.weight", {cin, c, 2, 2}, cin});
        out.push_back({"skip.bias", {c}, 0});
      } else if (cin != c) {
        out.push_back({"skip.weight", {c, cin, 1, 1}, cin});
        out.push_back({"skip.bias", {c}, 0});
      }
      return out;
    }
    default:
      return {};
  }
}

}  // namespace detail
}  // namespace layerlens
