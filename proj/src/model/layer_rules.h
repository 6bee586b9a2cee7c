#pragma once

#include <functional>
#include <string>
#include <vector>

#include "layerlens/model.h"

namespace layerlens::detail {

struct ParameterShape {
  std::string name;
  Shape shape;
  std::size_t fan_in = 0;  // 0 marks a bias (zero-initialized)
};

using ShapeLookup = std::function<const Shape&(std::string_view)>;

/// Output shape of `spec` applied to an unbatched input; throws ShapeError.
Shape infer_output_shape(const LayerSpec& spec, const Shape& in, const ShapeLookup& lookup);
std::vector<ParameterShape> parameter_shapes(const LayerSpec& spec, const Shape& in);

}  // namespace layerlens::detail
