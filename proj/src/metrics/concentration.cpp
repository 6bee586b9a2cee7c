#include "layerlens/error.h"
#include "layerlens/metrics.h"

namespace layerlens {

Tensor spatial_map(const Tensor& h) {
  switch (h.rank()) {
    case 1:
      return h.reshaped({1, h.size()});
    case 2:
      return h;
    case 3: {
      const std::size_t channels = h.shape()[0], plane = h.shape()[1] * h.shape()[2];
      Tensor out(Shape{h.shape()[1], h.shape()[2]});
      for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t i = 0; i < plane; ++i) out[i] += h[c * plane + i];
      for (double& v : out.data()) v /= static_cast<double>(channels);
      return out;
    }
    default:
      throw ShapeError("spatial_map expects a [C,H,W], [H,W] or [n] tensor, got " + to_string(h.shape()));
  }
}

double concentration(const Tensor& h, const Mask& mask) {
  const Tensor map = spatial_map(h);
  if (map.shape()[0] != mask.height() || map.shape()[1] != mask.width()) {
    throw ShapeError("mask is " + std::to_string(mask.height()) + "x" + std::to_string(mask.width()) +
                     " but the entropy map is " + to_string(map.shape()));
  }
  const std::size_t inside = mask.inside_count();
  if (inside == 0 || inside == map.size()) {
    throw ConfigError("concentration needs a mask with both foreground and background positions");
  }
  double in_sum = 0.0, out_sum = 0.0;
  for (std::size_t i = 0; i < map.size(); ++i) (mask.inside(i) ? in_sum : out_sum) += map[i] - map[0];
  return out_sum / static_cast<double>(map.size() - inside) - in_sum / static_cast<double>(inside);
}

}  // namespace layerlens
