#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "layerlens/model.h"

namespace layerlens {

/// Six weight layers: five 3x3/4x4 convs (two stride-2) and a classifier.
/// Spatial extent must be divisible by 4.
std::vector<LayerSpec> tiny_cnn(const Shape& input, std::size_t classes);

/// Stem conv, `blocks` residual blocks of `channels` channels, a stride-2
/// head conv and a classifier. Residual blocks are named block1..blockN.
std::vector<LayerSpec> tiny_resnet(const Shape& input, std::size_t classes, std::size_t channels = 16,
                                   std::size_t blocks = 3);

/// flatten -> dense(hidden) -> relu -> dense(classes)
std::vector<LayerSpec> mlp(const Shape& input, std::size_t classes, std::size_t hidden = 32);

/// Builds "tiny-cnn", "tiny-resnet" or "mlp".
ModelGraph make_architecture(std::string_view name, const Shape& input, std::size_t classes, std::uint64_t seed);

}  // namespace layerlens
