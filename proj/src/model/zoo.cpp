#include "layerlens/zoo.h"

#include <string>

#include "layerlens/error.h"

namespace layerlens {

namespace {
void require_image(const Shape& input, std::string_view arch, std::size_t divisor) {
  if (input.size() != 3 || input[1] % divisor != 0 || input[2] % divisor != 0) {
    throw ShapeError(std::string(arch) + " expects a C x H x W input with H, W divisible by " +
                     std::to_string(divisor) + ", got " + to_string(input));
  }
}
}  // namespace

std::vector<LayerSpec> tiny_cnn(const Shape& input, std::size_t classes) {
  require_image(input, "tiny-cnn", 4);
  return {
      LayerSpec::conv("conv1", 8, 3, 1, 1),  LayerSpec::relu("relu1"),
      LayerSpec::conv("conv2", 8, 3, 1, 1),  LayerSpec::relu("relu2"),
      LayerSpec::conv("conv3", 16, 4, 2, 1), LayerSpec::relu("relu3"),
      LayerSpec::conv("conv4", 16, 3, 1, 1), LayerSpec::relu("relu4"),
      LayerSpec::conv("conv5", 16, 4, 2, 1), LayerSpec::relu("relu5"),
      LayerSpec::flatten("flatten"),         LayerSpec::dense("fc", classes),
  };
}

std::vector<LayerSpec> tiny_resnet(const Shape& input, std::size_t classes, std::size_t channels,
                                   std::size_t blocks) {
  require_image(input, "tiny-resnet", 2);
  std::vector<LayerSpec> specs{LayerSpec::conv("stem", channels, 3, 1, 1), LayerSpec::relu("stem_relu")};
  for (std::size_t b = 1; b <= blocks; ++b) specs.push_back(LayerSpec::residual_block("block" + std::to_string(b), channels));
  specs.push_back(LayerSpec::conv("head", channels, 4, 2, 1));
  specs.push_back(LayerSpec::relu("head_relu"));
  specs.push_back(LayerSpec::flatten("flatten"));
  specs.push_back(LayerSpec::dense("fc", classes));
  return specs;
}

std::vector<LayerSpec> mlp(const Shape&, std::size_t classes, std::size_t hidden) {
  return {LayerSpec::flatten("flatten"), LayerSpec::dense("fc1", hidden), LayerSpec::relu("relu1"),
          LayerSpec::dense("fc2", classes)};
}

ModelGraph make_architecture(std::string_view name, const Shape& input, std::size_t classes, std::uint64_t seed) {
  if (name == "tiny-cnn") return ModelGraph::build(tiny_cnn(input, classes), input, seed);
  if (name == "tiny-resnet") return ModelGraph::build(tiny_resnet(input, classes), input, seed);
  if (name == "mlp") return ModelGraph::build(mlp(input, classes), input, seed);
  throw ConfigError("unknown architecture '" + std::string(name) + "' (expected tiny-cnn, tiny-resnet or mlp)");
}

}  // namespace layerlens
