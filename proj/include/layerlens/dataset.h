#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "layerlens/tensor.h"

namespace layerlens {

/// Foreground rectangle in pixel coordinates (x = column, y = row).
struct BoundingBox {
  std::size_t x = 0, y = 0, w = 0, h = 0;
  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct Dataset {
  Tensor inputs;   ///< [N, ...]
  Tensor targets;  ///< [N] class indices, or [N, ...] regression targets
  std::vector<BoundingBox> boxes;  ///< optional, one per sample

  std::size_t size() const { return inputs.rank() == 0 ? 0 : inputs.shape()[0]; }
  Shape input_shape() const;
  Tensor input(std::size_t i) const { return slice_batch(inputs, i); }
  Dataset subset(std::span<const std::size_t> indices) const;
  /// Targets read as class indices; throws if any is not a non-negative integer.
  std::vector<std::size_t> labels() const;
  std::size_t num_classes() const;
};

/// CIFAR-10 binary batch: records of 1 label byte + 3072 pixel bytes
/// (R, G, B planes, row-major). Pixels are scaled to [0, 1]. `limit` = 0 reads all.
Dataset load_cifar10(const std::filesystem::path& path, std::size_t limit = 0);
void write_cifar10(const std::filesystem::path& path, const Dataset& data);

/// Images tensor [N, ...] plus labels tensor [N].
Dataset load_lltn_pair(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Two Gaussian blobs in 2-D at (+-separation/2, 0), unit variance.
Dataset make_blobs(std::size_t per_class, double separation, std::uint64_t seed);

/// 1 x size x size images with one of four shapes (horizontal bar, vertical
/// bar, filled square, hollow square) at a random position over a noisy
/// background. Boxes hold the object extent.
Dataset make_shapes(std::size_t count, std::size_t size, std::uint64_t seed);

/// Deterministic shuffle then split; second part holds `fraction` of the samples.
std::pair<Dataset, Dataset> split(const Dataset& data, double fraction, std::uint64_t seed);

}  // namespace layerlens
