#include "layerlens/dataset.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "layerlens/error.h"
#include "layerlens/lltn.h"
#include "layerlens/rng.h"

namespace layerlens {

namespace {
constexpr std::size_t kCifarPixels = 3 * 32 * 32;
constexpr std::size_t kCifarRecord = 1 + kCifarPixels;

std::vector<std::size_t> permutation(std::size_t n, RngStream& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  return idx;
}
}  // namespace

Shape Dataset::input_shape() const {
  if (inputs.rank() < 2) throw ShapeError("dataset inputs need a batch axis");
  return Shape(inputs.shape().begin() + 1, inputs.shape().end());
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  std::vector<Tensor> xs, ys;
  xs.reserve(indices.size());
  ys.reserve(indices.size());
  Dataset out;
  for (auto i : indices) {
    xs.push_back(slice_batch(inputs, i));
    ys.push_back(slice_batch(targets, i));
    if (!boxes.empty()) out.boxes.push_back(boxes.at(i));
  }
  out.inputs = stack(xs);
  out.targets = stack(ys);
  return out;
}

std::vector<std::size_t> Dataset::labels() const {
  std::vector<std::size_t> out;
  out.reserve(targets.size());
  for (double v : targets.data()) {
    if (v < 0.0 || v != std::floor(v)) throw ConfigError("dataset targets are not class labels");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

std::size_t Dataset::num_classes() const {
  const auto y = labels();
  return y.empty() ? 0 : *std::max_element(y.begin(), y.end()) + 1;
}

Dataset load_cifar10(const std::filesystem::path& path, std::size_t limit) {
  const auto bytes = read_file_bytes(path);
  if (bytes.empty() || bytes.size() % kCifarRecord != 0) {
    throw IoError(path.string() + ": size " + std::to_string(bytes.size()) + " is not a multiple of the " +
                  std::to_string(kCifarRecord) + "-byte CIFAR-10 record");
  }
  std::size_t n = bytes.size() / kCifarRecord;
  if (limit > 0) n = std::min(n, limit);
  std::vector<double> pixels(n * kCifarPixels);
  std::vector<double> labels(n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto* rec = reinterpret_cast<const unsigned char*>(bytes.data()) + r * kCifarRecord;
    if (rec[0] > 9) throw IoError(path.string() + ": label out of range in record " + std::to_string(r));
    labels[r] = rec[0];
    for (std::size_t p = 0; p < kCifarPixels; ++p) pixels[r * kCifarPixels + p] = rec[1 + p] / 255.0;
  }
  Dataset d;
  d.inputs = Tensor(Shape{n, 3, 32, 32}, std::move(pixels));
  d.targets = Tensor(Shape{n}, std::move(labels));
  return d;
}

void write_cifar10(const std::filesystem::path& path, const Dataset& data) {
  if (data.input_shape() != Shape{3, 32, 32}) throw ShapeError("CIFAR-10 records hold 3x32x32 images");
  const auto labels = data.labels();
  std::vector<char> out;
  out.reserve(data.size() * kCifarRecord);
  for (std::size_t r = 0; r < data.size(); ++r) {
    out.push_back(static_cast<char>(labels[r]));
    for (std::size_t p = 0; p < kCifarPixels; ++p) {
      const double v = std::clamp(data.inputs[r * kCifarPixels + p], 0.0, 1.0);
      out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
  }
  write_file_atomic(path, out);
}

Dataset load_lltn_pair(const std::filesystem::path& images, const std::filesystem::path& labels) {
  Dataset d;
  d.inputs = read_lltn(images);
  d.targets = read_lltn(labels);
  if (d.inputs.rank() < 2 || d.targets.rank() < 1 || d.targets.shape()[0] != d.inputs.shape()[0]) {
    throw IoError("LLTN dataset: images " + to_string(d.inputs.shape()) + " and labels " +
                  to_string(d.targets.shape()) + " disagree on sample count");
  }
  return d;
}

Dataset make_blobs(std::size_t per_class, double separation, std::uint64_t seed) {
  RngStream rng(seed);
  const std::size_t n = 2 * per_class;
  Tensor noise = gaussian(rng, Shape{n, 2});
  Dataset d;
  d.inputs = Tensor(Shape{n, 2});
  d.targets = Tensor(Shape{n});
  for (std::size_t i = 0; i < n; ++i) {
    const bool positive = i % 2 == 1;
    d.inputs[2 * i] = noise[2 * i] + (positive ? separation / 2 : -separation / 2);
    d.inputs[2 * i + 1] = noise[2 * i + 1];
    d.targets[i] = positive ? 1.0 : 0.0;
  }
  return d;
}

Dataset make_shapes(std::size_t count, std::size_t size, std::uint64_t seed) {
  if (size < 6) throw ShapeError("make_shapes needs images of at least 6x6");
  RngStream rng(seed);
  Dataset d;
  d.inputs = Tensor(Shape{count, 1, size, size});
  d.targets = Tensor(Shape{count});
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t cls = i % 4;
    // object footprint per class
    const std::size_t w = cls == 1 ? 2 : (cls == 2 ? 3 : 4);
    const std::size_t h = cls == 0 ? 2 : (cls == 2 ? 3 : 4);
    const std::size_t x0 = rng.below(size - w + 1);
    const std::size_t y0 = rng.below(size - h + 1);
    double* img = d.inputs.data().data() + i * size * size;
    for (std::size_t p = 0; p < size * size; ++p) img[p] = 0.1 + 0.05 * (rng.uniform() - 0.5);
    for (std::size_t y = y0; y < y0 + h; ++y)
      for (std::size_t x = x0; x < x0 + w; ++x) {
        const bool edge = y == y0 || y == y0 + h - 1 || x == x0 || x == x0 + w - 1;
        if (cls != 3 || edge) img[y * size + x] = 0.9;
      }
    d.targets[i] = static_cast<double>(cls);
    d.boxes.push_back({x0, y0, w, h});
  }
  return d;
}

std::pair<Dataset, Dataset> split(const Dataset& data, double fraction, std::uint64_t seed) {
  if (fraction <= 0.0 || fraction >= 1.0) throw ConfigError("split fraction must lie in (0, 1)");
  const std::size_t n = data.size();
  const std::size_t held = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(fraction * n)));
  if (held >= n) throw ConfigError("dataset too small to split");
  RngStream rng = RngStream(seed).derive("split");
  const auto idx = permutation(n, rng);
  std::vector<std::size_t> first(idx.begin(), idx.end() - static_cast<std::ptrdiff_t>(held));
  std::vector<std::size_t> second(idx.end() - static_cast<std::ptrdiff_t>(held), idx.end());
  return {data.subset(first), data.subset(second)};
}

}  // namespace layerlens
