#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "layerlens/error.h"
#include "layerlens/lltn.h"
#include "layerlens/metrics.h"
#include "pgm.h"

namespace layerlens {

Mask::Mask(std::size_t height, std::size_t width, std::vector<bool> inside)
    : height_(height), width_(width), inside_(std::move(inside)) {
  if (height == 0 || width == 0) throw ShapeError("mask must have positive dimensions");
  if (inside_.size() != height * width) throw ShapeError("mask data does not match its dimensions");
}

Mask Mask::from_box(std::size_t height, std::size_t width, const BoundingBox& box) {
  if (box.w == 0 || box.h == 0 || box.x + box.w > width || box.y + box.h > height) {
    throw ConfigError("bounding box (" + std::to_string(box.x) + "," + std::to_string(box.y) + "," +
                      std::to_string(box.w) + "," + std::to_string(box.h) + ") does not fit a " +
                      std::to_string(height) + "x" + std::to_string(width) + " mask");
  }
  std::vector<bool> inside(height * width, false);
  for (std::size_t r = box.y; r < box.y + box.h; ++r)
    for (std::size_t c = box.x; c < box.x + box.w; ++c) inside[r * width + c] = true;
  return {height, width, std::move(inside)};
}

std::size_t Mask::inside_count() const { return static_cast<std::size_t>(std::count(inside_.begin(), inside_.end(), true)); }

Mask Mask::complement() const {
  std::vector<bool> flipped(inside_.size());
  for (std::size_t i = 0; i < flipped.size(); ++i) flipped[i] = !inside_[i];
  return {height_, width_, std::move(flipped)};
}

Mask read_mask(const std::filesystem::path& path, std::size_t height, std::size_t width) {
  if (path.extension() == ".json") {
    const std::vector<char> bytes = read_file_bytes(path);
    BoundingBox box;
    try {
      const auto j = nlohmann::json::parse(bytes.begin(), bytes.end());
      box = {j.at("x").get<std::size_t>(), j.at("y").get<std::size_t>(), j.at("w").get<std::size_t>(),
             j.at("h").get<std::size_t>()};
    } catch (const nlohmann::json::exception& e) {
      throw IoError("malformed bounding-box mask " + path.string() + ": " + e.what());
    }
    return Mask::from_box(height, width, box);
  }
  const detail::GrayImage img = detail::read_pgm(path);
  if (img.height != height || img.width != width) {
    throw ShapeError("mask " + path.string() + " is " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                     ", expected " + std::to_string(height) + "x" + std::to_string(width));
  }
  std::vector<bool> inside(img.pixels.size());
  for (std::size_t i = 0; i < inside.size(); ++i) inside[i] = img.pixels[i] > 127;
  return {height, width, std::move(inside)};
}

void write_mask_pgm(const Mask& mask, const std::filesystem::path& path) {
  detail::GrayImage img{mask.height(), mask.width(), std::vector<unsigned char>(mask.height() * mask.width())};
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = mask.inside(i) ? 255 : 0;
  detail::write_pgm(img, path);
}

}  // namespace layerlens
