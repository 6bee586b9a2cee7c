#include <cctype>
#include <cmath>
#include <string>

#include <json.hpp>

#include "layerlens/error.h"
#include "layerlens/lltn.h"
#include "layerlens/metrics.h"
#include "pgm.h"

namespace layerlens {

namespace detail {

namespace {

std::size_t header_number(const std::vector<char>& bytes, std::size_t& pos, const std::string& where) {
  while (pos < bytes.size()) {
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
      ++pos;
    } else {
      break;
    }
  }
  std::size_t value = 0, digits = 0;
  while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
    value = value * 10 + static_cast<std::size_t>(bytes[pos++] - '0');
    ++digits;
  }
  if (digits == 0) throw IoError("malformed PGM header in " + where);
  return value;
}

}  // namespace

GrayImage read_pgm(const std::filesystem::path& path) {
  const std::vector<char> bytes = read_file_bytes(path);
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw IoError(path.string() + " is not a P5 PGM");
  std::size_t pos = 2;
  GrayImage img;
  img.width = header_number(bytes, pos, path.string());
  img.height = header_number(bytes, pos, path.string());
  const std::size_t maxval = header_number(bytes, pos, path.string());
  if (maxval != 255) throw IoError(path.string() + ": only 8-bit PGM (maxval 255) is supported");
  if (img.width == 0 || img.height == 0) throw IoError(path.string() + ": empty image");
  ++pos;  // single whitespace after maxval
  if (bytes.size() != pos + img.width * img.height) throw IoError(path.string() + ": pixel data size mismatch");
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  return img;
}

void write_pgm(const GrayImage& img, const std::filesystem::path& path) {
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.append(img.pixels.begin(), img.pixels.end());
  write_file_atomic(path, out);
}

}  // namespace detail

namespace {

std::filesystem::path sidecar(const std::filesystem::path& path) {
  return path.parent_path() / (path.filename().string() + ".json");
}

}  // namespace

HeatmapBounds export_heatmap(const Tensor& h, const std::filesystem::path& path) {
  const Tensor map = spatial_map(h);
  HeatmapBounds b{min_value(map), max_value(map), map.shape()[1], map.shape()[0]};
  detail::GrayImage img{b.height, b.width, std::vector<unsigned char>(map.size(), 128)};
  if (b.max > b.min) {
    for (std::size_t i = 0; i < map.size(); ++i) {
      img.pixels[i] = static_cast<unsigned char>(std::lround(255.0 * (map[i] - b.min) / (b.max - b.min)));
    }
  }
  detail::write_pgm(img, path);
  nlohmann::json j{{"min", b.min}, {"max", b.max}, {"width", b.width}, {"height", b.height}};
  write_file_atomic(sidecar(path), j.dump(2) + "\n");
  return b;
}

Tensor read_heatmap(const std::filesystem::path& path) {
  const detail::GrayImage img = detail::read_pgm(path);
  const std::vector<char> bytes = read_file_bytes(sidecar(path));
  double lo = 0.0, hi = 0.0;
  try {
    const auto j = nlohmann::json::parse(bytes.begin(), bytes.end());
    lo = j.at("min").get<double>();
    hi = j.at("max").get<double>();
    if (j.at("width").get<std::size_t>() != img.width || j.at("height").get<std::size_t>() != img.height) {
      throw IoError("heatmap sidecar dimensions disagree with " + path.string());
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed heatmap sidecar for " + path.string() + ": " + e.what());
  }
  Tensor map(Shape{img.height, img.width}, lo);
  if (hi > lo) {
    for (std::size_t i = 0; i < map.size(); ++i) map[i] = lo + (hi - lo) * img.pixels[i] / 255.0;
  }
  return map;
}

}  // namespace layerlens
