#pragma once

#include <filesystem>
#include <vector>

namespace layerlens::detail {

struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<unsigned char> pixels;  // row-major
};

/// Binary P5 with maxval 255; comments in the header are skipped.
GrayImage read_pgm(const std::filesystem::path& path);
void write_pgm(const GrayImage& img, const std::filesystem::path& path);

}  // namespace layerlens::detail
