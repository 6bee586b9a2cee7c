#include "layerlens/rng.h"

#include <cmath>
#include <numbers>
#include <numeric>

#include <boost/math/special_functions/erf.hpp>

#include "layerlens/error.h"

namespace layerlens {

namespace {

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t RngStream::next_u64() {
  const std::uint64_t key = mix64(seed_ + 0x9E3779B97F4A7C15ULL);
  const std::uint64_t value = mix64(key ^ mix64(counter_ * 0x9E3779B97F4A7C15ULL + 0xD1B54A32D192ED03ULL));
  ++counter_;
  return value;
}

double RngStream::uniform() {
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

std::uint64_t RngStream::below(std::uint64_t n) {
  // Rejection keeps the draw unbiased.
  const std::uint64_t limit = n ? (~std::uint64_t{0} - (~std::uint64_t{0} % n)) : 0;
  for (;;) {
    const std::uint64_t v = next_u64();
    if (v < limit) return v % n;
  }
}

RngStream RngStream::derive(std::string_view tag) const {
  return RngStream(mix64(seed_ ^ mix64(fnv1a(tag))), 0);
}

Tensor gaussian(RngStream& rng, const Shape& shape) {
  Tensor out(shape);
  auto data = out.data();
  const std::size_t n = data.size();
  for (std::size_t i = 0; i < n; i += 2) {
    const double u1 = rng.uniform();
    const double u2 = rng.uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    data[i] = r * std::cos(theta);
    if (i + 1 < n) data[i + 1] = r * std::sin(theta);
  }
  return out;
}

Tensor stratified_gaussian(RngStream& rng, std::size_t samples, const Shape& shape) {
  if (samples == 0) throw ShapeError("stratified_gaussian needs at least one sample");
  Shape full{samples};
  full.insert(full.end(), shape.begin(), shape.end());
  Tensor out(full);
  const std::size_t units = numel(shape);
  std::vector<std::size_t> strata(samples);
  for (std::size_t i = 0; i < units; ++i) {
    std::iota(strata.begin(), strata.end(), std::size_t{0});
    for (std::size_t k = samples - 1; k > 0; --k) std::swap(strata[k], strata[rng.below(k + 1)]);
    for (std::size_t k = 0; k < samples; ++k) {
      const double u = (static_cast<double>(strata[k]) + rng.uniform()) / static_cast<double>(samples);
      out[k * units + i] = -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * u);
    }
  }
  return out;
}

Tensor uniform(RngStream& rng, const Shape& shape, double lo, double hi) {
  Tensor out(shape);
  for (auto& v : out.data()) v = rng.uniform(lo, hi);
  return out;
}

}  // namespace layerlens
