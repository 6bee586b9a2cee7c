#pragma once

#include <cstdint>
#include <string_view>

#include "layerlens/tensor.h"

namespace layerlens {

/// Counter-based random stream: draw k is a pure function of (seed, k), so a
/// stream can be copied to replay exactly the same draws.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0, std::uint64_t counter = 0) : seed_(seed), counter_(counter) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64();
  /// Uniform on the open interval (0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  /// Independent stream keyed by a tag; does not advance this stream.
  RngStream derive(std::string_view tag) const;

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

/// i.i.d. standard normal draws (Box-Muller, two uniforms per pair).
Tensor gaussian(RngStream& rng, const Shape& shape);
/// Latin-hypercube standard normals [samples, shape...]: for every unit the
/// draws fall one per equal-probability stratum, in random order.
Tensor stratified_gaussian(RngStream& rng, std::size_t samples, const Shape& shape);

Tensor uniform(RngStream& rng, const Shape& shape, double lo, double hi);

}  // namespace layerlens
