#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "layerlens/error.h"
#include "layerlens/lltn.h"
#include "layerlens/rng.h"

using namespace layerlens;
namespace fs = std::filesystem;

TEST_CASE("gaussian moments over a million draws") {
  RngStream rng(42);
  Tensor g = gaussian(rng, {1000000});
  double m = sum(g) / g.size();
  double var = 0.0;
  for (double v : g.data()) var += (v - m) * (v - m);
  var /= static_cast<double>(g.size() - 1);
  CHECK(std::abs(m) <= 4e-3);
  CHECK(std::abs(var - 1.0) <= 0.01);
}

TEST_CASE("same seed gives bit-identical draws") {
  RngStream a(9), b(9);
  CHECK(gaussian(a, {3, 7}) == gaussian(b, {3, 7}));
  RngStream c(10);
  RngStream d(9);
  CHECK_FALSE(gaussian(c, {8}) == gaussian(d, {8}));
}

TEST_CASE("streams replay from (seed, counter)") {
  RngStream a(5);
  a.next_u64();
  a.next_u64();
  RngStream b(5, a.counter());
  CHECK(a.next_u64() == b.next_u64());
  CHECK(a.derive("x").next_u64() == b.derive("x").next_u64());
  CHECK(a.derive("x").next_u64() != a.derive("y").next_u64());
}

TEST_CASE("uniform and below stay in range") {
  RngStream rng(1);
  for (int i = 0; i < 10000; ++i) {
    double u = rng.uniform();
    CHECK((u > 0.0 && u < 1.0));
    CHECK(rng.below(7) < 7);
  }
}

TEST_CASE("lltn round trip is bit exact") {
  RngStream rng(3);
  Tensor t = gaussian(rng, {2, 3, 4});
  CHECK(decode_lltn(encode_lltn(t)) == t);
  Tensor s = Tensor::scalar(-0.125);
  CHECK(decode_lltn(encode_lltn(s)) == s);
}

TEST_CASE("lltn layout") {
  std::vector<char> bytes = encode_lltn(Tensor::vector({1.0}));
  REQUIRE(bytes.size() == 4 + 4 + 4 + 8 + 8);
  CHECK(std::memcmp(bytes.data(), "LLTN", 4) == 0);
  CHECK(bytes[4] == 1);
  CHECK(bytes[8] == 1);
  CHECK(bytes[12] == 1);
  double v;
  std::memcpy(&v, bytes.data() + 20, 8);
  CHECK(v == 1.0);
}

TEST_CASE("lltn rejects malformed input") {
  std::vector<char> bytes = encode_lltn(Tensor::vector({1, 2, 3}));
  std::vector<char> truncated(bytes.begin(), bytes.end() - 1);
  CHECK_THROWS_AS(decode_lltn(truncated), IoError);
  std::vector<char> bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_lltn(bad), IoError);
  std::vector<char> extra = bytes;
  extra.push_back(0);
  CHECK_THROWS_AS(decode_lltn(extra), IoError);
  std::vector<char> nan = bytes;
  double q = std::nan("");
  std::memcpy(nan.data() + nan.size() - 8, &q, 8);
  CHECK_THROWS_AS(decode_lltn(nan), IoError);
}

TEST_CASE("lltn files") {
  fs::path dir = fs::temp_directory_path() / "layerlens_lltn_test";
  fs::create_directories(dir);
  Tensor t = Tensor::matrix({{1, 2}, {3, 4}});
  write_lltn(dir / "t.lltn", t);
  CHECK(read_lltn(dir / "t.lltn") == t);
  CHECK_FALSE(fs::exists(dir / "t.lltn.tmp"));
  CHECK_THROWS_AS(read_lltn(dir / "missing.lltn"), IoError);
  fs::remove_all(dir);
}
