#include "layerlens/lltn.h"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "layerlens/error.h"

namespace layerlens {

namespace {

template <class T>
void put_le(std::vector<char>& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.insert(out.end(), bytes, bytes + sizeof(T));
}

template <class T>
T get_le(const std::vector<char>& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw IoError("LLTN: truncated data");
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, in.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  pos += sizeof(T);
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

std::vector<char> encode_lltn(const Tensor& t) {
  std::vector<char> out{'L', 'L', 'T', 'N'};
  out.reserve(16 + 8 * t.rank() + 8 * t.size());
  put_le<std::uint32_t>(out, kLltnVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) put_le<std::uint64_t>(out, d);
  for (double v : t.data()) put_le<double>(out, v);
  return out;
}

Tensor decode_lltn(const std::vector<char>& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "LLTN", 4) != 0) throw IoError("LLTN: bad magic");
  std::size_t pos = 4;
  const auto version = get_le<std::uint32_t>(bytes, pos);
  if (version != kLltnVersion) throw IoError("LLTN: unsupported version " + std::to_string(version));
  const auto rank = get_le<std::uint32_t>(bytes, pos);
  if (rank > 16) throw IoError("LLTN: implausible rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& d : shape) {
    d = get_le<std::uint64_t>(bytes, pos);
    if (d == 0) throw IoError("LLTN: zero dimension");
  }
  const std::size_t n = numel(shape);
  if (bytes.size() - pos != n * sizeof(double)) {
    throw IoError("LLTN: payload holds " + std::to_string(bytes.size() - pos) + " bytes, expected " +
                  std::to_string(n * sizeof(double)));
  }
  std::vector<double> data(n);
  for (auto& v : data) v = get_le<double>(bytes, pos);
  Tensor t(std::move(shape), std::move(data));
  if (!t.all_finite()) throw IoError("LLTN: non-finite payload");
  return t;
}

std::vector<char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_atomic(const std::filesystem::path& path, const std::vector<char>& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  write_file_atomic(path, std::vector<char>(contents.begin(), contents.end()));
}

void write_lltn(const std::filesystem::path& path, const Tensor& t) { write_file_atomic(path, encode_lltn(t)); }

Tensor read_lltn(const std::filesystem::path& path) {
  try {
    return decode_lltn(read_file_bytes(path));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace layerlens
