#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "layerlens/tensor.h"

namespace layerlens {

// LLTN container: "LLTN", u32 version (1), u32 rank, u64 dims[rank], then the
// row-major f64 payload. All integers and floats little-endian.
inline constexpr std::uint32_t kLltnVersion = 1;

std::vector<char> encode_lltn(const Tensor& t);
Tensor decode_lltn(const std::vector<char>& bytes);

void write_lltn(const std::filesystem::path& path, const Tensor& t);
Tensor read_lltn(const std::filesystem::path& path);

/// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
void write_file_atomic(const std::filesystem::path& path, const std::vector<char>& contents);
std::vector<char> read_file_bytes(const std::filesystem::path& path);

}  // namespace layerlens
