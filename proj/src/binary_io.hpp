// SPDX-License-Identifier: Apache-2.0
//
// Little-endian primitives shared by the binary formats.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>

namespace avs::detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& out, float f) {
  put_u32(out, std::bit_cast<std::uint32_t>(f));
}

inline std::uint32_t get_u32(std::string_view in, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[offset + i]))
         << (8 * i);
  return v;
}

inline float get_f32(std::string_view in, std::size_t offset) {
  return std::bit_cast<float>(get_u32(in, offset));
}

/// Whole file as bytes; MissingResourceError when it cannot be opened.
std::string read_file(const std::filesystem::path& path);
/// FormatError on any write failure.
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace avs::detail
