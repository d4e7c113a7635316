// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

// Little-endian packing shared by the raw tensor format and the prior wire protocol.
namespace lavino::bytes {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

inline void put_u32(std::vector<std::uint8_t> &out, std::uint32_t v)
{
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
}

inline void put_u8(std::vector<std::uint8_t> &out, std::uint8_t v) { out.push_back(v); }

inline void put_f32(std::vector<std::uint8_t> &out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

inline void put_string(std::vector<std::uint8_t> &out, std::string const &s)
{
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

inline std::uint32_t get_u32(std::uint8_t const *p)
{
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}

inline float get_f32(std::uint8_t const *p) { return std::bit_cast<float>(get_u32(p)); }

/// Encodes doubles as little-endian float32 payload.
inline void put_f32_array(std::vector<std::uint8_t> &out, std::span<double const> values)
{
  out.reserve(out.size() + 4 * values.size());
  for (double v : values) {
    put_f32(out, static_cast<float>(v));
  }
}

inline void get_f32_array(std::uint8_t const *p, std::span<double> values)
{
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = static_cast<double>(get_f32(p + 4 * i));
  }
}

} // namespace lavino::bytes
