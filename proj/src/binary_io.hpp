#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>

#include "resdiff/errors.hpp"

namespace resdiff::detail {

inline void put_u64(std::ostream& os, std::uint64_t v) {
  std::array<unsigned char, 8> buf{};
  for (std::size_t i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf.data()), 8);
}

inline std::uint64_t get_u64(std::istream& is) {
  std::array<unsigned char, 8> buf{};
  if (!is.read(reinterpret_cast<char*>(buf.data()), 8)) throw Error(ErrorCode::Io, "truncated binary stream");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | buf[static_cast<std::size_t>(i)];
  return v;
}

inline void put_i64(std::ostream& os, std::int64_t v) { put_u64(os, static_cast<std::uint64_t>(v)); }
inline std::int64_t get_i64(std::istream& is) { return static_cast<std::int64_t>(get_u64(is)); }
inline void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }
inline double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

}  // namespace resdiff::detail
