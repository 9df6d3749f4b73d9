#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "bremen/tensor.hpp"

namespace bremen::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in, std::string_view what) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw FormatError("truncated input while reading " + std::string(what));
  }
  return value;
}

inline void put_magic(std::ostream& out, std::string_view magic) {
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

inline void expect_magic(std::istream& in, std::string_view magic) {
  std::string buf(magic.size(), '\0');
  if (!in.read(buf.data(), static_cast<std::streamsize>(buf.size()))) {
    throw FormatError("truncated input: missing '" + std::string(magic) + "' header");
  }
  if (buf != magic) {
    throw FormatError("bad magic: expected '" + std::string(magic) + "'");
  }
}

inline void put_doubles(std::ostream& out, const double* data, std::size_t n) {
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
}

inline void get_doubles(std::istream& in, double* data, std::size_t n, std::string_view what) {
  if (!in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(double)))) {
    throw FormatError("truncated input while reading " + std::string(what));
  }
}

inline void put_string(std::ostream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in, std::string_view what) {
  const auto n = get<std::uint32_t>(in, what);
  if (n > (1u << 20)) throw FormatError("implausible string length in " + std::string(what));
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), n)) {
    throw FormatError("truncated input while reading " + std::string(what));
  }
  return s;
}

}  // namespace bremen::io
