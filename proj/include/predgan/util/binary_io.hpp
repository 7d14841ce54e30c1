#pragma once

// Little helpers for the library's binary containers. All files are written
// in host byte order (little-endian on every supported platform).

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "predgan/util/error.hpp"

namespace predgan::io {

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("unexpected end of file");
  return v;
}

inline void write_string(std::ostream& os, const std::string& s) {
  write_pod<std::uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is) {
  auto n = read_pod<std::uint64_t>(is);
  if (n > (1ULL << 32)) throw IoError("corrupt string length");
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw IoError("unexpected end of file");
  return s;
}

inline void write_doubles(std::ostream& os, const std::vector<double>& v) {
  write_pod<std::uint64_t>(os, v.size());
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(double)));
}

inline std::vector<double> read_doubles(std::istream& is) {
  auto n = read_pod<std::uint64_t>(is);
  if (n > (1ULL << 36)) throw IoError("corrupt array length");
  std::vector<double> v(n);
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw IoError("unexpected end of file");
  return v;
}

inline void expect_magic(std::istream& is, const std::string& magic) {
  std::string got(magic.size(), '\0');
  is.read(got.data(), static_cast<std::streamsize>(got.size()));
  if (!is || got != magic) throw IoError("bad file magic, expected " + magic);
}

}  // namespace predgan::io
