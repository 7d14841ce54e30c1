#include "predgan/util/digest.hpp"

#include <cstdio>

namespace predgan {

Digest& Digest::update(std::span<const std::byte> bytes) {
  for (std::byte b : bytes) {
    state_ ^= static_cast<std::uint64_t>(b);
    state_ *= 0x100000001b3ULL;
  }
  return *this;
}

Digest& Digest::update(std::string_view text) {
  return update(std::as_bytes(std::span(text.data(), text.size())));
}

Digest& Digest::update(double value) {
  return update(std::as_bytes(std::span(&value, 1)));
}

Digest& Digest::update(std::uint64_t value) {
  return update(std::as_bytes(std::span(&value, 1)));
}

Digest& Digest::update(std::span<const double> values) {
  return update(std::as_bytes(values));
}

std::string Digest::hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(state_));
  return buf;
}

std::string digest_hex(std::string_view text) { return Digest{}.update(text).hex(); }

}  // namespace predgan
