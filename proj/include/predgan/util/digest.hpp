#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace predgan {

/// Incremental 64-bit FNV-1a hash used for provenance digests.
class Digest {
 public:
  Digest& update(std::span<const std::byte> bytes);
  Digest& update(std::string_view text);
  Digest& update(double value);
  Digest& update(std::uint64_t value);
  Digest& update(std::span<const double> values);

  std::uint64_t value() const noexcept { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string digest_hex(std::string_view text);

}  // namespace predgan
