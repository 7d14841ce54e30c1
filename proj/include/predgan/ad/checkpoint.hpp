#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "predgan/ad/tensor.hpp"

namespace predgan::ad {

/// Named tensors plus free-form string metadata, stored in a versioned
/// binary container. Loading reproduces every tensor bit for bit.
struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  std::map<std::string, Tensor> tensors;
  std::map<std::string, std::string> metadata;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

}  // namespace predgan::ad
