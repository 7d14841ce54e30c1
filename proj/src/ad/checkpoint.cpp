#include "predgan/ad/checkpoint.hpp"

#include <fstream>

#include "predgan/util/binary_io.hpp"

namespace predgan::ad {

namespace {
constexpr const char* kMagic = "PGCKPT01";
}

void Checkpoint::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(kMagic, 8);
  io::write_pod<std::uint32_t>(os, kFormatVersion);
  io::write_pod<std::uint64_t>(os, metadata.size());
  for (const auto& [k, v] : metadata) {
    io::write_string(os, k);
    io::write_string(os, v);
  }
  io::write_pod<std::uint64_t>(os, tensors.size());
  for (const auto& [name, t] : tensors) {
    io::write_string(os, name);
    io::write_pod<std::uint64_t>(os, t.rank());
    for (std::size_t d : t.shape()) io::write_pod<std::uint64_t>(os, d);
    io::write_doubles(os, t.values());
  }
  if (!os) throw IoError("failed writing " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  io::expect_magic(is, kMagic);
  auto version = io::read_pod<std::uint32_t>(is);
  if (version != kFormatVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  auto n_meta = io::read_pod<std::uint64_t>(is);
  for (std::uint64_t i = 0; i < n_meta; ++i) {
    auto k = io::read_string(is);
    ck.metadata[k] = io::read_string(is);
  }
  auto n = io::read_pod<std::uint64_t>(is);
  for (std::uint64_t i = 0; i < n; ++i) {
    auto name = io::read_string(is);
    auto rank = io::read_pod<std::uint64_t>(is);
    if (rank > 16) throw IoError("corrupt tensor rank in " + path.string());
    Shape shape(rank);
    for (auto& d : shape) d = io::read_pod<std::uint64_t>(is);
    ck.tensors.emplace(name, Tensor(std::move(shape), io::read_doubles(is)));
  }
  return ck;
}

}  // namespace predgan::ad
