#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "predgan/epi/model.hpp"
#include "predgan/epi/solver.hpp"

namespace predgan::epi {

/// Header of a per-run snapshot file.
struct SnapshotHeader {
  std::uint64_t nx = 0;
  std::uint64_t ny = 0;
  double cell_size = 0.0;
  double dt = 0.0;
  std::uint64_t n_steps = 0;
  std::uint64_t substeps = 0;
  EpiParams params;
  std::string transport_digest;
  std::uint64_t seed = 0;
  std::string config_digest;

  std::uint64_t values_per_level() const { return kFieldsPerCell * nx * ny; }
};

/// Snapshot container: the header followed by n_steps + 1 flattened fields in
/// StateField order. Values are stored as raw doubles and round-trip exactly.
struct SnapshotFile {
  static constexpr std::uint32_t kFormatVersion = 1;

  SnapshotHeader header;
  std::vector<std::vector<double>> levels;

  static SnapshotFile from_trajectory(const Trajectory& traj, SnapshotHeader header);

  void save(const std::filesystem::path& path) const;
  static SnapshotFile load(const std::filesystem::path& path);

  /// Wide CSV: step, day, then one column per field slot
  /// (e.g. home_S_c12 is the home-group susceptibles of cell 12).
  void export_csv(const std::filesystem::path& path) const;

  StateField level_field(std::size_t k) const;
};

std::string slot_name(std::size_t slot, std::size_t n_cells);

}  // namespace predgan::epi
