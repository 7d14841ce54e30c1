#include "predgan/epi/snapshot_io.hpp"

#include <fstream>
#include <iomanip>

#include "predgan/util/binary_io.hpp"

namespace predgan::epi {

namespace {
constexpr const char* kMagic = "PGSNAP01";
}

std::string slot_name(std::size_t slot, std::size_t n_cells) {
  const std::size_t field = slot / n_cells;
  const std::size_t cell = slot % n_cells;
  return std::string(group_name(static_cast<Group>(field / kCompartments))) + "_" +
         compartment_name(static_cast<Compartment>(field % kCompartments)) + "_c" +
         std::to_string(cell);
}

SnapshotFile SnapshotFile::from_trajectory(const Trajectory& traj, SnapshotHeader header) {
  SnapshotFile f;
  header.dt = traj.dt;
  header.n_steps = traj.levels.empty() ? 0 : traj.levels.size() - 1;
  f.header = std::move(header);
  for (const auto& level : traj.levels) f.levels.push_back(level.values());
  return f;
}

void SnapshotFile::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  const auto& h = header;
  os.write(kMagic, 8);
  io::write_pod(os, kFormatVersion);
  io::write_pod(os, h.nx);
  io::write_pod(os, h.ny);
  io::write_pod(os, h.cell_size);
  io::write_pod(os, h.dt);
  io::write_pod(os, h.n_steps);
  io::write_pod(os, h.substeps);
  for (double v : {h.params.eta, h.params.nu, h.params.sigma, h.params.gamma, h.params.xi,
                   h.params.r0_home, h.params.r0_mobile}) {
    io::write_pod(os, v);
  }
  io::write_string(os, h.transport_digest);
  io::write_pod(os, h.seed);
  io::write_string(os, h.config_digest);
  io::write_pod<std::uint64_t>(os, levels.size());
  for (const auto& level : levels) {
    if (level.size() != h.values_per_level()) throw IoError("snapshot level has wrong length");
    os.write(reinterpret_cast<const char*>(level.data()),
             static_cast<std::streamsize>(level.size() * sizeof(double)));
  }
  if (!os) throw IoError("failed writing " + path.string());
}

SnapshotFile SnapshotFile::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open snapshot file " + path.string());
  io::expect_magic(is, kMagic);
  if (io::read_pod<std::uint32_t>(is) != kFormatVersion) {
    throw IoError("unsupported snapshot version in " + path.string());
  }
  SnapshotFile f;
  auto& h = f.header;
  h.nx = io::read_pod<std::uint64_t>(is);
  h.ny = io::read_pod<std::uint64_t>(is);
  h.cell_size = io::read_pod<double>(is);
  h.dt = io::read_pod<double>(is);
  h.n_steps = io::read_pod<std::uint64_t>(is);
  h.substeps = io::read_pod<std::uint64_t>(is);
  for (double* v : {&h.params.eta, &h.params.nu, &h.params.sigma, &h.params.gamma, &h.params.xi,
                    &h.params.r0_home, &h.params.r0_mobile}) {
    *v = io::read_pod<double>(is);
  }
  h.transport_digest = io::read_string(is);
  h.seed = io::read_pod<std::uint64_t>(is);
  h.config_digest = io::read_string(is);
  const auto n_levels = io::read_pod<std::uint64_t>(is);
  if (n_levels > 10'000'000) throw IoError("corrupt level count in " + path.string());
  f.levels.assign(n_levels, std::vector<double>(h.values_per_level()));
  for (auto& level : f.levels) {
    is.read(reinterpret_cast<char*>(level.data()),
            static_cast<std::streamsize>(level.size() * sizeof(double)));
    if (!is) throw IoError("truncated snapshot file " + path.string());
  }
  return f;
}

void SnapshotFile::export_csv(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  const std::size_t n_cells = header.nx * header.ny;
  os << "step,day";
  for (std::size_t s = 0; s < header.values_per_level(); ++s) os << ',' << slot_name(s, n_cells);
  os << '\n' << std::setprecision(17);
  for (std::size_t k = 0; k < levels.size(); ++k) {
    os << k << ',' << static_cast<double>(k) * header.dt / kSecondsPerDay;
    for (double v : levels[k]) os << ',' << v;
    os << '\n';
  }
}

StateField SnapshotFile::level_field(std::size_t k) const {
  StateField f(header.nx * header.ny, static_cast<double>(k) * header.dt);
  f.values() = levels.at(k);
  return f;
}

}  // namespace predgan::epi
