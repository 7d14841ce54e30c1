#include "predgan/rom/pod.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <fstream>
#include <limits>

#include "predgan/util/binary_io.hpp"
#include "predgan/util/digest.hpp"
#include "predgan/util/error.hpp"

namespace predgan::rom {

namespace {
constexpr const char* kMagic = "PGPOD001";
}

PodBasis build_basis(const Eigen::MatrixXd& snapshots, std::size_t n_pod) {
  const auto n_snap = static_cast<std::size_t>(snapshots.rows());
  if (n_pod == 0) throw Error("build_basis: n_pod must be positive");
  if (n_snap <= n_pod) {
    throw Error("build_basis: need more snapshots (" + std::to_string(n_snap) + ") than modes (" +
                std::to_string(n_pod) + ")");
  }
  PodBasis basis;
  basis.mean = snapshots.colwise().mean().transpose();
  basis.state_min = snapshots.minCoeff();
  basis.state_max = snapshots.maxCoeff();
  Eigen::MatrixXd centred = snapshots.rowwise() - basis.mean.transpose();

  // Right singular vectors of the row-snapshot matrix are the left singular
  // vectors of the column-snapshot matrix, i.e. the spatial modes.
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centred, Eigen::ComputeThinV);
  basis.singular_values = svd.singularValues();

  const double largest = basis.singular_values.size() ? basis.singular_values(0) : 0.0;
  const double tol = static_cast<double>(std::max(centred.rows(), centred.cols())) *
                     std::numeric_limits<double>::epsilon() * largest;
  std::size_t rank = 0;
  for (Eigen::Index i = 0; i < basis.singular_values.size(); ++i) {
    if (basis.singular_values(i) > tol && basis.singular_values(i) > 0.0) ++rank;
  }
  if (rank < n_pod) {
    throw Error("build_basis: centred snapshots have rank " + std::to_string(rank) +
                ", fewer than the " + std::to_string(n_pod) + " requested modes");
  }
  basis.modes = svd.matrixV().leftCols(static_cast<Eigen::Index>(n_pod));

  Digest d;
  d.update(std::span<const double>(snapshots.data(), static_cast<std::size_t>(snapshots.size())));
  basis.ensemble_digest = d.hex();
  return basis;
}

std::vector<double> PodBasis::project(std::span<const double> u) const {
  if (u.size() != n_state()) throw ShapeError("project: state has wrong length");
  Eigen::Map<const Eigen::VectorXd> uv(u.data(), static_cast<Eigen::Index>(u.size()));
  Eigen::VectorXd a = modes.transpose() * (uv - mean);
  return {a.data(), a.data() + a.size()};
}

std::vector<double> PodBasis::reconstruct(std::span<const double> alpha) const {
  if (alpha.size() != n_pod()) throw ShapeError("reconstruct: coefficient vector has wrong length");
  Eigen::Map<const Eigen::VectorXd> av(alpha.data(), static_cast<Eigen::Index>(alpha.size()));
  Eigen::VectorXd u = modes * av + mean;
  return {u.data(), u.data() + u.size()};
}

std::vector<double> PodBasis::variance_fractions() const {
  const double total = singular_values.squaredNorm();
  std::vector<double> out;
  for (Eigen::Index i = 0; i < singular_values.size(); ++i) {
    out.push_back(total > 0 ? singular_values(i) * singular_values(i) / total : 0.0);
  }
  return out;
}

double PodBasis::captured_variance() const {
  const double total = singular_values.squaredNorm();
  if (total == 0.0) return 0.0;
  return singular_values.head(modes.cols()).squaredNorm() / total;
}

void PodBasis::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(kMagic, 8);
  io::write_pod(os, kFormatVersion);
  io::write_pod<std::uint64_t>(os, n_state());
  io::write_pod<std::uint64_t>(os, n_pod());
  io::write_string(os, ensemble_digest);
  io::write_pod(os, state_min);
  io::write_pod(os, state_max);
  io::write_doubles(os, {mean.data(), mean.data() + mean.size()});
  io::write_doubles(os, {singular_values.data(), singular_values.data() + singular_values.size()});
  io::write_doubles(os, {modes.data(), modes.data() + modes.size()});
  if (!os) throw IoError("failed writing " + path.string());
}

PodBasis PodBasis::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open basis file " + path.string());
  io::expect_magic(is, kMagic);
  if (io::read_pod<std::uint32_t>(is) != kFormatVersion) {
    throw IoError("unsupported basis version in " + path.string());
  }
  PodBasis b;
  const auto n_state = static_cast<Eigen::Index>(io::read_pod<std::uint64_t>(is));
  const auto n_pod = static_cast<Eigen::Index>(io::read_pod<std::uint64_t>(is));
  b.ensemble_digest = io::read_string(is);
  b.state_min = io::read_pod<double>(is);
  b.state_max = io::read_pod<double>(is);
  auto mean = io::read_doubles(is);
  auto sv = io::read_doubles(is);
  auto modes = io::read_doubles(is);
  if (static_cast<Eigen::Index>(mean.size()) != n_state ||
      static_cast<Eigen::Index>(modes.size()) != n_state * n_pod) {
    throw IoError("inconsistent basis dimensions in " + path.string());
  }
  b.mean = Eigen::Map<Eigen::VectorXd>(mean.data(), n_state);
  b.singular_values = Eigen::Map<Eigen::VectorXd>(sv.data(), static_cast<Eigen::Index>(sv.size()));
  b.modes = Eigen::Map<Eigen::MatrixXd>(modes.data(), n_state, n_pod);
  return b;
}

}  // namespace predgan::rom
