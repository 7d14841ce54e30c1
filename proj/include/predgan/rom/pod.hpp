#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace predgan::rom {

/// Proper orthogonal decomposition of a snapshot ensemble: u ~ B alpha + mean.
struct PodBasis {
  static constexpr std::uint32_t kFormatVersion = 1;

  Eigen::MatrixXd modes;            // n_state x n_pod, orthonormal columns
  Eigen::VectorXd mean;             // n_state
  Eigen::VectorXd singular_values;  // every singular value of the centred snapshots
  double state_min = 0.0;           // smallest primitive value seen in the snapshots
  double state_max = 0.0;           // largest primitive value seen in the snapshots
  std::string ensemble_digest;

  std::size_t n_state() const { return static_cast<std::size_t>(modes.rows()); }
  std::size_t n_pod() const { return static_cast<std::size_t>(modes.cols()); }

  /// alpha = B^T (u - mean)
  std::vector<double> project(std::span<const double> u) const;
  /// u = B alpha + mean
  std::vector<double> reconstruct(std::span<const double> alpha) const;

  /// sigma_i^2 / sum_j sigma_j^2 for every singular value.
  std::vector<double> variance_fractions() const;
  /// Fraction of the centred snapshot energy held by the retained modes.
  double captured_variance() const;

  void save(const std::filesystem::path& path) const;
  static PodBasis load(const std::filesystem::path& path);
};

/// Builds the basis from snapshots stored one per row. Throws when the
/// centred snapshot matrix has numerical rank below n_pod.
PodBasis build_basis(const Eigen::MatrixXd& snapshots, std::size_t n_pod);

}  // namespace predgan::rom
