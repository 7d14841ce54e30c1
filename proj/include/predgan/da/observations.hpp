#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "predgan/epi/grid.hpp"
#include "predgan/epi/model.hpp"
#include "predgan/rom/normalization.hpp"
#include "predgan/rom/pod.hpp"

namespace predgan::da {

/// One observed value. `group` unset means the sum over both groups.
struct Observation {
  std::size_t level = 0;
  std::size_t cell = 0;
  std::optional<epi::Group> group;
  epi::Compartment compartment = epi::Compartment::I;
  double value = 0.0;
  double weight = 1.0;
};

class ObservationSet {
 public:
  ObservationSet() = default;
  /// Throws on negative weights, an empty set, cells outside the grid or a
  /// repeated (level, cell, group, compartment).
  ObservationSet(std::vector<Observation> entries, std::size_t n_cells);

  const std::vector<Observation>& entries() const { return entries_; }
  std::size_t n_cells() const { return n_cells_; }
  std::size_t size() const { return entries_.size(); }
  /// Largest observed level plus one.
  std::size_t level_count() const;

  /// State-vector slots whose sum the observation measures.
  std::vector<std::size_t> slots(const Observation& o) const;

  /// Sum of weights of observations with level in [begin, end).
  double weight_sum(std::size_t begin, std::size_t end) const;

  /// CSV columns time_level, cell_x, cell_y, group, compartment, value, weight.
  /// group is home, mobile or all; compartment is S, E, I or R.
  static ObservationSet read_csv(const std::filesystem::path& path, const epi::Grid& grid);
  void write_csv(const std::filesystem::path& path, const epi::Grid& grid) const;

 private:
  std::vector<Observation> entries_;
  std::size_t n_cells_ = 0;
};

/// What to measure at each observed level.
struct ObservationPlan {
  std::vector<std::size_t> levels;
  std::vector<std::size_t> cells;
  std::vector<std::optional<epi::Group>> groups;  // unset = sum over groups
  std::vector<epi::Compartment> compartments;
  double weight = 1.0;
};

/// Samples `plan` from physical state vectors (one per level), then applies
/// multiplicative noise u * (1 + noise * N(0, 1)) clamped at zero.
ObservationSet sample_observations(std::span<const std::vector<double>> states,
                                   std::size_t n_cells, const ObservationPlan& plan,
                                   double noise, std::mt19937_64& rng);

/// Observations as linear functionals of normalized POD coefficients:
/// predicted value = row . alpha + offset.
class ObservationOperator {
 public:
  struct Row {
    std::size_t level;
    std::vector<double> coeff;
    double offset;
    double value;
    double weight;
  };

  ObservationOperator() = default;
  /// `normalizer` maps physical coefficients to normalized ones on its first
  /// basis.n_pod() channels.
  ObservationOperator(const ObservationSet& obs, const rom::PodBasis& basis,
                      const rom::Normalizer& normalizer);

  std::size_t n_alpha() const { return n_alpha_; }
  const std::vector<Row>& rows() const { return rows_; }
  /// Rows observed at level k.
  std::span<const std::size_t> at_level(std::size_t k) const;
  double weight_sum(std::size_t begin, std::size_t end) const;
  double total_weight() const;

  double predict(const Row& row, std::span<const double> alpha) const;

 private:
  std::size_t n_alpha_ = 0;
  std::vector<Row> rows_;
  std::vector<std::vector<std::size_t>> by_level_;
};

/// Sum of squared residuals and the number of observed slots (weight > 0)
/// of a normalized trajectory.
struct Mismatch {
  double sum = 0.0;
  std::size_t count = 0;
  double average() const { return count ? sum / static_cast<double>(count) : 0.0; }
  Mismatch& operator+=(const Mismatch& o) {
    sum += o.sum;
    count += o.count;
    return *this;
  }
};

Mismatch trajectory_mismatch(const ObservationOperator& op,
                             const std::vector<std::vector<double>>& alpha);

}  // namespace predgan::da
