#pragma once

#include <cstddef>
#include <vector>

#include "predgan/epi/grid.hpp"
#include "predgan/epi/model.hpp"

namespace predgan::epi {

/// S, E, I, R of both groups on every cell at one time level.
///
/// Storage is the snapshot ordering: group-major (home S, E, I, R, then
/// mobile S, E, I, R), each field holding its cells in grid order.
class StateField {
 public:
  StateField() = default;
  explicit StateField(std::size_t n_cells, double time = 0.0)
      : n_cells_(n_cells), time_(time), values_(kFieldsPerCell * n_cells, 0.0) {}

  std::size_t n_cells() const { return n_cells_; }
  double time() const { return time_; }
  void set_time(double t) { time_ = t; }

  static std::size_t field_index(Group g, Compartment c) {
    return static_cast<std::size_t>(g) * kCompartments + static_cast<std::size_t>(c);
  }
  std::size_t slot(Group g, Compartment c, std::size_t cell) const {
    return field_index(g, c) * n_cells_ + cell;
  }

  double& at(Group g, Compartment c, std::size_t cell) { return values_[slot(g, c, cell)]; }
  double at(Group g, Compartment c, std::size_t cell) const { return values_[slot(g, c, cell)]; }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  double total() const;
  double group_total(Group g) const;
  double compartment_total(Compartment c) const;

 private:
  std::size_t n_cells_ = 0;
  double time_ = 0.0;
  std::vector<double> values_;
};

/// Home-region cells hold `population_per_home_cell` people of the home
/// group, a fraction `exposed_fraction` of them exposed; everything else is 0.
StateField make_initial_field(const Grid& grid, double population_per_home_cell,
                              double exposed_fraction);

}  // namespace predgan::epi
