#include "predgan/epi/state.hpp"

#include "predgan/util/error.hpp"

namespace predgan::epi {

double StateField::total() const {
  double s = 0.0;
  for (double v : values_) s += v;
  return s;
}

double StateField::group_total(Group g) const {
  double s = 0.0;
  for (int c = 0; c < kCompartments; ++c) {
    for (std::size_t cell = 0; cell < n_cells_; ++cell) s += at(g, static_cast<Compartment>(c), cell);
  }
  return s;
}

double StateField::compartment_total(Compartment c) const {
  double s = 0.0;
  for (int g = 0; g < kGroups; ++g) {
    for (std::size_t cell = 0; cell < n_cells_; ++cell) s += at(static_cast<Group>(g), c, cell);
  }
  return s;
}

StateField make_initial_field(const Grid& grid, double population_per_home_cell,
                              double exposed_fraction) {
  if (exposed_fraction < 0.0 || exposed_fraction > 1.0) {
    throw Error("exposed fraction must lie in [0, 1]");
  }
  StateField f(grid.n_cells());
  for (std::size_t cell : grid.cells_in_region(Grid::kHomeRegion)) {
    f.at(Group::Home, Compartment::S, cell) = (1.0 - exposed_fraction) * population_per_home_cell;
    f.at(Group::Home, Compartment::E, cell) = exposed_fraction * population_per_home_cell;
  }
  return f;
}

}  // namespace predgan::epi
