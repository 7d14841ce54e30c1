#include "predgan/epi/grid.hpp"

#include <array>

#include "predgan/util/error.hpp"

namespace predgan::epi {

Grid Grid::idealised_town() {
  // Region blocks, bottom row first.
  constexpr std::array<std::array<int, 5>, 5> blocks{{
      {1, 1, 2, 1, 1},
      {1, 1, 7, 1, 1},
      {3, 8, 4, 9, 5},
      {1, 1, 10, 1, 1},
      {1, 1, 6, 1, 1},
  }};
  Grid g;
  g.nx = 10;
  g.ny = 10;
  g.cell_size = 10'000.0;
  g.region.resize(100);
  for (std::size_t y = 0; y < g.ny; ++y) {
    for (std::size_t x = 0; x < g.nx; ++x) g.region[g.index(x, y)] = blocks[y / 2][x / 2];
  }
  return g;
}

std::vector<std::size_t> Grid::cells_in_region(int id) const {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < n_cells(); ++c) {
    if (region[c] == id) out.push_back(c);
  }
  return out;
}

std::size_t Grid::bottom_left_cell(int id) const {
  // Row-major numbering from the bottom makes the first match the minimal (y, x).
  for (std::size_t c = 0; c < n_cells(); ++c) {
    if (region[c] == id) return c;
  }
  throw Error("grid has no cells in region " + std::to_string(id));
}

}  // namespace predgan::epi
