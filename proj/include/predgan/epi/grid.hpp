#pragma once

#include <cstddef>
#include <vector>

namespace predgan::epi {

/// Structured 2-D grid of square control volumes. Cells are numbered
/// row-major with y = 0 the bottom row: index = y * nx + x.
struct Grid {
  std::size_t nx = 0;
  std::size_t ny = 0;
  double cell_size = 0.0;      // metres
  std::vector<int> region;     // region id per cell

  /// 100 km x 100 km town: 5 x 5 regions of 2 x 2 cells each. Region 1 is
  /// never visited; regions 2..10 form a cross, with homes (region 2) in the
  /// bottom-centre block and region 4 at the centre.
  static Grid idealised_town();

  std::size_t n_cells() const { return nx * ny; }
  std::size_t index(std::size_t x, std::size_t y) const { return y * nx + x; }
  std::size_t x_of(std::size_t cell) const { return cell % nx; }
  std::size_t y_of(std::size_t cell) const { return cell / nx; }

  bool is_travel(std::size_t cell) const { return region[cell] >= 2; }
  bool is_home(std::size_t cell) const { return region[cell] == kHomeRegion; }

  std::vector<std::size_t> cells_in_region(int id) const;
  /// Cell with the smallest (y, x) among the region's cells.
  std::size_t bottom_left_cell(int id) const;

  static constexpr int kHomeRegion = 2;
};

}  // namespace predgan::epi
