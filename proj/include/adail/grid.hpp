#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "adail/common.hpp"

namespace adail {

// One evaluation axis over a dynamics parameter. Cell i's center is
// lo + i * (hi - lo) / (cells - 1), so with an odd cell count the range
// midpoint lands exactly on a cell center.
struct Axis {
  std::string name;
  double lo = 0.0;
  double hi = 0.0;
  int cells = 1;

  double center(int i) const {
    if (cells == 1) return 0.5 * (lo + hi);
    return lo + static_cast<double>(i) * (hi - lo) / static_cast<double>(cells - 1);
  }

  // nearest-center cell index for a parameter value
  int index_of(double v) const {
    if (cells == 1) return 0;
    double spacing = (hi - lo) / static_cast<double>(cells - 1);
    int i = static_cast<int>(std::lround((v - lo) / spacing));
    return std::min(std::max(i, 0), cells - 1);
  }
};

struct GridSpec {
  std::vector<Axis> axes;  // 1 or 2

  int dims() const { return static_cast<int>(axes.size()); }

  int total_cells() const {
    int n = 1;
    for (auto& a : axes) n *= a.cells;
    return n;
  }

  // axis 0 varies fastest
  int flat(const std::vector<int>& idx) const {
    int f = 0, stride = 1;
    for (std::size_t d = 0; d < axes.size(); ++d) {
      f += idx[d] * stride;
      stride *= axes[d].cells;
    }
    return f;
  }

  std::vector<int> unflat(int flat_index) const {
    std::vector<int> idx(axes.size());
    for (std::size_t d = 0; d < axes.size(); ++d) {
      idx[d] = flat_index % axes[d].cells;
      flat_index /= axes[d].cells;
    }
    return idx;
  }

  Vec cell_center(int flat_index) const {
    auto idx = unflat(flat_index);
    Vec c(axes.size());
    for (std::size_t d = 0; d < axes.size(); ++d) c(d) = axes[d].center(idx[d]);
    return c;
  }

  std::vector<int> index_of(const Vec& v) const {
    std::vector<int> idx(axes.size());
    for (std::size_t d = 0; d < axes.size(); ++d) idx[d] = axes[d].index_of(v(d));
    return idx;
  }
};

// Cells excluded from training-time environment sampling. Masked cells
// are still evaluated; they are only withheld from the sampling prior.
struct BlackoutMask {
  GridSpec grid;
  std::vector<char> masked;  // grid.total_cells() entries

  bool cell_masked(int flat_index) const { return masked[flat_index] != 0; }

  bool value_masked(const Vec& v) const {
    return cell_masked(grid.flat(grid.index_of(v)));
  }

  bool all_masked() const {
    for (char m : masked)
      if (!m) return false;
    return true;
  }

  int count() const {
    int n = 0;
    for (char m : masked) n += (m != 0);
    return n;
  }
};

// Square region of odd side length centered on a cell; the region must
// fit inside the grid.
inline BlackoutMask blackout_region(const GridSpec& grid, int size,
                                    const std::vector<int>& center) {
  if (size < 1 || size % 2 == 0)
    throw std::invalid_argument("blackout_region: size must be odd and >= 1");
  if (static_cast<int>(center.size()) != grid.dims())
    throw std::invalid_argument("blackout_region: center rank mismatch");
  int h = size / 2;
  for (int d = 0; d < grid.dims(); ++d) {
    if (center[d] - h < 0 || center[d] + h >= grid.axes[d].cells)
      throw std::invalid_argument("blackout_region: region exceeds grid on axis " +
                                  grid.axes[d].name);
  }
  BlackoutMask mask{grid, std::vector<char>(grid.total_cells(), 0)};
  for (int f = 0; f < grid.total_cells(); ++f) {
    auto idx = grid.unflat(f);
    bool inside = true;
    for (int d = 0; d < grid.dims(); ++d)
      if (std::abs(idx[d] - center[d]) > h) inside = false;
    mask.masked[f] = inside ? 1 : 0;
  }
  return mask;
}

}  // namespace adail
