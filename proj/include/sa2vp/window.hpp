#pragma once

// Window geometry for spatially aligned cross attention: odd-width square
// windows clipped to the grid, and the coordinate map between token grids of
// different scales.

#include <cstdint>
#include <vector>

#include "sa2vp/common.hpp"

namespace sa2vp {

struct GridPos {
  int64_t row = 0;
  int64_t col = 0;
  bool operator==(const GridPos&) const = default;
};

struct WindowSpec {
  GridPos center;
  int width = 1;
  std::vector<GridPos> valid;    // in-bounds positions, row-major
  std::vector<int64_t> linear;   // same positions as row*w + col
};

// Builds the c x c window centered at `center`, clipped to an h x w grid.
// Out-of-bounds positions are excluded outright, so attention later runs only
// over real tokens. Even widths have no center and are rejected.
WindowSpec make_window(int64_t h, int64_t w, GridPos center, int width);

// Maps a query coordinate onto a key/value grid of a different integer scale:
// floor-divide toward a coarser grid, take the block center toward a finer
// one. Grids must be related by an integer factor.
GridPos map_coord(GridPos q, int64_t q_h, int64_t q_w, int64_t kv_h, int64_t kv_w);

struct GridDims {
  int64_t h = 0;
  int64_t w = 0;
  int64_t count() const { return h * w; }
  bool operator==(const GridDims&) const = default;
};

// Window token indices for every query position (row-major), query grid
// mapped onto the kv grid first.
std::vector<std::vector<int64_t>> build_windows(GridDims q, GridDims kv, int width);

}  // namespace sa2vp
