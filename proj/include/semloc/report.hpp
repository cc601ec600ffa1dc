#pragma once

// Output formats of the query command: ranked CSV and heat-map PGM.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>

#include "semloc/matcher.hpp"
#include "semloc/text_io.hpp"
#include "semloc/tile_index.hpp"

namespace semloc {

/// `rank,tile_id,distance,shift,x,y`; at most `top_k` rows when top_k > 0.
inline std::string write_ranking_csv(std::span<const MatchResult> ranking, const TileIndex& idx, std::size_t top_k = 0) {
  std::string out = "rank,tile_id,distance,shift,x,y\n";
  for (const auto& r : ranking) {
    if (top_k > 0 && static_cast<std::size_t>(r.rank) > top_k) break;
    const Point2 c = idx.tiles[static_cast<std::size_t>(r.tile_id)].center;
    out += std::to_string(r.rank) + ',' + std::to_string(r.tile_id) + ',' + text::format_double(r.distance) + ',' +
           std::to_string(r.best_shift) + ',' + text::format_double(c.x) + ',' + text::format_double(c.y) + '\n';
  }
  return out;
}

/// Binary PGM (P5) over the tile grid, north up. Heat values are mapped
/// linearly onto 1..255 between their minimum and maximum; unscored tiles are 0.
inline std::string write_heat_pgm(const TileGrid& grid, std::span<const double> heat) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double h : heat)
    if (!std::isnan(h)) {
      lo = std::min(lo, h);
      hi = std::max(hi, h);
    }
  std::string out = "P5\n" + std::to_string(grid.nx) + ' ' + std::to_string(grid.ny) + "\n255\n";
  for (int row = 0; row < grid.ny; ++row) {
    const int iy = grid.ny - 1 - row;
    for (int ix = 0; ix < grid.nx; ++ix) {
      const double h = heat[static_cast<std::size_t>(grid.id(ix, iy))];
      int level = 0;
      if (!std::isnan(h)) level = hi > lo ? 1 + static_cast<int>(std::lround(254.0 * (h - lo) / (hi - lo))) : 255;
      out += static_cast<char>(static_cast<unsigned char>(level));
    }
  }
  return out;
}

}  // namespace semloc
