#pragma once

// Tile index: per-tile mixtures, descriptors, presence bits and an optional
// semantic tree, persisted as a versioned text file (`SEMIDX 1`).

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "semloc/camera_geometry.hpp"
#include "semloc/errors.hpp"
#include "semloc/map_model.hpp"
#include "semloc/matcher.hpp"
#include "semloc/semantic_tree.hpp"
#include "semloc/ssl_descriptor.hpp"
#include "semloc/text_io.hpp"

namespace semloc {

struct IndexConfig {
  double tile_side = 30.0;
  double tile_stride = 15.0;
  PoolingLayout layout;
  std::vector<int> concepts;  // subset of concept ids; empty = all
  bool build_tree = false;
  int branches = 3;
  int leaf_capacity = 8;
  std::uint64_t seed = 1;
};

struct TileIndex {
  std::vector<ConceptLabel> concepts;  // full concept table of the source map
  std::vector<int> selected;           // concept id of each descriptor block
  PoolingLayout layout;
  TileGrid grid;
  std::uint64_t seed = 1;
  std::vector<IndexedTile> tiles;
  std::vector<std::vector<ConceptGmm>> gmms;  // [tile][block]
  std::optional<SemanticTree> tree;

  std::vector<SslDescriptor> descriptors() const {
    std::vector<SslDescriptor> out;
    out.reserve(tiles.size());
    for (const auto& t : tiles) out.push_back(t.descriptor);
    return out;
  }
};

/// Tiles the map and extracts one descriptor at the centre of every tile,
/// sector 0 pointing north.
inline TileIndex build_index(const SemanticMap& map, const IndexConfig& cfg) {
  cfg.layout.validate();
  TileIndex idx;
  idx.concepts = map.concepts;
  idx.layout = cfg.layout;
  idx.seed = cfg.seed;
  if (cfg.concepts.empty()) {
    for (const auto& c : map.concepts) idx.selected.push_back(c.id);
  } else {
    for (int c : cfg.concepts) {
      if (c < 0 || c >= static_cast<int>(map.concepts.size()))
        throw ValidationError("concept filter references unknown concept id " + std::to_string(c));
      if (std::find(idx.selected.begin(), idx.selected.end(), c) == idx.selected.end()) idx.selected.push_back(c);
    }
  }
  idx.grid = make_tile_grid(map.bounds, cfg.tile_side, cfg.tile_stride);
  const std::vector<Tile> tiles = tile_map(map, cfg.tile_side, cfg.tile_stride);

  idx.tiles.resize(tiles.size());
  idx.gmms.resize(tiles.size());
  parallel_for(tiles.size(), [&](std::size_t i) {
    const Tile& t = tiles[i];
    idx.gmms[i] = concept_gmms(t.segments, idx.selected);
    IndexedTile& it = idx.tiles[i];
    it.id = t.id;
    it.center = t.center;
    it.descriptor = extract_descriptor(idx.gmms[i], idx.selected, cfg.layout, t.center, kNorthOrientation);
    it.empty = std::none_of(it.descriptor.presence.begin(), it.descriptor.presence.end(), [](bool b) { return b; });
  });

  if (cfg.build_tree) idx.tree = build_tree(idx.descriptors(), cfg.branches, cfg.leaf_capacity, cfg.seed);
  return idx;
}

/// Index of the tile whose centre is nearest to `p` (ties: smaller id).
inline int nearest_tile(const TileIndex& idx, Point2 p) {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < idx.tiles.size(); ++i) {
    const Point2 d = idx.tiles[i].center - p;
    const double v = d.x * d.x + d.y * d.y;
    if (v < best_d) {
      best_d = v;
      best = static_cast<int>(i);
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Persistence

namespace detail {

inline std::string bits(const PresenceVector& p) {
  std::string s;
  for (bool b : p) s += b ? '1' : '0';
  return s;
}

inline PresenceVector parse_bits(std::string_view s, std::size_t line_no) {
  PresenceVector p;
  for (char c : s) {
    if (c != '0' && c != '1') throw ParseError(line_no, "presence bits must be 0/1");
    p.push_back(c == '1');
  }
  return p;
}

}  // namespace detail

inline std::string write_index(const TileIndex& idx) {
  using text::format_double;
  std::string out = "SEMIDX 1\n";
  const auto& l = idx.layout;
  out += "LAYOUT " + std::to_string(l.n_rings) + ' ' + std::to_string(l.n_sectors) + ' ' + std::string(to_string(l.origin_mode));
  for (double r : l.ring_radii) out += ' ' + format_double(r);
  for (double s : l.sigma) out += ' ' + format_double(s);
  out += '\n';
  out += detail::concept_block(idx.concepts);
  out += "SELECTED " + std::to_string(idx.selected.size());
  for (int c : idx.selected) out += ' ' + std::to_string(c);
  out += '\n';
  const auto& g = idx.grid;
  out += "GRID " + format_double(g.bounds.xmin) + ' ' + format_double(g.bounds.ymin) + ' ' + format_double(g.bounds.xmax) +
         ' ' + format_double(g.bounds.ymax) + ' ' + format_double(g.side) + ' ' + format_double(g.stride) + ' ' +
         std::to_string(g.nx) + ' ' + std::to_string(g.ny) + '\n';
  out += "SEED " + std::to_string(idx.seed) + '\n';
  out += "TILES " + std::to_string(idx.tiles.size()) + '\n';
  for (std::size_t i = 0; i < idx.tiles.size(); ++i) {
    const auto& t = idx.tiles[i];
    out += "TILE " + std::to_string(t.id) + ' ' + format_double(t.center.x) + ' ' + format_double(t.center.y) + ' ' +
           format_double(g.side) + ' ' + (t.empty ? "1" : "0") + '\n';
    for (std::size_t b = 0; b < idx.selected.size(); ++b) {
      const ConceptGmm& gmm = idx.gmms[i][b];
      out += "GMM " + std::to_string(idx.selected[b]) + ' ' + std::to_string(gmm.size());
      for (std::size_t k = 0; k < gmm.size(); ++k) {
        const auto& c = gmm.components[k];
        out += ' ' + format_double(gmm.weights[k]) + ' ' + format_double(c.mean.x()) + ' ' + format_double(c.mean.y()) + ' ' +
               format_double(c.cov(0, 0)) + ' ' + format_double(c.cov(0, 1)) + ' ' + format_double(c.cov(1, 1));
      }
      out += '\n';
    }
    out += "DESC";
    for (double v : t.descriptor.values) out += ' ' + format_double(v);
    out += '\n';
    out += "PRES " + detail::bits(t.descriptor.presence) + '\n';
  }
  if (idx.tree) {
    const auto& tr = *idx.tree;
    out += "TREE " + std::to_string(tr.branches) + ' ' + std::to_string(tr.leaf_capacity) + ' ' +
           std::to_string(tr.nodes.size()) + '\n';
    for (const auto& n : tr.nodes) {
      out += "NODE " + std::to_string(n.id) + ' ' + std::to_string(n.layer) + ' ' + std::to_string(n.parent);
      for (int t : n.tiles) out += ' ' + std::to_string(t);
      out += '\n';
    }
  }
  out += "END\n";
  return out;
}

inline TileIndex parse_index(std::string_view text) {
  text::LineReader in(text);
  auto t = in.expect("'SEMIDX 1' header");
  if (t.size() != 2 || t[0] != "SEMIDX" || t[1] != "1") throw ParseError(in.line_no(), "expected header 'SEMIDX 1'");

  TileIndex idx;
  auto ln = [&] { return in.line_no(); };

  t = in.expect("LAYOUT");
  if (t.size() < 4 || t[0] != "LAYOUT") throw ParseError(ln(), "expected LAYOUT record");
  auto& l = idx.layout;
  l.n_rings = static_cast<int>(text::parse_int(t[1], ln()));
  l.n_sectors = static_cast<int>(text::parse_int(t[2], ln()));
  l.origin_mode = parse_origin_mode(t[3]);
  if (l.n_rings < 1 || t.size() != 4 + 2 * static_cast<std::size_t>(l.n_rings))
    throw ParseError(ln(), "LAYOUT needs one radius and one sigma per ring");
  l.ring_radii.clear();
  l.sigma.clear();
  for (int r = 0; r < l.n_rings; ++r) l.ring_radii.push_back(text::parse_double(t[4 + r], ln()));
  for (int r = 0; r < l.n_rings; ++r) l.sigma.push_back(text::parse_double(t[4 + l.n_rings + r], ln()));
  l.validate();

  idx.concepts = detail::parse_concept_block(in, in.expect("CONCEPTS"));
  validate_concepts(idx.concepts);

  t = in.expect("SELECTED");
  if (t.size() < 2 || t[0] != "SELECTED") throw ParseError(ln(), "expected SELECTED record");
  const auto n_sel = static_cast<std::size_t>(text::parse_int(t[1], ln()));
  if (t.size() != 2 + n_sel) throw ParseError(ln(), "SELECTED count mismatch");
  for (std::size_t i = 0; i < n_sel; ++i) {
    const int c = static_cast<int>(text::parse_int(t[2 + i], ln()));
    if (c < 0 || c >= static_cast<int>(idx.concepts.size())) throw ValidationError("SELECTED references unknown concept");
    idx.selected.push_back(c);
  }

  t = in.expect("GRID");
  if (t.size() != 9 || t[0] != "GRID") throw ParseError(ln(), "expected GRID record");
  auto& g = idx.grid;
  g.bounds = {text::parse_double(t[1], ln()), text::parse_double(t[2], ln()), text::parse_double(t[3], ln()),
              text::parse_double(t[4], ln())};
  g.side = text::parse_double(t[5], ln());
  g.stride = text::parse_double(t[6], ln());
  g.nx = static_cast<int>(text::parse_int(t[7], ln()));
  g.ny = static_cast<int>(text::parse_int(t[8], ln()));

  t = in.expect("SEED");
  if (t.size() != 2 || t[0] != "SEED") throw ParseError(ln(), "expected SEED record");
  idx.seed = static_cast<std::uint64_t>(text::parse_int(t[1], ln()));

  t = in.expect("TILES");
  if (t.size() != 2 || t[0] != "TILES") throw ParseError(ln(), "expected TILES record");
  const auto n_tiles = static_cast<std::size_t>(text::parse_int(t[1], ln()));
  if (n_tiles != static_cast<std::size_t>(g.nx) * static_cast<std::size_t>(g.ny))
    throw ValidationError("tile count does not match the grid");

  const std::size_t cells = static_cast<std::size_t>(l.cells());
  for (std::size_t i = 0; i < n_tiles; ++i) {
    t = in.expect("TILE");
    if (t.size() != 6 || t[0] != "TILE") throw ParseError(ln(), "expected TILE record");
    IndexedTile tile;
    tile.id = static_cast<int>(text::parse_int(t[1], ln()));
    if (tile.id != static_cast<int>(i)) throw ValidationError("tile ids must be consecutive");
    tile.center = {text::parse_double(t[2], ln()), text::parse_double(t[3], ln())};
    tile.empty = text::parse_int(t[5], ln()) != 0;

    std::vector<ConceptGmm> gmms;
    for (std::size_t b = 0; b < idx.selected.size(); ++b) {
      t = in.expect("GMM");
      if (t.size() < 3 || t[0] != "GMM") throw ParseError(ln(), "expected GMM record");
      if (text::parse_int(t[1], ln()) != idx.selected[b]) throw ValidationError("GMM concept order mismatch");
      const auto k = static_cast<std::size_t>(text::parse_int(t[2], ln()));
      if (t.size() != 3 + 6 * k) throw ParseError(ln(), "GMM component count mismatch");
      ConceptGmm gmm;
      for (std::size_t c = 0; c < k; ++c) {
        const std::size_t o = 3 + 6 * c;
        gmm.weights.push_back(text::parse_double(t[o], ln()));
        GaussianComponent gc;
        gc.mean = {text::parse_double(t[o + 1], ln()), text::parse_double(t[o + 2], ln())};
        gc.cov(0, 0) = text::parse_double(t[o + 3], ln());
        gc.cov(0, 1) = gc.cov(1, 0) = text::parse_double(t[o + 4], ln());
        gc.cov(1, 1) = text::parse_double(t[o + 5], ln());
        gmm.components.push_back(gc);
      }
      gmms.push_back(std::move(gmm));
    }

    t = in.expect("DESC");
    if (t.empty() || t[0] != "DESC" || t.size() != 1 + cells * idx.selected.size())
      throw ParseError(ln(), "DESC record has the wrong number of values");
    SslDescriptor& d = tile.descriptor;
    d.concepts = idx.selected;
    d.n_rings = l.n_rings;
    d.n_sectors = l.n_sectors;
    d.origin = tile.center;
    d.orientation = kNorthOrientation;
    for (std::size_t k = 1; k < t.size(); ++k) d.values.push_back(text::parse_double(t[k], ln()));

    t = in.expect("PRES");
    if (t.size() != 2 || t[0] != "PRES") throw ParseError(ln(), "expected PRES record");
    d.presence = detail::parse_bits(t[1], ln());
    if (d.presence.size() != idx.selected.size()) throw ValidationError("presence length mismatch");

    idx.tiles.push_back(std::move(tile));
    idx.gmms.push_back(std::move(gmms));
  }

  t = in.expect("TREE or END");
  if (t[0] == "TREE") {
    if (t.size() != 4) throw ParseError(ln(), "expected 'TREE branches leaf_capacity nodes'");
    SemanticTree tree;
    tree.branches = static_cast<int>(text::parse_int(t[1], ln()));
    tree.leaf_capacity = static_cast<int>(text::parse_int(t[2], ln()));
    const auto n_nodes = static_cast<std::size_t>(text::parse_int(t[3], ln()));
    for (std::size_t i = 0; i < n_nodes; ++i) {
      t = in.expect("NODE");
      if (t.size() < 4 || t[0] != "NODE") throw ParseError(ln(), "expected 'NODE id layer parent tile_ids...'");
      TreeNode node;
      node.id = static_cast<int>(text::parse_int(t[1], ln()));
      node.layer = static_cast<int>(text::parse_int(t[2], ln()));
      node.parent = static_cast<int>(text::parse_int(t[3], ln()));
      if (node.id != static_cast<int>(i)) throw ValidationError("tree node ids must be consecutive");
      for (std::size_t k = 4; k < t.size(); ++k) {
        const auto tile = text::parse_int(t[k], ln());
        if (tile < 0 || static_cast<std::size_t>(tile) >= n_tiles) throw ValidationError("tree node references unknown tile");
        node.tiles.push_back(static_cast<int>(tile));
      }
      if (node.parent >= 0) {
        if (node.parent >= node.id) throw ValidationError("tree parent must precede child");
        tree.nodes[static_cast<std::size_t>(node.parent)].children.push_back(node.id);
      }
      tree.nodes.push_back(std::move(node));
    }
    if (tree.nodes.empty() || tree.tile_count() != n_tiles) throw ValidationError("tree root must hold every tile");
    idx.tree = std::move(tree);
    t = in.expect("END");
  }
  if (t.size() != 1 || t[0] != "END") throw ParseError(ln(), "expected END");
  return idx;
}

/// Debug dump: `DESC tile_id concept ring sector value` and `PRES tile_id bits`.
inline std::string write_descriptor_dump(const TileIndex& idx) {
  std::string out;
  for (const auto& t : idx.tiles) {
    const auto& d = t.descriptor;
    for (std::size_t b = 0; b < d.n_blocks(); ++b)
      for (int r = 0; r < d.n_rings; ++r)
        for (int s = 0; s < d.n_sectors; ++s)
          out += "DESC " + std::to_string(t.id) + ' ' + std::to_string(d.concepts[b]) + ' ' + std::to_string(r) + ' ' +
                 std::to_string(s) + ' ' + text::format_double(d.at(b, r, s)) + '\n';
    out += "PRES " + std::to_string(t.id) + ' ' + detail::bits(d.presence) + '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Query preparation

struct PreparedQuery {
  SslDescriptor descriptor;
  FovMask mask;
  ProjectedQuery projected;
  Point2 origin;  // descriptor origin in the camera ground frame
};

/// Rectifies a query and extracts its descriptor against an index's layout.
/// Camera-centred placement uses the field-of-view mask; image-centred
/// placement puts the origin at the ground point under the image centre and
/// uses every sector.
inline PreparedQuery prepare_query(const QueryFile& q, const TileIndex& idx, OriginMode mode) {
  PreparedQuery out;
  out.projected = project_query_segments(q.camera, q.segments, idx.concepts);
  out.origin = mode == OriginMode::CameraCenter ? Point2{0.0, 0.0} : image_center_ground(q.camera);
  out.descriptor = descriptor_from_segments(out.projected.segments, idx.selected, idx.layout, out.origin, kNorthOrientation);
  out.mask = mode == OriginMode::CameraCenter ? fov_mask(idx.layout, fov_half_angle(q.camera)) : full_mask(idx.layout);
  return out;
}

}  // namespace semloc
