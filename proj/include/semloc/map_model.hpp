#pragma once

// Vector semantic maps: parsing, tiling, and reduction of tile segments to
// per-concept Gaussian mixtures.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "semloc/errors.hpp"
#include "semloc/geometry.hpp"
#include "semloc/parallel.hpp"
#include "semloc/text_io.hpp"

namespace semloc {

/// Smallest admissible covariance eigenvalue, in m^2.
inline constexpr double kCovFloor = 0.01;
/// Side of the square used for point-like objects (lamp posts, signs), in m.
inline constexpr double kPointObjectSide = 0.5;

struct ConceptLabel {
  int id = 0;
  std::string name;
  bool vertical = false;  // stands out of the ground plane
};

/// The seven labels of the reference urban GIS, in their canonical id order.
inline std::vector<ConceptLabel> default_concepts() {
  return {{0, "Road", false},        {1, "Tree", false},           {2, "Building", true},
          {3, "Water", false},       {4, "Lamp Post", true},       {5, "Traffic Signal", true},
          {6, "Traffic Sign", true}};
}

struct Segment {
  int concept_id = 0;
  Polygon polygon;
};

struct SemanticMap {
  std::vector<ConceptLabel> concepts;  // sorted by id, ids dense
  std::vector<Segment> segments;
  Rect bounds;

  const ConceptLabel& concept_by_id(int id) const { return concepts.at(static_cast<std::size_t>(id)); }

  std::optional<int> find_concept(std::string_view name) const {
    for (const auto& c : concepts)
      if (c.name == name) return c.id;
    return std::nullopt;
  }
};

/// Checks the concept table: dense ids, unique names. Sorts by id.
inline void validate_concepts(std::vector<ConceptLabel>& concepts) {
  std::sort(concepts.begin(), concepts.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  std::set<std::string> names;
  for (std::size_t i = 0; i < concepts.size(); ++i) {
    if (concepts[i].id != static_cast<int>(i))
      throw ValidationError("concept ids must be dense 0..k-1 (missing or duplicate id " + std::to_string(i) + ")");
    if (concepts[i].name.empty()) throw ValidationError("concept " + std::to_string(i) + " has an empty name");
    if (!names.insert(concepts[i].name).second) throw ValidationError("duplicate concept name '" + concepts[i].name + "'");
  }
}

namespace detail {

inline Segment parse_seg_line(const std::vector<std::string_view>& t, std::size_t line_no) {
  if (t.size() < 3) throw ParseError(line_no, "SEG needs 'SEG concept_id n x1 y1 ...'");
  Segment seg;
  seg.concept_id = static_cast<int>(text::parse_int(t[1], line_no));
  const long long n = text::parse_int(t[2], line_no);
  if (n < 0 || t.size() != 3 + 2 * static_cast<std::size_t>(n))
    throw ParseError(line_no, "SEG declares " + std::to_string(n) + " vertices but has " +
                                  std::to_string(t.size() - 3) + " coordinates");
  if (n < 3) throw ValidationError("line " + std::to_string(line_no) + ": polygon needs at least 3 vertices");
  seg.polygon.reserve(static_cast<std::size_t>(n));
  for (long long i = 0; i < n; ++i)
    seg.polygon.push_back({text::parse_double(t[3 + 2 * i], line_no), text::parse_double(t[4 + 2 * i], line_no)});
  return seg;
}

inline std::string seg_line(const Segment& s) {
  std::string out = "SEG " + std::to_string(s.concept_id) + ' ' + std::to_string(s.polygon.size());
  for (const auto& p : s.polygon) {
    out += ' ';
    out += text::format_double(p.x);
    out += ' ';
    out += text::format_double(p.y);
  }
  out += '\n';
  return out;
}

inline std::vector<ConceptLabel> parse_concept_block(text::LineReader& in, const std::vector<std::string_view>& head) {
  if (head.size() != 2 || head[0] != "CONCEPTS") throw ParseError(in.line_no(), "expected 'CONCEPTS k'");
  const long long k = text::parse_int(head[1], in.line_no());
  if (k < 0) throw ParseError(in.line_no(), "negative concept count");
  std::vector<ConceptLabel> concepts;
  for (long long i = 0; i < k; ++i) {
    auto t = in.expect("concept declaration");
    if (t.size() < 3) throw ParseError(in.line_no(), "expected 'id name vertical'");
    ConceptLabel c;
    c.id = static_cast<int>(text::parse_int(t[0], in.line_no()));
    c.name = text::join(t, 1, t.size() - 1);
    const auto v = text::parse_int(t.back(), in.line_no());
    if (v != 0 && v != 1) throw ParseError(in.line_no(), "vertical flag must be 0 or 1");
    c.vertical = v == 1;
    concepts.push_back(std::move(c));
  }
  return concepts;
}

inline std::string concept_block(const std::vector<ConceptLabel>& concepts) {
  std::string out = "CONCEPTS " + std::to_string(concepts.size()) + '\n';
  for (const auto& c : concepts) out += std::to_string(c.id) + ' ' + c.name + ' ' + (c.vertical ? "1" : "0") + '\n';
  return out;
}

}  // namespace detail

/// Parses the `SEMMAP 1` text format. Segment order is preserved.
inline SemanticMap parse_map(std::string_view text) {
  text::LineReader in(text);
  auto t = in.expect("'SEMMAP 1' header");
  if (t.size() != 2 || t[0] != "SEMMAP" || t[1] != "1") throw ParseError(in.line_no(), "expected header 'SEMMAP 1'");

  SemanticMap map;
  t = in.expect("BOUNDS");
  if (t.size() != 5 || t[0] != "BOUNDS") throw ParseError(in.line_no(), "expected 'BOUNDS xmin ymin xmax ymax'");
  map.bounds = {text::parse_double(t[1], in.line_no()), text::parse_double(t[2], in.line_no()),
                text::parse_double(t[3], in.line_no()), text::parse_double(t[4], in.line_no())};
  if (!(map.bounds.xmax > map.bounds.xmin && map.bounds.ymax > map.bounds.ymin))
    throw ValidationError("line " + std::to_string(in.line_no()) + ": BOUNDS must have positive extent");

  map.concepts = detail::parse_concept_block(in, in.expect("CONCEPTS"));
  validate_concepts(map.concepts);

  while (in.next(t)) {
    if (t[0] != "SEG") throw ParseError(in.line_no(), "unexpected record '" + std::string(t[0]) + "'");
    Segment seg = detail::parse_seg_line(t, in.line_no());
    if (seg.concept_id < 0 || seg.concept_id >= static_cast<int>(map.concepts.size()))
      throw ValidationError("line " + std::to_string(in.line_no()) + ": undeclared concept id " +
                            std::to_string(seg.concept_id));
    for (const auto& p : seg.polygon)
      if (!map.bounds.contains(p, 1e-9))
        throw ValidationError("line " + std::to_string(in.line_no()) + ": vertex outside declared bounds");
    map.segments.push_back(std::move(seg));
  }
  return map;
}

inline std::string write_map(const SemanticMap& map) {
  std::string out = "SEMMAP 1\n";
  out += "BOUNDS " + text::format_double(map.bounds.xmin) + ' ' + text::format_double(map.bounds.ymin) + ' ' +
         text::format_double(map.bounds.xmax) + ' ' + text::format_double(map.bounds.ymax) + '\n';
  out += detail::concept_block(map.concepts);
  for (const auto& s : map.segments) out += detail::seg_line(s);
  return out;
}

// ---------------------------------------------------------------------------
// Tiling

/// Regular grid of (possibly overlapping) square tiles covering a bounding box.
struct TileGrid {
  Rect bounds;
  double side = 0.0;
  double stride = 0.0;
  int nx = 0;
  int ny = 0;

  int size() const { return nx * ny; }
  int id(int ix, int iy) const { return iy * nx + ix; }
  Point2 center(int ix, int iy) const {
    return {bounds.xmin + 0.5 * side + ix * stride, bounds.ymin + 0.5 * side + iy * stride};
  }
  Point2 center(int id) const { return center(id % nx, id / nx); }
};

/// Tiles per axis: enough tiles at spacing `stride` to cover `extent`.
inline int tiles_per_axis(double extent, double side, double stride) {
  if (extent <= side) return 1;
  return static_cast<int>(std::ceil((extent - side) / stride - 1e-9)) + 1;
}

inline TileGrid make_tile_grid(const Rect& bounds, double side, double stride) {
  if (!(side > 0.0)) throw ParameterError("tile side must be positive");
  if (!(stride > 0.0) || stride > side) throw ParameterError("tile stride must satisfy 0 < stride <= side");
  TileGrid g;
  g.bounds = bounds;
  g.side = side;
  g.stride = stride;
  g.nx = tiles_per_axis(bounds.width(), side, stride);
  g.ny = tiles_per_axis(bounds.height(), side, stride);
  return g;
}

struct Tile {
  int id = 0;
  Point2 center;
  double side = 0.0;
  std::vector<Segment> segments;  // clipped to the tile square
  bool empty = true;

  Rect rect() const {
    const double h = 0.5 * side;
    return {center.x - h, center.y - h, center.x + h, center.y + h};
  }
};

/// Area below which a clipped polygon is treated as a sliver and dropped.
inline constexpr double kSliverArea = 1e-12;

/// Clips every segment to the square; slivers are discarded.
inline std::vector<Segment> clip_segments(std::span<const Segment> segments, const Rect& r) {
  std::vector<Segment> out;
  for (const auto& s : segments) {
    if (s.polygon.empty()) continue;
    double x0 = s.polygon[0].x, x1 = x0, y0 = s.polygon[0].y, y1 = y0;
    for (const auto& p : s.polygon) {
      x0 = std::min(x0, p.x);
      x1 = std::max(x1, p.x);
      y0 = std::min(y0, p.y);
      y1 = std::max(y1, p.y);
    }
    if (x1 <= r.xmin || x0 >= r.xmax || y1 <= r.ymin || y0 >= r.ymax) continue;
    Polygon clipped = clip_to_rect(s.polygon, r);
    if (clipped.size() < 3 || polygon_area(clipped) <= kSliverArea) continue;
    out.push_back({s.concept_id, std::move(clipped)});
  }
  return out;
}

/// Splits the map into a regular grid of overlapping tiles, row-major from
/// the (xmin, ymin) corner. Empty tiles are kept and flagged.
inline std::vector<Tile> tile_map(const SemanticMap& map, double side, double stride) {
  const TileGrid grid = make_tile_grid(map.bounds, side, stride);
  std::vector<Tile> tiles(static_cast<std::size_t>(grid.size()));
  parallel_for(tiles.size(), [&](std::size_t i) {
    Tile& t = tiles[i];
    t.id = static_cast<int>(i);
    t.center = grid.center(t.id);
    t.side = side;
    t.segments = clip_segments(map.segments, t.rect());
    t.empty = t.segments.empty();
  });
  return tiles;
}

// ---------------------------------------------------------------------------
// Gaussian reduction

struct GaussianComponent {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  Eigen::Matrix2d cov = Eigen::Matrix2d::Identity();
};

/// A segment's Gaussian plus its area; `degenerate` marks zero-area input.
struct SegmentGaussian {
  GaussianComponent gaussian;
  double area = 0.0;
  bool degenerate = false;
};

/// Raises every eigenvalue of a symmetric 2x2 matrix to at least `floor`.
inline Eigen::Matrix2d floor_covariance(const Eigen::Matrix2d& cov, double floor = kCovFloor) {
  Eigen::Matrix2d sym = 0.5 * (cov + cov.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(sym);
  Eigen::Vector2d ev = es.eigenvalues();
  if (ev.minCoeff() >= floor) return sym;
  ev = ev.cwiseMax(floor);
  Eigen::Matrix2d out = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

/// Area centroid and second central moments of a simple polygon in closed form
/// (Green's theorem), independent of orientation and starting vertex.
inline SegmentGaussian polygon_gaussian(std::span<const Point2> poly) {
  SegmentGaussian out;
  const std::size_t n = poly.size();
  if (n == 0) throw ParameterError("polygon_gaussian: empty polygon");

  // Work relative to the vertex mean to keep the sums well conditioned.
  Point2 ref{0.0, 0.0};
  for (const auto& p : poly) ref = ref + p;
  ref = (1.0 / static_cast<double>(n)) * ref;

  double a2 = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 p = poly[i] - ref;
    const Point2 q = poly[(i + 1) % n] - ref;
    const double c = p.x * q.y - q.x * p.y;
    a2 += c;
    sx += (p.x + q.x) * c;
    sy += (p.y + q.y) * c;
    sxx += (p.x * p.x + p.x * q.x + q.x * q.x) * c;
    syy += (p.y * p.y + p.y * q.y + q.y * q.y) * c;
    sxy += (p.x * q.y + 2.0 * p.x * p.y + 2.0 * q.x * q.y + q.x * p.y) * c;
  }
  const double area = 0.5 * a2;

  double scale2 = 0.0;  // squared extent, for a relative degeneracy test
  for (const auto& p : poly) scale2 = std::max(scale2, (p.x - ref.x) * (p.x - ref.x) + (p.y - ref.y) * (p.y - ref.y));

  if (std::abs(area) <= 1e-12 * std::max(scale2, 1e-300) || n < 3) {
    out.gaussian.mean = {ref.x, ref.y};
    out.gaussian.cov = kCovFloor * Eigen::Matrix2d::Identity();
    out.area = 0.0;
    out.degenerate = true;
    return out;
  }

  const double cx = sx / (6.0 * area);
  const double cy = sy / (6.0 * area);
  Eigen::Matrix2d cov;
  cov(0, 0) = sxx / (12.0 * area) - cx * cx;
  cov(1, 1) = syy / (12.0 * area) - cy * cy;
  cov(0, 1) = cov(1, 0) = sxy / (24.0 * area) - cx * cy;

  out.gaussian.mean = {ref.x + cx, ref.y + cy};
  out.gaussian.cov = floor_covariance(cov);
  out.area = std::abs(area);
  return out;
}

/// Weighted mixture of the Gaussians of one concept's segments.
struct ConceptGmm {
  std::vector<double> weights;
  std::vector<GaussianComponent> components;

  bool empty() const { return components.empty(); }
  std::size_t size() const { return components.size(); }
};

/// Builds a mixture from segment Gaussians with weights proportional to area.
/// If every component is degenerate the weights fall back to uniform.
inline ConceptGmm gmm_from_segments(std::span<const SegmentGaussian> parts) {
  ConceptGmm gmm;
  double total = 0.0;
  for (const auto& p : parts) total += p.area;
  for (const auto& p : parts) {
    gmm.components.push_back(p.gaussian);
    gmm.weights.push_back(total > 0.0 ? p.area / total : 1.0 / static_cast<double>(parts.size()));
  }
  return gmm;
}

/// Mixture of all segments of `concept_id` in a segment list.
inline ConceptGmm concept_gmm(std::span<const Segment> segments, int concept_id) {
  std::vector<SegmentGaussian> parts;
  for (const auto& s : segments)
    if (s.concept_id == concept_id) parts.push_back(polygon_gaussian(s.polygon));
  return gmm_from_segments(parts);
}

inline ConceptGmm tile_gmm(const Tile& tile, int concept_id) { return concept_gmm(tile.segments, concept_id); }

/// One mixture per requested concept id, in the given order.
inline std::vector<ConceptGmm> concept_gmms(std::span<const Segment> segments, std::span<const int> concept_ids) {
  std::vector<ConceptGmm> out;
  out.reserve(concept_ids.size());
  for (int c : concept_ids) out.push_back(concept_gmm(segments, c));
  return out;
}

}  // namespace semloc
