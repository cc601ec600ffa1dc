#pragma once

// Seeded synthetic benchmark: an urban-looking semantic map plus street-level
// queries rendered from known tile centres with controlled corruption
// (centroid jitter, label dropout, spurious segments).

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "semloc/camera_geometry.hpp"
#include "semloc/errors.hpp"
#include "semloc/geometry.hpp"
#include "semloc/map_model.hpp"

namespace semloc {

struct SyntheticSpec {
  double extent_x = 315.0;  // 20 x 20 tiles of 30 m at 15 m stride
  double extent_y = 315.0;
  double tile_side = 30.0;
  double tile_stride = 15.0;

  int roads = 6;
  int buildings = 70;
  int trees = 90;
  int water = 3;
  int lamp_posts = 70;
  int traffic_signals = 15;
  int traffic_signs = 35;

  int queries = 100;
  double jitter_sigma = 2.0;  // m, per-segment centroid displacement
  double dropout = 0.1;       // probability a visible segment is missed
  double spurious = 0.05;     // expected spurious segments per visible segment

  CameraModel camera{1000.0, 800.0, 600.0, 1600.0, 1200.0, kDefaultCameraHeight, 500.0, std::nullopt};
  double view_range = 25.0;  // m, farthest labelled ground point
  int zones = 12;            // land-use cells; 0 = uniform density
  int heading_steps = 0;     // > 0 snaps headings to multiples of 2*pi/heading_steps

  std::uint64_t seed = 1;

  void validate() const {
    if (!(extent_x > 0.0 && extent_y > 0.0)) throw ParameterError("synthetic extent must be positive");
    for (double p : {dropout, spurious})
      if (!(p >= 0.0 && p <= 1.0)) throw ParameterError("synthetic probabilities must lie in [0, 1]");
    if (!(jitter_sigma >= 0.0)) throw ParameterError("jitter sigma must be nonnegative");
    if (zones < 0) throw ParameterError("zone count must be nonnegative");
    if (heading_steps < 0) throw ParameterError("heading steps must be nonnegative");
    if (queries < 0) throw ParameterError("query count must be nonnegative");
    if (!(view_range > 0.0)) throw ParameterError("view range must be positive");
    camera.validate();
  }
};

struct QueryTruth {
  int tile_id = 0;  // tile whose centre is the camera position
  Point2 camera_position;
  double heading = 0.0;  // radians, direction of the optical axis in the map
  std::size_t segments = 0;
  bool empty = false;  // no segment survived (e.g. dropout = 1)
};

struct SyntheticCorpus {
  SemanticMap map;
  std::vector<QueryFile> queries;
  std::vector<QueryTruth> truth;
};

namespace detail {

inline Polygon regular_polygon(Point2 c, double radius, int n, double phase) {
  Polygon p;
  for (int i = 0; i < n; ++i) {
    const double a = phase + 2.0 * std::numbers::pi * i / n;
    p.push_back({c.x + radius * std::cos(a), c.y + radius * std::sin(a)});
  }
  return p;
}

inline Polygon oriented_rect(Point2 c, double w, double h, double angle) {
  Polygon p{{-0.5 * w, -0.5 * h}, {0.5 * w, -0.5 * h}, {0.5 * w, 0.5 * h}, {-0.5 * w, 0.5 * h}};
  for (auto& v : p) v = rotate_point(v, {0.0, 0.0}, angle) + c;
  return p;
}

// Height of a vertical object; stable per segment so every query sees the same value.
inline double object_height(const std::string& concept_name, std::uint64_t seed, std::size_t segment) {
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + segment);
  if (concept_name == "Building") return std::uniform_real_distribution<double>(6.0, 18.0)(rng);
  if (concept_name == "Lamp Post") return 5.0;
  if (concept_name == "Traffic Signal") return 4.5;
  if (concept_name == "Traffic Sign") return 2.5;
  return 3.0;
}

// Land-use classes of the zoned generator. Each row gives relative densities
// for Tree, Building, Water, Lamp Post, Traffic Signal, Traffic Sign.
inline constexpr int kLandUses = 5;
inline constexpr double kLandUseDensity[kLandUses][6] = {
    {0.1, 1.0, 0.0, 1.0, 1.0, 1.0},  // downtown
    {0.6, 0.6, 0.0, 0.3, 0.0, 0.3},  // residential
    {1.0, 0.0, 0.5, 0.3, 0.0, 0.1},  // park
    {0.4, 0.2, 1.0, 0.5, 0.0, 0.0},  // waterfront
    {0.0, 1.0, 0.0, 0.0, 0.2, 0.2},  // industrial
};

struct Zoning {
  std::vector<Point2> sites;
  std::vector<int> use;

  int zone(Point2 p) const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < sites.size(); ++i)
      if ((sites[i] - p).norm2() < (sites[best] - p).norm2()) best = i;
    return use[best];
  }
  // Relative density of concept id 1..6 at p; 1 everywhere without zones.
  double density(Point2 p, int concept_id) const {
    if (sites.empty()) return 1.0;
    return kLandUseDensity[zone(p)][concept_id - 1];
  }
};

}  // namespace detail

/// Random urban layout over the default seven-concept table. With zones > 0
/// the plane is split into Voronoi cells, each with a land use that modulates
/// how often every non-road concept occurs there.
inline SemanticMap synthesize_map(const SyntheticSpec& spec, std::mt19937_64& rng) {
  SemanticMap map;
  map.concepts = default_concepts();
  map.bounds = {0.0, 0.0, spec.extent_x, spec.extent_y};
  const Rect& b = map.bounds;
  std::uniform_real_distribution<double> ux(b.xmin, b.xmax), uy(b.ymin, b.ymax), angle(0.0, std::numbers::pi);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto add = [&](int concept_id, const Polygon& poly) {
    Polygon clipped = clip_to_rect(poly, b);
    if (clipped.size() >= 3 && polygon_area(clipped) > 1e-3) map.segments.push_back({concept_id, std::move(clipped)});
  };

  detail::Zoning zoning;
  for (int i = 0; i < spec.zones; ++i) {
    zoning.sites.push_back({ux(rng), uy(rng)});
    zoning.use.push_back(std::uniform_int_distribution<int>(0, detail::kLandUses - 1)(rng));
  }
  // Rejection step: keep a candidate at p with probability density(p).
  auto keep = [&](Point2 p, int concept_id) { return u01(rng) < zoning.density(p, concept_id); };
  const int max_attempts = 200;

  struct Road {
    Point2 c;
    double a;
  };
  std::vector<Road> roads;
  const double diag = std::hypot(spec.extent_x, spec.extent_y);
  for (int i = 0; i < spec.roads; ++i) {
    Road r{{ux(rng), uy(rng)}, angle(rng)};
    roads.push_back(r);
    add(0, detail::oriented_rect(r.c, 2.0 * diag, 8.0, r.a));
  }
  auto place_free = [&](int concept_id, int count, auto&& shape) {
    for (int placed = 0, attempts = 0; placed < count && attempts < max_attempts * (count + 1); ++attempts) {
      const Point2 c{ux(rng), uy(rng)};
      if (!keep(c, concept_id)) continue;
      add(concept_id, shape(c));
      ++placed;
    }
  };
  place_free(2, spec.buildings, [&](Point2 c) {
    const double w = 8.0 + 12.0 * u01(rng), h = 8.0 + 12.0 * u01(rng);
    return detail::oriented_rect(c, w, h, angle(rng));
  });
  place_free(1, spec.trees, [&](Point2 c) { return detail::regular_polygon(c, 1.5 + 2.5 * u01(rng), 8, angle(rng)); });
  place_free(3, spec.water, [&](Point2 c) {
    const double radius = 10.0 + 15.0 * u01(rng);
    Polygon blob;
    for (int k = 0; k < 14; ++k) {
      const double a = 2.0 * std::numbers::pi * k / 14;
      const double rr = radius * (0.7 + 0.3 * u01(rng));
      blob.push_back({c.x + rr * std::cos(a), c.y + rr * std::sin(a)});
    }
    return blob;
  });

  // Street furniture along the roads.
  auto along_road = [&](double offset) {
    if (roads.empty()) return Point2{ux(rng), uy(rng)};
    const Road& r = roads[std::uniform_int_distribution<std::size_t>(0, roads.size() - 1)(rng)];
    const double t = (u01(rng) - 0.5) * diag;
    const double side = u01(rng) < 0.5 ? -1.0 : 1.0;
    const Point2 dir{std::cos(r.a), std::sin(r.a)};
    const Point2 nrm{-dir.y, dir.x};
    return r.c + t * dir + (side * offset) * nrm;
  };
  auto place_points = [&](int concept_id, int count, double offset) {
    for (int placed = 0, attempts = 0; placed < count && attempts < max_attempts * (count + 1); ++attempts) {
      const Point2 p = along_road(offset);
      if (!b.contains(p, -kPointObjectSide) || !keep(p, concept_id)) continue;
      add(concept_id, square_around(p, kPointObjectSide));
      ++placed;
    }
  };
  place_points(4, spec.lamp_posts, 5.5);
  place_points(5, spec.traffic_signals, 5.0);
  place_points(6, spec.traffic_signs, 6.0);
  return map;
}

/// Camera-frame visibility wedge (x right, z forward), counter-clockwise.
inline Polygon view_wedge(const CameraModel& cam, double range) {
  const double t = cam.width / (2.0 * cam.focal);
  const double near = cam.focal * cam.height_above_ground / (cam.height - 1.0 - cam.horizon_row);
  return {{near * t, near}, {range * t, range}, {-range * t, range}, {-near * t, near}};
}

/// Map point -> camera ground frame for a camera at `pos` looking along `heading`.
inline Point2 to_camera_frame(Point2 p, Point2 pos, double heading) {
  const Point2 d = p - pos;
  const Point2 fwd{std::cos(heading), std::sin(heading)};
  const Point2 right{std::sin(heading), -std::cos(heading)};
  return {d.x * right.x + d.y * right.y, d.x * fwd.x + d.y * fwd.y};
}

/// Camera ground frame -> map.
inline Point2 from_camera_frame(Point2 c, Point2 pos, double heading) {
  const Point2 fwd{std::cos(heading), std::sin(heading)};
  const Point2 right{std::sin(heading), -std::cos(heading)};
  return pos + c.x * right + c.y * fwd;
}

/// Pixel polygon of a camera-frame ground polygon clipped to the view wedge;
/// vertical objects become the silhouette of their extruded footprint.
/// Returns an empty polygon when nothing is visible.
inline Polygon render_segment(const CameraModel& cam, const Polygon& ground, bool vertical, double height, double range) {
  const Polygon wedge = view_wedge(cam, range);
  const Polygon vis = clip_to_convex(ground, wedge);
  if (vis.size() < 3 || polygon_area(vis) < 1e-6) return {};
  std::vector<Point2> px;
  for (const auto& p : vis) {
    const PixelPoint q = image_project(cam, {p.x, p.y});
    px.push_back({q.u, q.v});
  }
  if (!vertical) return px;
  for (const auto& p : vis) {
    const PixelPoint q = image_project_elevated(cam, {p.x, p.y}, height);
    px.push_back({q.u, q.v});
  }
  return convex_hull(std::move(px));
}

inline SyntheticCorpus synthesize(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  SyntheticCorpus corpus;
  corpus.map = synthesize_map(spec, rng);
  const SemanticMap& map = corpus.map;

  // Query sources: tiles holding at least one segment, in seeded random order.
  const TileGrid grid = make_tile_grid(map.bounds, spec.tile_side, spec.tile_stride);
  const std::vector<Tile> tiles = tile_map(map, spec.tile_side, spec.tile_stride);
  std::vector<int> sources;
  for (const auto& t : tiles)
    if (!t.empty) sources.push_back(t.id);
  if (sources.empty() && spec.queries > 0) throw ValidationError("synthetic map has no nonempty tile");
  std::shuffle(sources.begin(), sources.end(), rng);

  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> jitter(0.0, spec.jitter_sigma > 0.0 ? spec.jitter_sigma : 1.0);
  const double t_half = spec.camera.width / (2.0 * spec.camera.focal);
  const Polygon wedge = view_wedge(spec.camera, spec.view_range);
  const double near = wedge[0].y;

  for (int qi = 0; qi < spec.queries; ++qi) {
    const int tile_id = sources[static_cast<std::size_t>(qi) % sources.size()];
    const Point2 pos = grid.center(tile_id);
    double heading = 2.0 * std::numbers::pi * u01(rng);
    if (spec.heading_steps > 0) {
      const double step = 2.0 * std::numbers::pi / spec.heading_steps;
      heading = step * std::floor(heading / step);
    }
    QueryFile q;
    q.camera = spec.camera;

    for (std::size_t si = 0; si < map.segments.size(); ++si) {
      const Segment& seg = map.segments[si];
      Point2 offset{0.0, 0.0};
      if (spec.jitter_sigma > 0.0) offset = {jitter(rng), jitter(rng)};
      Polygon cam_poly;
      for (const auto& p : seg.polygon) cam_poly.push_back(to_camera_frame(p + offset, pos, heading));
      const bool vertical = map.concept_by_id(seg.concept_id).vertical;
      const double h = vertical ? detail::object_height(map.concept_by_id(seg.concept_id).name, spec.seed, si) : 0.0;
      Polygon px = render_segment(spec.camera, cam_poly, vertical, h, spec.view_range);
      if (px.empty()) continue;
      if (u01(rng) < spec.dropout) continue;
      q.segments.push_back({seg.concept_id, std::move(px)});

      if (u01(rng) < spec.spurious) {
        const int c = std::uniform_int_distribution<int>(0, static_cast<int>(map.concepts.size()) - 1)(rng);
        const double z = near + 1.0 + (spec.view_range - near - 1.0) * u01(rng);
        const double x = (2.0 * u01(rng) - 1.0) * 0.9 * z * t_half;
        const bool v = map.concept_by_id(c).vertical;
        const Polygon shape = v ? square_around({x, z}, kPointObjectSide)
                                : detail::regular_polygon({x, z}, 1.0 + 2.0 * u01(rng), 8, 0.0);
        Polygon spx = render_segment(spec.camera, shape, v, 3.0, spec.view_range);
        if (!spx.empty()) q.segments.push_back({c, std::move(spx)});
      }
    }

    QueryTruth truth;
    truth.tile_id = tile_id;
    truth.camera_position = pos;
    truth.heading = heading;
    truth.segments = q.segments.size();
    truth.empty = q.segments.empty();
    corpus.truth.push_back(truth);
    corpus.queries.push_back(std::move(q));
  }
  return corpus;
}

}  // namespace semloc
