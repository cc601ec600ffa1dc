#pragma once

// Ground-plane rectification of a labelled street-level view.
//
// Camera frame on the ground: x to the right, z forward along the heading,
// camera at the origin. Treated as a planar (x, y) = (x, z) frame, which keeps
// the handedness of a north-up map when the camera faces north.

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "semloc/errors.hpp"
#include "semloc/geometry.hpp"
#include "semloc/map_model.hpp"
#include "semloc/text_io.hpp"

namespace semloc {

inline constexpr double kDefaultCameraHeight = 1.7;  // m
/// Rows closer than this to the horizon are clipped before projection.
inline constexpr double kHorizonMargin = 1.0;  // px
/// Fraction of a vertical object's rows (from the bottom) used as its ground contact.
inline constexpr double kContactFraction = 0.1;

struct CameraModel {
  double focal = 1.0;  // px
  double cx = 0.0;
  double cy = 0.0;
  double width = 1.0;  // px
  double height = 1.0;
  double height_above_ground = kDefaultCameraHeight;  // m
  double horizon_row = 0.0;                             // px
  /// Optional pixel -> ground homography; overrides the horizon model when set.
  std::optional<Eigen::Matrix3d> homography;

  void validate() const {
    if (!(focal > 0.0)) throw ValidationError("camera focal length must be positive");
    if (!(width > 0.0 && height > 0.0)) throw ValidationError("camera image size must be positive");
    if (!(height_above_ground > 0.0)) throw ValidationError("camera height must be positive");
    if (!(horizon_row >= 0.0 && horizon_row < height)) throw ValidationError("horizon row must lie in [0, H)");
  }
};

struct GroundPoint {
  double x = 0.0;  // lateral, m
  double z = 0.0;  // forward, m
};

struct PixelPoint {
  double u = 0.0;
  double v = 0.0;
};

/// Inverse perspective mapping of a pixel below the horizon onto the ground.
inline GroundPoint ground_project(const CameraModel& cam, PixelPoint px) {
  if (cam.homography) {
    const Eigen::Vector3d g = *cam.homography * Eigen::Vector3d(px.u, px.v, 1.0);
    if (!(g.z() > 0.0)) throw DomainError("pixel lies on or beyond the horizon of the homography");
    return {g.x() / g.z(), g.y() / g.z()};
  }
  const double dv = px.v - cam.horizon_row;
  if (!(dv > 0.0)) throw DomainError("pixel at or above the horizon has no ground intersection");
  const double d = cam.height_above_ground;
  return {(px.u - cam.cx) * d / dv, cam.focal * d / dv};
}

/// Forward pinhole projection of a ground point (z > 0) into the image.
inline PixelPoint image_project(const CameraModel& cam, GroundPoint g) {
  if (cam.homography) {
    const Eigen::Vector3d p = cam.homography->inverse() * Eigen::Vector3d(g.x, g.z, 1.0);
    return {p.x() / p.z(), p.y() / p.z()};
  }
  if (!(g.z > 0.0)) throw DomainError("ground point behind the camera");
  return {cam.cx + cam.focal * g.x / g.z, cam.horizon_row + cam.focal * cam.height_above_ground / g.z};
}

/// Image position of a point `h` metres above the ground point `g`.
inline PixelPoint image_project_elevated(const CameraModel& cam, GroundPoint g, double h) {
  if (!(g.z > 0.0)) throw DomainError("ground point behind the camera");
  return {cam.cx + cam.focal * g.x / g.z, cam.horizon_row + cam.focal * (cam.height_above_ground - h) / g.z};
}

inline double fov_half_angle(const CameraModel& cam) { return std::atan(cam.width / (2.0 * cam.focal)); }

/// Pixels per metre on the ground plane at unit depth ratio, f/d.
inline double metric_scale(const CameraModel& cam) { return cam.focal / cam.height_above_ground; }

/// Ground position of the image centre: the descriptor origin for image-centred placement.
inline Point2 image_center_ground(const CameraModel& cam) {
  const GroundPoint g = ground_project(cam, {cam.cx, cam.cy});
  return {g.x, g.z};
}

struct ProjectedQuery {
  std::vector<Segment> segments;  // metric, camera-centred planar frame
  std::size_t dropped = 0;        // segments entirely above the horizon
};

namespace detail {

// Keeps the part of a pixel polygon at or below image row `row` (v >= row).
inline Polygon clip_below_row(std::span<const Point2> poly, double row) {
  Polygon p = detail::clip_against(poly, [&](Point2 q) { return q.y - row; }, [&](Point2 q) { return Point2{q.x, row}; });
  return detail::drop_repeats(std::move(p));
}

// Keeps the part of a pixel polygon mapped in front of the homography horizon.
inline Polygon clip_homography_front(std::span<const Point2> poly, const Eigen::Matrix3d& h, double margin) {
  const double a = h(2, 0), b = h(2, 1), c = h(2, 2);
  const double norm = std::hypot(a, b);
  Polygon p = detail::clip_against(poly, [&](Point2 q) { return a * q.x + b * q.y + c - margin * norm; },
                                   [](Point2 q) { return q; });
  return detail::drop_repeats(std::move(p));
}

}  // namespace detail

/// Rectifies labelled pixel segments onto the ground plane.
///
/// Flat concepts: every vertex is projected after clipping at the row
/// horizon + 1 px. Vertical concepts: only the bottom 10% of the polygon's
/// rows is kept, and the convex hull of its ground projection stands in for
/// the object's contact region.
inline ProjectedQuery project_query_segments(const CameraModel& cam, std::span<const Segment> pixel_segments,
                                             std::span<const ConceptLabel> concepts) {
  ProjectedQuery out;
  const double min_row = cam.horizon_row + kHorizonMargin;
  for (const auto& seg : pixel_segments) {
    if (seg.concept_id < 0 || seg.concept_id >= static_cast<int>(concepts.size()))
      throw ValidationError("query segment uses undeclared concept id " + std::to_string(seg.concept_id));
    const bool vertical = concepts[static_cast<std::size_t>(seg.concept_id)].vertical;

    Polygon px = seg.polygon;
    if (vertical && !px.empty()) {
      double top = px.front().y, bottom = px.front().y;
      for (const auto& p : px) {
        top = std::min(top, p.y);
        bottom = std::max(bottom, p.y);
      }
      px = detail::clip_below_row(px, bottom - kContactFraction * (bottom - top));
    }
    px = cam.homography ? detail::clip_homography_front(px, *cam.homography, kHorizonMargin)
                        : detail::clip_below_row(px, min_row);
    if (px.empty()) {
      ++out.dropped;
      continue;
    }

    Polygon ground;
    ground.reserve(px.size());
    for (const auto& p : px) {
      const GroundPoint g = ground_project(cam, {p.x, p.y});
      ground.push_back({g.x, g.z});
    }
    if (vertical) ground = convex_hull(std::move(ground));
    out.segments.push_back({seg.concept_id, std::move(ground)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Query file: SEMQUERY 1 / CAMERA f cx cy W H d y_h / [HOMOGRAPHY h11..h33] / SEG ...

struct QueryFile {
  CameraModel camera;
  std::vector<Segment> segments;  // pixel coordinates
};

inline QueryFile parse_query(std::string_view text) {
  text::LineReader in(text);
  auto t = in.expect("'SEMQUERY 1' header");
  if (t.size() != 2 || t[0] != "SEMQUERY" || t[1] != "1") throw ParseError(in.line_no(), "expected header 'SEMQUERY 1'");
  t = in.expect("CAMERA");
  if (t.size() != 8 || t[0] != "CAMERA") throw ParseError(in.line_no(), "expected 'CAMERA f cx cy W H d y_h'");
  QueryFile q;
  const std::size_t ln = in.line_no();
  q.camera.focal = text::parse_double(t[1], ln);
  q.camera.cx = text::parse_double(t[2], ln);
  q.camera.cy = text::parse_double(t[3], ln);
  q.camera.width = text::parse_double(t[4], ln);
  q.camera.height = text::parse_double(t[5], ln);
  q.camera.height_above_ground = text::parse_double(t[6], ln);
  q.camera.horizon_row = text::parse_double(t[7], ln);
  q.camera.validate();

  while (in.next(t)) {
    if (t[0] == "HOMOGRAPHY") {
      if (t.size() != 10) throw ParseError(in.line_no(), "HOMOGRAPHY needs 9 entries");
      Eigen::Matrix3d h;
      for (int i = 0; i < 9; ++i) h(i / 3, i % 3) = text::parse_double(t[1 + i], in.line_no());
      q.camera.homography = h;
    } else if (t[0] == "SEG") {
      Segment s = detail::parse_seg_line(t, in.line_no());
      if (s.concept_id < 0) throw ValidationError("line " + std::to_string(in.line_no()) + ": negative concept id");
      q.segments.push_back(std::move(s));
    } else {
      throw ParseError(in.line_no(), "unexpected record '" + std::string(t[0]) + "'");
    }
  }
  return q;
}

inline std::string write_query(const QueryFile& q) {
  using text::format_double;
  const auto& c = q.camera;
  std::string out = "SEMQUERY 1\n";
  out += "CAMERA " + format_double(c.focal) + ' ' + format_double(c.cx) + ' ' + format_double(c.cy) + ' ' +
         format_double(c.width) + ' ' + format_double(c.height) + ' ' + format_double(c.height_above_ground) + ' ' +
         format_double(c.horizon_row) + '\n';
  if (c.homography) {
    out += "HOMOGRAPHY";
    for (int i = 0; i < 9; ++i) out += ' ' + format_double((*c.homography)(i / 3, i % 3));
    out += '\n';
  }
  for (const auto& s : q.segments) out += detail::seg_line(s);
  return out;
}

}  // namespace semloc
