#pragma once

// Semantic Segment Layout descriptor.
//
// Pooling regions are isotropic Gaussians on one or more rings around the
// descriptor origin. For every concept the segments form a Gaussian mixture,
// and each (ring, sector) entry is the Hellinger distance derived from the
// mixture-to-pooling-region Bhattacharyya distance. Each concept block is
// L2-normalised on its own; absent concepts contribute an all-zero block.

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "semloc/errors.hpp"
#include "semloc/geometry.hpp"
#include "semloc/map_model.hpp"

namespace semloc {

enum class OriginMode { ImageCenter, CameraCenter };

inline std::string_view to_string(OriginMode m) { return m == OriginMode::ImageCenter ? "ci" : "cc"; }

inline OriginMode parse_origin_mode(std::string_view s) {
  if (s == "ci" || s == "CI") return OriginMode::ImageCenter;
  if (s == "cc" || s == "CC") return OriginMode::CameraCenter;
  throw ParameterError("origin mode must be 'ci' or 'cc', got '" + std::string(s) + "'");
}

/// Sector 0 pointing to +y (north in the map, forward in the camera frame).
inline constexpr double kNorthOrientation = std::numbers::pi / 2.0;

struct PoolingLayout {
  int n_rings = 1;
  int n_sectors = 8;
  std::vector<double> ring_radii{15.0};  // m
  std::vector<double> sigma{7.5};        // m, isotropic std per ring
  OriginMode origin_mode = OriginMode::CameraCenter;

  int cells() const { return n_rings * n_sectors; }

  void validate() const {
    if (n_rings < 1) throw ParameterError("layout needs at least one ring");
    if (n_sectors < 2) throw ParameterError("layout needs at least two sectors");
    if (ring_radii.size() != static_cast<std::size_t>(n_rings) || sigma.size() != static_cast<std::size_t>(n_rings))
      throw ParameterError("layout needs one radius and one sigma per ring");
    for (int r = 0; r < n_rings; ++r) {
      if (!(sigma[r] > 0.0)) throw ParameterError("pooling sigma must be positive");
      if (!(ring_radii[r] >= 0.0)) throw ParameterError("ring radius must be nonnegative");
      if (r > 0 && !(ring_radii[r] > ring_radii[r - 1])) throw ParameterError("ring radii must increase strictly");
    }
  }

  /// Same pooling geometry (origin mode is a query-side choice and is ignored).
  bool same_geometry(const PoolingLayout& o) const {
    return n_rings == o.n_rings && n_sectors == o.n_sectors && ring_radii == o.ring_radii && sigma == o.sigma;
  }
};

inline GaussianComponent pooling_gaussian(const PoolingLayout& layout, int ring, int sector, Point2 origin,
                                          double orientation) {
  if (ring < 0 || ring >= layout.n_rings || sector < 0 || sector >= layout.n_sectors)
    throw ParameterError("pooling region index out of range");
  const double theta = orientation + 2.0 * std::numbers::pi * sector / layout.n_sectors;
  const double r = layout.ring_radii[static_cast<std::size_t>(ring)];
  const double s = layout.sigma[static_cast<std::size_t>(ring)];
  GaussianComponent g;
  g.mean = {origin.x + r * std::cos(theta), origin.y + r * std::sin(theta)};
  g.cov = s * s * Eigen::Matrix2d::Identity();
  return g;
}

namespace detail {

inline void require_spd(const Eigen::Matrix2d& c) {
  if (!(c(0, 0) > 0.0) || !(c(0, 0) * c(1, 1) - c(0, 1) * c(1, 0) > 0.0) || std::abs(c(0, 1) - c(1, 0)) > 1e-9 * std::abs(c(0, 0) + c(1, 1)))
    throw DomainError("covariance is not symmetric positive definite");
}

inline double det2(const Eigen::Matrix2d& m) { return m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0); }

}  // namespace detail

/// Closed-form Bhattacharyya distance between two 2-D Gaussians.
inline double bhattacharyya_gauss(const GaussianComponent& a, const GaussianComponent& b) {
  detail::require_spd(a.cov);
  detail::require_spd(b.cov);
  const Eigen::Matrix2d avg = 0.5 * (a.cov + b.cov);
  const double det_avg = detail::det2(avg);
  const Eigen::Vector2d diff = a.mean - b.mean;
  // avg^-1 via the adjugate.
  const double quad = (avg(1, 1) * diff.x() * diff.x() - (avg(0, 1) + avg(1, 0)) * diff.x() * diff.y() +
                       avg(0, 0) * diff.y() * diff.y()) /
                      det_avg;
  const double log_term = 0.5 * std::log(det_avg / std::sqrt(detail::det2(a.cov) * detail::det2(b.cov)));
  return std::max(0.0, 0.125 * quad + log_term);
}

/// Weighted-sum approximation of the mixture-to-Gaussian Bhattacharyya
/// distance. Returns nullopt for an empty mixture (concept absent).
inline std::optional<double> bhattacharyya_gmm(const ConceptGmm& gmm, const GaussianComponent& pool) {
  if (gmm.empty()) return std::nullopt;
  double acc = 0.0;
  for (std::size_t i = 0; i < gmm.size(); ++i) acc += gmm.weights[i] * bhattacharyya_gauss(gmm.components[i], pool);
  return acc;
}

/// sqrt(1 - exp(-d_B)).
inline double hellinger(double d_b) {
  if (!(d_b >= 0.0)) throw DomainError("Bhattacharyya distance must be nonnegative");
  return std::sqrt(-std::expm1(-d_b));
}

using PresenceVector = std::vector<bool>;

struct SslDescriptor {
  std::vector<int> concepts;  // concept id of each block
  int n_rings = 1;
  int n_sectors = 8;
  std::vector<double> values;  // [block][ring][sector]
  PresenceVector presence;     // per block
  Point2 origin;
  double orientation = 0.0;

  int block_size() const { return n_rings * n_sectors; }
  std::size_t n_blocks() const { return concepts.size(); }
  std::size_t index(std::size_t block, int ring, int sector) const {
    return (block * static_cast<std::size_t>(n_rings) + static_cast<std::size_t>(ring)) * static_cast<std::size_t>(n_sectors) +
           static_cast<std::size_t>(sector);
  }
  double at(std::size_t block, int ring, int sector) const { return values[index(block, ring, sector)]; }
  std::span<const double> block(std::size_t b) const {
    return std::span<const double>(values).subspan(b * static_cast<std::size_t>(block_size()),
                                                   static_cast<std::size_t>(block_size()));
  }

  bool same_shape(const SslDescriptor& o) const {
    return concepts == o.concepts && n_rings == o.n_rings && n_sectors == o.n_sectors;
  }
};

inline PresenceVector presence_vector(std::span<const ConceptGmm> gmms) {
  PresenceVector p(gmms.size());
  for (std::size_t i = 0; i < gmms.size(); ++i) p[i] = !gmms[i].empty();
  return p;
}

/// Descriptor from per-concept mixtures (`gmms[i]` belongs to `concept_ids[i]`).
inline SslDescriptor extract_descriptor(std::span<const ConceptGmm> gmms, std::span<const int> concept_ids,
                                        const PoolingLayout& layout, Point2 origin, double orientation) {
  layout.validate();
  if (gmms.size() != concept_ids.size()) throw ContractError("one mixture per concept id required");
  SslDescriptor d;
  d.concepts.assign(concept_ids.begin(), concept_ids.end());
  d.n_rings = layout.n_rings;
  d.n_sectors = layout.n_sectors;
  d.values.assign(gmms.size() * static_cast<std::size_t>(layout.cells()), 0.0);
  d.presence = presence_vector(gmms);
  d.origin = origin;
  d.orientation = orientation;

  std::vector<GaussianComponent> pools;
  pools.reserve(static_cast<std::size_t>(layout.cells()));
  for (int r = 0; r < layout.n_rings; ++r)
    for (int s = 0; s < layout.n_sectors; ++s) pools.push_back(pooling_gaussian(layout, r, s, origin, orientation));

  for (std::size_t b = 0; b < gmms.size(); ++b) {
    if (gmms[b].empty()) continue;
    const std::size_t base = b * pools.size();
    double norm2 = 0.0;
    for (std::size_t k = 0; k < pools.size(); ++k) {
      const double v = hellinger(*bhattacharyya_gmm(gmms[b], pools[k]));
      d.values[base + k] = v;
      norm2 += v * v;
    }
    if (norm2 > 0.0) {
      const double inv = 1.0 / std::sqrt(norm2);
      for (std::size_t k = 0; k < pools.size(); ++k) d.values[base + k] *= inv;
    }
  }
  return d;
}

/// Convenience: mixtures built from a segment list, then extract_descriptor().
inline SslDescriptor descriptor_from_segments(std::span<const Segment> segments, std::span<const int> concept_ids,
                                              const PoolingLayout& layout, Point2 origin, double orientation) {
  const auto gmms = concept_gmms(segments, concept_ids);
  return extract_descriptor(gmms, concept_ids, layout, origin, orientation);
}

/// Keeps only the blocks of `subset` (in that order).
inline SslDescriptor restrict_descriptor(const SslDescriptor& d, std::span<const int> subset) {
  SslDescriptor out = d;
  out.concepts.assign(subset.begin(), subset.end());
  out.values.clear();
  out.presence.clear();
  for (int c : subset) {
    std::size_t b = 0;
    while (b < d.concepts.size() && d.concepts[b] != c) ++b;
    if (b == d.concepts.size()) throw ContractError("descriptor has no block for concept " + std::to_string(c));
    const auto blk = d.block(b);
    out.values.insert(out.values.end(), blk.begin(), blk.end());
    out.presence.push_back(d.presence[b]);
  }
  return out;
}

}  // namespace semloc
