#pragma once

// Rotation-searched, field-of-view-masked matching of SSL descriptors and
// the ranking / rank-CDF statistics built on it.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <span>
#include <unsupported/Eigen/FFT>
#include <vector>

#include "semloc/errors.hpp"
#include "semloc/parallel.hpp"
#include "semloc/ssl_descriptor.hpp"

namespace semloc {

/// Per-(ring, sector) query weights in {0, 1}; sectors outside the camera's
/// field of view contribute nothing to the distance.
struct FovMask {
  int n_rings = 1;
  int n_sectors = 8;
  std::vector<double> weights;  // [ring][sector]

  double at(int ring, int sector) const {
    return weights[static_cast<std::size_t>(ring * n_sectors + sector)];
  }
  std::size_t enabled() const {
    return static_cast<std::size_t>(std::count_if(weights.begin(), weights.end(), [](double w) { return w != 0.0; }));
  }
};

inline FovMask full_mask(int n_rings, int n_sectors) {
  return {n_rings, n_sectors, std::vector<double>(static_cast<std::size_t>(n_rings * n_sectors), 1.0)};
}

inline FovMask full_mask(const PoolingLayout& layout) { return full_mask(layout.n_rings, layout.n_sectors); }

/// Sector s is kept iff its centre direction, relative to the heading (sector 0),
/// is within half_angle plus half a sector width.
inline FovMask fov_mask(const PoolingLayout& layout, double half_angle) {
  FovMask m = full_mask(layout);
  const double slack = std::numbers::pi / layout.n_sectors;
  for (int s = 0; s < layout.n_sectors; ++s) {
    const double rel = std::abs(wrap_angle(2.0 * std::numbers::pi * s / layout.n_sectors));
    const double w = rel <= half_angle + slack + 1e-12 ? 1.0 : 0.0;
    for (int r = 0; r < layout.n_rings; ++r) m.weights[static_cast<std::size_t>(r * layout.n_sectors + s)] = w;
  }
  return m;
}

/// Circular shift of every ring block by k sectors: out[s] = in[(s - k) mod n].
inline SslDescriptor rotate_descriptor(const SslDescriptor& d, int k) {
  const int n = d.n_sectors;
  k = ((k % n) + n) % n;
  SslDescriptor out = d;
  for (std::size_t b = 0; b < d.n_blocks(); ++b)
    for (int r = 0; r < d.n_rings; ++r)
      for (int s = 0; s < n; ++s) out.values[d.index(b, r, (s + k) % n)] = d.at(b, r, s);
  return out;
}

namespace detail {

inline void require_compatible(const SslDescriptor& q, const SslDescriptor& r, const FovMask& m) {
  if (!q.same_shape(r)) throw ContractError("descriptor layouts differ");
  if (m.n_rings != q.n_rings || m.n_sectors != q.n_sectors ||
      m.weights.size() != static_cast<std::size_t>(q.n_rings * q.n_sectors))
    throw ContractError("mask does not match descriptor layout");
}

}  // namespace detail

/// Squared masked distance at shift k: sum of m[s] (q[s] - r[(s + k) mod n])^2.
inline double asymmetric_l2_squared(const SslDescriptor& q, const SslDescriptor& r, const FovMask& m, int k) {
  detail::require_compatible(q, r, m);
  const int n = q.n_sectors;
  k = ((k % n) + n) % n;
  double acc = 0.0;
  for (std::size_t b = 0; b < q.n_blocks(); ++b)
    for (int ring = 0; ring < q.n_rings; ++ring)
      for (int s = 0; s < n; ++s) {
        const double w = m.at(ring, s);
        if (w == 0.0) continue;
        const double diff = q.at(b, ring, s) - r.at(b, ring, (s + k) % n);
        acc += w * diff * diff;
      }
  return acc;
}

inline double asymmetric_l2(const SslDescriptor& q, const SslDescriptor& r, const FovMask& m, int k) {
  return std::sqrt(asymmetric_l2_squared(q, r, m, k));
}

struct RotationMatch {
  double distance = 0.0;
  int shift = 0;
};

/// Exhaustive search over all n_sectors shifts; ties go to the smallest shift.
inline RotationMatch min_rotation_distance(const SslDescriptor& q, const SslDescriptor& r, const FovMask& m) {
  detail::require_compatible(q, r, m);
  RotationMatch best{std::numeric_limits<double>::infinity(), 0};
  for (int k = 0; k < q.n_sectors; ++k) {
    const double d2 = asymmetric_l2_squared(q, r, m, k);
    if (d2 < best.distance) best = {d2, k};
  }
  best.distance = std::sqrt(best.distance);
  return best;
}

/// Squared distances for all shifts at once through circular correlations:
/// d2(k) = sum m q^2 - 2 corr(m.q, r)(k) + corr(m, r^2)(k), each correlation
/// evaluated in the Fourier domain.
inline std::vector<double> rotation_profile_fft(const SslDescriptor& q, const SslDescriptor& r, const FovMask& m) {
  detail::require_compatible(q, r, m);
  const int n = q.n_sectors;
  thread_local Eigen::FFT<double> fft;
  std::vector<std::complex<double>> acc(static_cast<std::size_t>(n), {0.0, 0.0});
  std::vector<double> mq(static_cast<std::size_t>(n)), mk(static_cast<std::size_t>(n)), rv(static_cast<std::size_t>(n)),
      r2(static_cast<std::size_t>(n));
  std::vector<std::complex<double>> f_mq, f_m, f_r, f_r2;
  double energy = 0.0;

  for (int ring = 0; ring < q.n_rings; ++ring) {
    for (int s = 0; s < n; ++s) mk[static_cast<std::size_t>(s)] = m.at(ring, s);
    fft.fwd(f_m, mk);
    for (std::size_t b = 0; b < q.n_blocks(); ++b) {
      for (int s = 0; s < n; ++s) {
        const auto i = static_cast<std::size_t>(s);
        const double qs = q.at(b, ring, s);
        mq[i] = mk[i] * qs;
        energy += mq[i] * qs;
        rv[i] = r.at(b, ring, s);
        r2[i] = rv[i] * rv[i];
      }
      fft.fwd(f_mq, mq);
      fft.fwd(f_r, rv);
      fft.fwd(f_r2, r2);
      for (std::size_t i = 0; i < acc.size(); ++i)
        acc[i] += -2.0 * std::conj(f_mq[i]) * f_r[i] + std::conj(f_m[i]) * f_r2[i];
    }
  }
  std::vector<double> out;
  fft.inv(out, acc);
  for (double& v : out) v += energy;
  return out;
}

/// Fourier-domain rotation search. Shifts within round-off of the FFT minimum
/// are re-scored exactly, so the result agrees with min_rotation_distance().
inline RotationMatch min_rotation_distance_fft(const SslDescriptor& q, const SslDescriptor& r, const FovMask& m) {
  const std::vector<double> profile = rotation_profile_fft(q, r, m);
  double lo = std::numeric_limits<double>::infinity();
  double scale = 0.0;
  for (double v : profile) {
    lo = std::min(lo, v);
    scale = std::max(scale, std::abs(v));
  }
  const double tol = 1e-9 * (1.0 + scale);
  RotationMatch best{std::numeric_limits<double>::infinity(), 0};
  for (int k = 0; k < static_cast<int>(profile.size()); ++k) {
    if (profile[static_cast<std::size_t>(k)] > lo + tol) continue;
    const double d2 = asymmetric_l2_squared(q, r, m, k);
    if (d2 < best.distance) best = {d2, k};
  }
  best.distance = std::sqrt(best.distance);
  return best;
}

// ---------------------------------------------------------------------------
// Scoring and ranking

struct CombinedScoreParams {
  double lambda = 1.0;
  /// Count only concepts the query sees but the tile lacks.
  bool asymmetric = true;
};

/// SSL distance plus lambda times the (normalised) presence mismatch.
inline double combined_distance(double ssl_d, const PresenceVector& query_pres, const PresenceVector& ref_pres,
                                const CombinedScoreParams& p) {
  if (query_pres.size() != ref_pres.size()) throw ContractError("presence vectors differ in length");
  if (p.lambda < 0.0) throw ParameterError("lambda must be nonnegative");
  if (query_pres.empty() || p.lambda == 0.0) return ssl_d;
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < query_pres.size(); ++i) {
    if (query_pres[i] == ref_pres[i]) continue;
    if (p.asymmetric && !query_pres[i]) continue;
    ++mismatches;
  }
  return ssl_d + p.lambda * static_cast<double>(mismatches) / static_cast<double>(query_pres.size());
}

struct IndexedTile {
  int id = 0;
  Point2 center;
  bool empty = true;
  SslDescriptor descriptor;
};

struct RankParams {
  CombinedScoreParams score;
  bool use_ssl = true;  // false: presence term only
  bool use_fft = false;
  bool exclude_empty = false;
};

struct MatchResult {
  int tile_id = 0;
  double distance = 0.0;
  int best_shift = 0;
  int rank = 0;  // 1-based
};

inline constexpr double kHeatEpsilon = 1e-12;

inline double heat_value(double distance) { return -std::log(distance + kHeatEpsilon); }

/// Combined distance of one tile to the query.
inline MatchResult score_tile(const SslDescriptor& query, const FovMask& mask, const IndexedTile& tile,
                              const RankParams& params) {
  RotationMatch rm{0.0, 0};
  if (params.use_ssl)
    rm = params.use_fft ? min_rotation_distance_fft(query, tile.descriptor, mask)
                        : min_rotation_distance(query, tile.descriptor, mask);
  else
    detail::require_compatible(query, tile.descriptor, mask);
  MatchResult res;
  res.tile_id = tile.id;
  res.distance = combined_distance(rm.distance, query.presence, tile.descriptor.presence, params.score);
  res.best_shift = rm.shift;
  return res;
}

/// Sorts ascending by distance, ties by tile id, and assigns 1-based ranks.
inline void assign_ranks(std::vector<MatchResult>& results) {
  std::sort(results.begin(), results.end(), [](const MatchResult& a, const MatchResult& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.tile_id < b.tile_id);
  });
  for (std::size_t i = 0; i < results.size(); ++i) results[i].rank = static_cast<int>(i) + 1;
}

struct RankOutput {
  std::vector<MatchResult> results;  // ascending distance
  std::vector<double> heat;          // per entry of the tile span; NaN when not scored
};

inline RankOutput rank_tiles(const SslDescriptor& query, const FovMask& mask, std::span<const IndexedTile> tiles,
                             const RankParams& params) {
  if (tiles.empty()) throw ParameterError("cannot rank against an empty index");
  std::vector<MatchResult> scored(tiles.size());
  std::vector<char> used(tiles.size(), 0);
  parallel_for(tiles.size(), [&](std::size_t i) {
    if (params.exclude_empty && tiles[i].empty) return;
    scored[i] = score_tile(query, mask, tiles[i], params);
    used[i] = 1;
  });
  RankOutput out;
  out.heat.assign(tiles.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    if (!used[i]) continue;
    out.heat[i] = heat_value(scored[i].distance);
    out.results.push_back(scored[i]);
  }
  if (out.results.empty()) throw ParameterError("no tiles left to rank");
  assign_ranks(out.results);
  return out;
}

/// 1-based rank of the ground-truth tile in a ranking.
inline int ground_truth_rank(std::span<const MatchResult> ranking, int tile_id) {
  for (const auto& r : ranking)
    if (r.tile_id == tile_id) return r.rank;
  throw ValidationError("ground-truth tile " + std::to_string(tile_id) + " is not in the ranking");
}

struct CdfPoint {
  double fraction = 0.0;
  double recall = 0.0;
};

/// Recall as a function of normalised shortlist size, sampled at k/N for k = 0..N.
inline std::vector<CdfPoint> rank_cdf(std::span<const int> ranks, int n_tiles) {
  if (n_tiles < 1) throw ParameterError("rank_cdf needs at least one tile");
  std::vector<int> hist(static_cast<std::size_t>(n_tiles) + 1, 0);
  for (int r : ranks) {
    if (r < 1 || r > n_tiles) throw ValidationError("rank out of range");
    ++hist[static_cast<std::size_t>(r)];
  }
  std::vector<CdfPoint> curve;
  curve.reserve(hist.size());
  int cum = 0;
  const double q = ranks.empty() ? 1.0 : static_cast<double>(ranks.size());
  for (int k = 0; k <= n_tiles; ++k) {
    cum += hist[static_cast<std::size_t>(k)];
    curve.push_back({static_cast<double>(k) / n_tiles, ranks.empty() ? 0.0 : cum / q});
  }
  return curve;
}

/// Area under a rank-CDF curve (trapezoid rule).
inline double curve_auc(std::span<const CdfPoint> curve) {
  double a = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i)
    a += 0.5 * (curve[i].recall + curve[i - 1].recall) * (curve[i].fraction - curve[i - 1].fraction);
  return a;
}

/// Fraction of queries whose rank is within the top `fraction` of `n_tiles` (at least one tile).
inline double recall_at_fraction(std::span<const int> ranks, int n_tiles, double fraction) {
  if (ranks.empty()) return 0.0;
  const int k = std::max(1, static_cast<int>(std::floor(fraction * n_tiles + 1e-9)));
  return static_cast<double>(std::count_if(ranks.begin(), ranks.end(), [&](int r) { return r <= k; })) /
         static_cast<double>(ranks.size());
}

inline double median_normalized_rank(std::span<const int> ranks, int n_tiles) {
  if (ranks.empty()) return 0.0;
  std::vector<double> v;
  v.reserve(ranks.size());
  for (int r : ranks) v.push_back(static_cast<double>(r) / n_tiles);
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace semloc
