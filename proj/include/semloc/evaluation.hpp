#pragma once

// Batch evaluation of retrieval configurations against a ground-truth
// manifest: rank-CDF curves and summary statistics.

#include <algorithm>
#include <numeric>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "semloc/errors.hpp"
#include "semloc/matcher.hpp"
#include "semloc/synth.hpp"
#include "semloc/text_io.hpp"
#include "semloc/tile_index.hpp"

namespace semloc {

enum class Method { Ssl, SslPresence, Presence, Random };

struct EvalConfig {
  std::string label;
  Method method = Method::SslPresence;
  OriginMode origin = OriginMode::CameraCenter;
  std::vector<int> concepts;  // empty = every block of the index
  double lambda = 1.0;
};

/// Parses `label:method[:concept,concept,...]`, method one of
/// ssl-ci, ssl-cc, ssl-ci+presence, ssl-cc+presence, presence, random.
inline EvalConfig parse_eval_config(std::string_view spec, const TileIndex& idx) {
  EvalConfig cfg;
  const auto c1 = spec.find(':');
  if (c1 == std::string_view::npos || c1 == 0) throw ParameterError("config must look like label:method[:concepts]");
  cfg.label = std::string(spec.substr(0, c1));
  const auto rest = spec.substr(c1 + 1);
  const auto c2 = rest.find(':');
  const std::string_view method = rest.substr(0, c2);
  if (method == "ssl-ci") {
    cfg.method = Method::Ssl;
    cfg.origin = OriginMode::ImageCenter;
  } else if (method == "ssl-cc") {
    cfg.method = Method::Ssl;
  } else if (method == "ssl-ci+presence") {
    cfg.origin = OriginMode::ImageCenter;
  } else if (method == "ssl-cc+presence") {
  } else if (method == "presence") {
    cfg.method = Method::Presence;
  } else if (method == "random") {
    cfg.method = Method::Random;
  } else {
    throw ParameterError("unknown evaluation method '" + std::string(method) + "'");
  }
  if (c2 != std::string_view::npos) {
    std::string_view list = rest.substr(c2 + 1);
    while (!list.empty() && list != "all") {
      const auto comma = list.find(',');
      const std::string name(list.substr(0, comma));
      int id = -1;
      for (const auto& c : idx.concepts)
        if (c.name == name) id = c.id;
      if (id < 0) throw ParameterError("unknown concept '" + name + "'");
      if (std::find(idx.selected.begin(), idx.selected.end(), id) == idx.selected.end())
        throw ParameterError("concept '" + name + "' is not in the index");
      cfg.concepts.push_back(id);
      if (comma == std::string_view::npos) break;
      list = list.substr(comma + 1);
    }
  }
  return cfg;
}

struct ManifestEntry {
  std::string query;  // query file name, relative to the manifest
  QueryTruth truth;
};

inline std::string write_manifest(const std::vector<ManifestEntry>& entries) {
  using text::format_double;
  std::string out = "query,tile_id,cam_x,cam_y,heading,segments,empty\n";
  for (const auto& e : entries)
    out += e.query + ',' + std::to_string(e.truth.tile_id) + ',' + format_double(e.truth.camera_position.x) + ',' +
           format_double(e.truth.camera_position.y) + ',' + format_double(e.truth.heading) + ',' +
           std::to_string(e.truth.segments) + ',' + (e.truth.empty ? "1" : "0") + '\n';
  return out;
}

inline std::vector<ManifestEntry> parse_manifest(std::string_view text) {
  std::vector<ManifestEntry> out;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line_no == 1) continue;  // header
    std::vector<std::string_view> f;
    std::size_t s = 0;
    for (;;) {
      const std::size_t c = line.find(',', s);
      f.push_back(line.substr(s, c == std::string_view::npos ? std::string_view::npos : c - s));
      if (c == std::string_view::npos) break;
      s = c + 1;
    }
    if (f.size() != 7) throw ParseError(line_no, "manifest rows need 7 fields");
    ManifestEntry e;
    e.query = std::string(f[0]);
    e.truth.tile_id = static_cast<int>(text::parse_int(f[1], line_no));
    e.truth.camera_position = {text::parse_double(f[2], line_no), text::parse_double(f[3], line_no)};
    e.truth.heading = text::parse_double(f[4], line_no);
    e.truth.segments = static_cast<std::size_t>(text::parse_int(f[5], line_no));
    e.truth.empty = text::parse_int(f[6], line_no) != 0;
    out.push_back(std::move(e));
  }
  return out;
}

struct EvalQuery {
  QueryFile query;
  QueryTruth truth;
};

struct EvalResult {
  std::string label;
  int n_tiles = 0;
  std::vector<int> ranks;  // 1-based rank of the ground truth, per query
  std::vector<CdfPoint> curve;
  double auc = 0.0;
  double median_normalized_rank = 0.0;
  double recall_at_1pct = 0.0;
  double recall_at_5pct = 0.0;
};

/// Ground-truth tile of a query for a descriptor placement: the camera tile
/// for camera-centred placement, otherwise the tile nearest to the ground
/// point under the image centre.
inline int ground_truth_tile(const TileIndex& idx, const EvalQuery& q, OriginMode mode) {
  if (mode == OriginMode::CameraCenter) {
    if (q.truth.tile_id < 0 || q.truth.tile_id >= static_cast<int>(idx.tiles.size()))
      throw ValidationError("ground-truth tile " + std::to_string(q.truth.tile_id) + " is not in the index");
    return q.truth.tile_id;
  }
  const Point2 c = image_center_ground(q.query.camera);
  return nearest_tile(idx, from_camera_frame(c, q.truth.camera_position, q.truth.heading));
}

inline EvalResult evaluate_config(const TileIndex& idx, std::span<const EvalQuery> queries, const EvalConfig& cfg,
                                  bool use_fft = false) {
  EvalResult res;
  res.label = cfg.label;
  res.n_tiles = static_cast<int>(idx.tiles.size());

  std::vector<IndexedTile> tiles = idx.tiles;
  if (!cfg.concepts.empty())
    for (auto& t : tiles) t.descriptor = restrict_descriptor(t.descriptor, cfg.concepts);

  RankParams params;
  params.use_fft = use_fft;
  params.use_ssl = cfg.method == Method::Ssl || cfg.method == Method::SslPresence;
  params.score.lambda = cfg.method == Method::Ssl ? 0.0 : cfg.lambda;

  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    const EvalQuery& q = queries[qi];
    const int gt = ground_truth_tile(idx, q, cfg.origin);
    if (cfg.method == Method::Random) {
      std::vector<int> order(tiles.size());
      std::iota(order.begin(), order.end(), 0);
      std::mt19937_64 rng(idx.seed * 1000003ULL + qi);
      std::shuffle(order.begin(), order.end(), rng);
      const auto it = std::find(order.begin(), order.end(), gt);
      res.ranks.push_back(static_cast<int>(it - order.begin()) + 1);
      continue;
    }
    PreparedQuery pq = prepare_query(q.query, idx, cfg.origin);
    if (!cfg.concepts.empty()) pq.descriptor = restrict_descriptor(pq.descriptor, cfg.concepts);
    const RankOutput ranked = rank_tiles(pq.descriptor, pq.mask, tiles, params);
    res.ranks.push_back(ground_truth_rank(ranked.results, gt));
  }
  res.curve = rank_cdf(res.ranks, res.n_tiles);
  res.auc = curve_auc(res.curve);
  res.median_normalized_rank = median_normalized_rank(res.ranks, res.n_tiles);
  res.recall_at_1pct = recall_at_fraction(res.ranks, res.n_tiles, 0.01);
  res.recall_at_5pct = recall_at_fraction(res.ranks, res.n_tiles, 0.05);
  return res;
}

/// `config,fraction,recall` rows for every curve.
inline std::string write_curves_csv(std::span<const EvalResult> results) {
  std::string out = "config,fraction,recall\n";
  for (const auto& r : results)
    for (const auto& p : r.curve)
      out += r.label + ',' + text::format_double(p.fraction) + ',' + text::format_double(p.recall) + '\n';
  return out;
}

inline std::string write_summary_csv(std::span<const EvalResult> results) {
  std::string out = "config,queries,tiles,median_normalized_rank,recall_at_1pct,recall_at_5pct,auc\n";
  for (const auto& r : results)
    out += r.label + ',' + std::to_string(r.ranks.size()) + ',' + std::to_string(r.n_tiles) + ',' +
           text::format_double(r.median_normalized_rank) + ',' + text::format_double(r.recall_at_1pct) + ',' +
           text::format_double(r.recall_at_5pct) + ',' + text::format_double(r.auc) + '\n';
  return out;
}

}  // namespace semloc
