// semloc: build tile indices from semantic maps, localize labelled query
// views, generate synthetic benchmarks and evaluate retrieval configurations.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "semloc/semloc.hpp"

namespace fs = std::filesystem;
using namespace semloc;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Outputs are staged next to their destination and renamed once everything
// succeeded, so a failing command leaves no partial files behind.
class OutputSet {
 public:
  void add(const fs::path& dest, std::string data) { pending_.push_back({dest, std::move(data)}); }

  void commit() {
    std::vector<fs::path> staged;
    try {
      for (const auto& [dest, data] : pending_) {
        if (dest.has_parent_path()) fs::create_directories(dest.parent_path());
        fs::path tmp = dest;
        tmp += ".tmp";
        std::ofstream out(tmp, std::ios::binary);
        out.write(data.data(), static_cast<std::streamsize>(data.size()));
        out.close();
        if (!out) throw Error("cannot write '" + dest.string() + "'");
        staged.push_back(tmp);
      }
    } catch (...) {
      std::error_code ec;
      for (const auto& t : staged) fs::remove(t, ec);
      throw;
    }
    for (std::size_t i = 0; i < staged.size(); ++i) fs::rename(staged[i], pending_[i].first);
  }

 private:
  std::vector<std::pair<fs::path, std::string>> pending_;
};

// Expands `--config FILE` into `--key=value` arguments placed before the
// user's own flags; with last-wins options the flags override the file.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::vector<std::string> injected, rest;
  std::size_t insert_at = 0;
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string file;
    if (args[i] == "--config" && i + 1 < args.size()) {
      file = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      file = args[i].substr(9);
    } else {
      if (insert_at == 0 && !args[i].empty() && args[i][0] != '-') insert_at = rest.size() + 1;  // after subcommand
      rest.push_back(args[i]);
      continue;
    }
    const std::string text = read_file(file);
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ParseError(line_no, "config lines must be key=value");
      auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        const auto b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
      };
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty()) throw ParseError(line_no, "empty config key");
      injected.push_back("--" + key + "=" + value);
    }
  }
  std::vector<std::string> out(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(insert_at));
  out.insert(out.end(), injected.begin(), injected.end());
  out.insert(out.end(), rest.begin() + static_cast<std::ptrdiff_t>(insert_at), rest.end());
  return out;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size() && !s.empty()) {
    const auto comma = s.find(',', start);
    out.push_back(s.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::vector<double> parse_list(const std::string& s, const char* what) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) {
    try {
      out.push_back(text::parse_double(item, 0));
    } catch (const ParseError&) {
      throw ParameterError(std::string("bad number in ") + what + ": '" + item + "'");
    }
  }
  return out;
}

std::vector<int> concept_ids(const std::vector<ConceptLabel>& table, const std::string& list) {
  std::vector<int> ids;
  for (const auto& n : split_list(list)) {
    const ConceptLabel* c = nullptr;
    for (const auto& l : table)
      if (l.name == n) c = &l;
    if (!c) throw ParameterError("unknown concept '" + n + "'");
    ids.push_back(c->id);
  }
  return ids;
}

struct LayoutFlags {
  int rings = 1;
  int sectors = 8;
  std::string radii = "15";
  std::string sigmas = "7.5";
  std::string origin = "cc";

  void add(CLI::App* app) {
    app->add_option("--rings", rings, "pooling rings");
    app->add_option("--sectors", sectors, "pooling regions per ring");
    app->add_option("--radius", radii, "ring radius per ring, meters (comma list)");
    app->add_option("--sigma", sigmas, "pooling sigma per ring, meters (comma list)");
    app->add_option("--origin", origin, "descriptor placement for queries: ci or cc");
  }
  PoolingLayout layout() const {
    PoolingLayout l;
    l.n_rings = rings;
    l.n_sectors = sectors;
    l.ring_radii = parse_list(radii, "--radius");
    l.sigma = parse_list(sigmas, "--sigma");
    l.origin_mode = parse_origin_mode(origin);
    l.validate();
    return l;
  }
};

// ---------------------------------------------------------------------------

struct BuildIndexArgs {
  std::string map, out, dump;
  double side = 30.0, stride = 15.0;
  LayoutFlags layout;
  std::string concepts;
  bool tree = false;
  int branches = 3, leaf_capacity = 8;
  std::uint64_t seed = 1;
};

void cmd_build_index(const BuildIndexArgs& a) {
  const SemanticMap map = parse_map(read_file(a.map));
  IndexConfig cfg;
  cfg.tile_side = a.side;
  cfg.tile_stride = a.stride;
  cfg.layout = a.layout.layout();
  cfg.concepts = concept_ids(map.concepts, a.concepts);
  cfg.build_tree = a.tree;
  cfg.branches = a.branches;
  cfg.leaf_capacity = a.leaf_capacity;
  cfg.seed = a.seed;
  const TileIndex idx = build_index(map, cfg);
  OutputSet out;
  out.add(a.out, write_index(idx));
  if (!a.dump.empty()) out.add(a.dump, write_descriptor_dump(idx));
  out.commit();
  std::size_t empty = 0;
  for (const auto& t : idx.tiles) empty += t.empty ? 1 : 0;
  std::cerr << "indexed " << idx.tiles.size() << " tiles (" << idx.grid.nx << " x " << idx.grid.ny << "), " << empty
            << " empty\n";
}

struct QueryArgs {
  std::string index, query, out_csv, heat;
  LayoutFlags layout;
  bool layout_given = false;
  std::string origin;
  std::size_t top_k = 0;
  double lambda = 1.0;
  bool no_ssl = false, exclude_empty = false, fft = false, tree = false;
  TraversalBudget budget;
  std::string sampling = "level";
};

void cmd_query(const QueryArgs& a) {
  const TileIndex idx = parse_index(read_file(a.index));
  if (a.layout_given && !a.layout.layout().same_geometry(idx.layout))
    throw ParameterError("pooling layout of the configuration does not match the index");
  const OriginMode mode = a.origin.empty() ? idx.layout.origin_mode : parse_origin_mode(a.origin);
  const QueryFile q = parse_query(read_file(a.query));
  const PreparedQuery pq = prepare_query(q, idx, mode);
  if (pq.projected.dropped > 0) std::cerr << "warning: " << pq.projected.dropped << " segment(s) above the horizon dropped\n";

  RankParams params;
  params.score.lambda = a.lambda;
  params.use_ssl = !a.no_ssl;
  params.use_fft = a.fft;
  params.exclude_empty = a.exclude_empty;

  std::vector<MatchResult> ranking;
  std::vector<double> heat;
  if (a.tree) {
    if (!idx.tree) throw ParameterError("index has no semantic tree; rebuild with --tree");
    if (a.exclude_empty) throw ParameterError("--exclude-empty is not supported with --tree-search");
    TraversalBudget b = a.budget;
    if (a.sampling == "child") b.mode = SamplingMode::PerChild;
    else if (a.sampling != "level") throw ParameterError("sampling must be 'level' or 'child'");
    const TreeSearchResult r = tree_search(*idx.tree, idx.tiles, pq.descriptor, pq.mask, params, b);
    ranking = r.scored;
    heat.assign(idx.tiles.size(), std::numeric_limits<double>::quiet_NaN());
    for (const auto& m : ranking) heat[static_cast<std::size_t>(m.tile_id)] = heat_value(m.distance);
    std::cerr << "tree search: " << r.comparisons << " comparisons\n";
  } else {
    RankOutput r = rank_tiles(pq.descriptor, pq.mask, idx.tiles, params);
    ranking = std::move(r.results);
    heat = std::move(r.heat);
  }
  OutputSet out;
  out.add(a.out_csv, write_ranking_csv(ranking, idx, a.top_k));
  if (!a.heat.empty()) out.add(a.heat, write_heat_pgm(idx.grid, heat));
  out.commit();
}

struct SynthArgs {
  std::string out;
  SyntheticSpec spec;
};

void cmd_synth(const SynthArgs& a) {
  const SyntheticCorpus corpus = synthesize(a.spec);
  const fs::path dir(a.out);
  OutputSet out;
  out.add(dir / "map.semmap", write_map(corpus.map));
  std::vector<ManifestEntry> manifest;
  for (std::size_t i = 0; i < corpus.queries.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "q%04zu.semquery", i);
    const std::string rel = std::string("queries/") + name;
    out.add(dir / rel, write_query(corpus.queries[i]));
    manifest.push_back({rel, corpus.truth[i]});
  }
  out.add(dir / "manifest.csv", write_manifest(manifest));
  out.commit();
  std::cerr << "wrote " << corpus.map.segments.size() << " map segments and " << corpus.queries.size() << " queries\n";
}

struct EvaluateArgs {
  std::string index, manifest, curves, summary;
  std::vector<std::string> runs;
  bool fft = false;
};

void cmd_evaluate(const EvaluateArgs& a) {
  const TileIndex idx = parse_index(read_file(a.index));
  const fs::path base = fs::path(a.manifest).parent_path();
  std::vector<EvalQuery> queries;
  for (auto& e : parse_manifest(read_file(a.manifest)))
    queries.push_back({parse_query(read_file(base / e.query)), e.truth});
  std::vector<EvalResult> results;
  for (const auto& r : a.runs) results.push_back(evaluate_config(idx, queries, parse_eval_config(r, idx), a.fft));
  OutputSet out;
  out.add(a.curves, write_curves_csv(results));
  if (!a.summary.empty()) out.add(a.summary, write_summary_csv(results));
  out.commit();
  for (const auto& r : results)
    std::cerr << r.label << ": median normalized rank " << text::format_double(r.median_normalized_rank) << ", recall@5% "
              << text::format_double(r.recall_at_5pct) << ", auc " << text::format_double(r.auc) << '\n';
}

void cmd_tree_layers(const std::string& index, const std::string& out_path) {
  const TileIndex idx = parse_index(read_file(index));
  if (!idx.tree) throw ParameterError("index has no semantic tree; rebuild with --tree");
  std::string csv = "layer,tile_id,cluster,x,y\n";
  for (int layer = 1; layer <= idx.tree->depth(); ++layer) {
    const std::vector<int> assign = layer_assignment(*idx.tree, layer);
    for (std::size_t t = 0; t < assign.size(); ++t)
      csv += std::to_string(layer) + ',' + std::to_string(idx.tiles[t].id) + ',' + std::to_string(assign[t]) + ',' +
             text::format_double(idx.tiles[t].center.x) + ',' + text::format_double(idx.tiles[t].center.y) + '\n';
  }
  OutputSet out;
  out.add(out_path, std::move(csv));
  out.commit();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic-segment-layout localization against a vector semantic map"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.set_help_all_flag("--help-all");

  BuildIndexArgs bi;
  auto* build = app.add_subcommand("build-index", "tile a semantic map and extract tile descriptors");
  build->add_option("--map", bi.map, "map file (SEMMAP 1)")->required();
  build->add_option("--out", bi.out, "index file to write")->required();
  build->add_option("--tile-side", bi.side, "tile side, meters");
  build->add_option("--tile-stride", bi.stride, "tile stride, meters");
  bi.layout.add(build);
  build->add_option("--concepts", bi.concepts, "comma list of concept names to index (default all)");
  build->add_flag("--tree", bi.tree, "also build the semantic tree");
  build->add_option("--branches", bi.branches, "tree branching factor L");
  build->add_option("--leaf-capacity", bi.leaf_capacity, "maximum tiles per leaf");
  build->add_option("--seed", bi.seed, "clustering seed");
  build->add_option("--dump-descriptors", bi.dump, "write DESC/PRES lines to this file");

  QueryArgs qa;
  auto* query = app.add_subcommand("query", "rank the tiles of an index for one query view");
  query->add_option("--index", qa.index, "index file")->required();
  query->add_option("--query", qa.query, "query file (SEMQUERY 1)")->required();
  query->add_option("--out", qa.out_csv, "ranked CSV to write")->required();
  query->add_option("--heat", qa.heat, "heat map PGM to write");
  query->add_option("--top-k", qa.top_k, "keep only the best k rows (0 = all)");
  auto* q_rings = query->add_option("--rings", qa.layout.rings, "expected pooling rings");
  auto* q_sectors = query->add_option("--sectors", qa.layout.sectors, "expected pooling regions per ring");
  auto* q_radius = query->add_option("--radius", qa.layout.radii, "expected ring radii");
  auto* q_sigma = query->add_option("--sigma", qa.layout.sigmas, "expected pooling sigmas");
  query->add_option("--origin", qa.origin, "descriptor placement: ci or cc (default from the index)");
  query->add_option("--lambda", qa.lambda, "weight of the presence term");
  query->add_flag("--no-ssl", qa.no_ssl, "rank by the presence term only");
  query->add_flag("--exclude-empty", qa.exclude_empty, "leave empty tiles out of the ranking");
  query->add_flag("--fft", qa.fft, "rotation search through circular correlation");
  query->add_flag("--tree-search", qa.tree, "traverse the semantic tree instead of scanning every tile");
  query->add_option("--samples", qa.budget.samples, "tiles sampled per tree level (M)");
  query->add_option("--spill", qa.budget.spill, "children kept per level");
  query->add_option("--search-seed", qa.budget.seed, "sampling seed of the tree traversal");
  query->add_option("--sampling", qa.sampling, "tree sampling: level or child");

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "generate a synthetic map, query views and ground truth");
  synth->add_option("--out", sa.out, "output directory")->required();
  synth->add_option("--seed", sa.spec.seed, "generator seed");
  synth->add_option("--extent-x", sa.spec.extent_x, "map width, meters");
  synth->add_option("--extent-y", sa.spec.extent_y, "map height, meters");
  synth->add_option("--tile-side", sa.spec.tile_side, "tile side used to pick camera positions");
  synth->add_option("--tile-stride", sa.spec.tile_stride, "tile stride used to pick camera positions");
  synth->add_option("--roads", sa.spec.roads);
  synth->add_option("--buildings", sa.spec.buildings);
  synth->add_option("--trees", sa.spec.trees);
  synth->add_option("--water", sa.spec.water);
  synth->add_option("--lamp-posts", sa.spec.lamp_posts);
  synth->add_option("--traffic-signals", sa.spec.traffic_signals);
  synth->add_option("--traffic-signs", sa.spec.traffic_signs);
  synth->add_option("--zones", sa.spec.zones, "land-use cells (0 = uniform)");
  synth->add_option("--queries", sa.spec.queries, "number of query views");
  synth->add_option("--jitter", sa.spec.jitter_sigma, "per-segment position jitter sigma, meters");
  synth->add_option("--dropout", sa.spec.dropout, "probability a visible segment is missed");
  synth->add_option("--spurious", sa.spec.spurious, "spurious segments per visible segment");
  synth->add_option("--view-range", sa.spec.view_range, "farthest labelled ground distance, meters");
  synth->add_option("--heading-steps", sa.spec.heading_steps, "snap headings to this many directions (0 = continuous)");
  synth->add_option("--focal", sa.spec.camera.focal, "camera focal length, pixels");

  EvaluateArgs ea;
  auto* evaluate = app.add_subcommand("evaluate", "rank-CDF evaluation of one or more configurations");
  evaluate->add_option("--index", ea.index, "index file")->required();
  evaluate->add_option("--manifest", ea.manifest, "ground-truth manifest from synth")->required();
  evaluate->add_option("--run", ea.runs, "label:method[:Concept,...], repeatable")
      ->required()
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  evaluate->add_option("--curves", ea.curves, "curve CSV to write")->required();
  evaluate->add_option("--summary", ea.summary, "summary CSV to write");
  evaluate->add_flag("--fft", ea.fft, "rotation search through circular correlation");

  std::string tl_index, tl_out;
  auto* layers = app.add_subcommand("tree-layers", "per-layer tile to cluster assignments of the semantic tree");
  layers->add_option("--index", tl_index, "index file with a tree")->required();
  layers->add_option("--out", tl_out, "CSV to write")->required();

  try {
    std::vector<std::string> args = expand_config(argc, argv);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  if (const char* env = std::getenv("SEMLOC_THREADS"); env && *env) {
    // parallel.hpp reads the variable itself; validate early for a clear message
    try {
      if (text::parse_int(env, 0) < 1) throw ParameterError("SEMLOC_THREADS must be a positive integer");
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return 2;
    }
  }

  try {
    if (*build) cmd_build_index(bi);
    if (*query) {
      qa.layout_given = q_rings->count() + q_sectors->count() + q_radius->count() + q_sigma->count() > 0;
      cmd_query(qa);
    }
    if (*synth) cmd_synth(sa);
    if (*evaluate) cmd_evaluate(ea);
    if (*layers) cmd_tree_layers(tl_index, tl_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
