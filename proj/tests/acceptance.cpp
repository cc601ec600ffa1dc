// Acceptance runner: one PASS/FAIL line per headline criterion.
// usage: acceptance <path-to-semloc-cli> <work-dir>

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "semloc/semloc.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace semloc;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(bool ok, const std::string& name, const std::string& detail) {
  std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
  if (!ok) ++failures;
}

std::string num(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, v);
  return buf;
}

double uniform(std::mt19937_64& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

// ---------------------------------------------------------------------------

void bhattacharyya_values() {
  const auto t0 = Clock::now();
  GaussianComponent a, b;
  double worst = 0.0;
  worst = std::max(worst, std::abs(bhattacharyya_gauss(a, a) - 0.0));
  b.mean = {1.0, 0.0};
  worst = std::max(worst, std::abs(bhattacharyya_gauss(b, a) - 0.125));
  GaussianComponent c;
  c.cov = 4.0 * Eigen::Matrix2d::Identity();
  worst = std::max(worst, std::abs(bhattacharyya_gauss(a, c) - 0.5 * std::log(6.25 / 4.0)));
  const double h = hellinger(0.125);
  const double h_err = std::abs(h - std::sqrt(1.0 - std::exp(-0.125)));
  const double dt = seconds_since(t0);
  report(worst <= 1e-12 && h_err <= 1e-9 && std::abs(h - 0.342787) < 1e-6 && dt < 1.0, "bhattacharyya-examples",
         "max error " + num(worst) + ", hellinger(0.125) = " + num(h, 12) + ", " + num(dt) + " s");
}

SslDescriptor random_desc(std::mt19937_64& rng, int nc, int rings, int sectors) {
  SslDescriptor d;
  d.n_rings = rings;
  d.n_sectors = sectors;
  for (int c = 0; c < nc; ++c) d.concepts.push_back(c);
  d.values.resize(static_cast<std::size_t>(nc * rings * sectors));
  d.presence.assign(static_cast<std::size_t>(nc), true);
  for (auto& v : d.values) v = uniform(rng, 0.0, 1.0);
  return d;
}

void fft_equivalence() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  int shift_mismatch = 0;
  for (int i = 0; i < 10000; ++i) {
    const int n = 2 + static_cast<int>(rng() % 31), rings = 1 + static_cast<int>(rng() % 3), nc = 1 + static_cast<int>(rng() % 7);
    const auto q = random_desc(rng, nc, rings, n), r = random_desc(rng, nc, rings, n);
    FovMask m = full_mask(rings, n);
    for (auto& w : m.weights) w = rng() % 2 ? 1.0 : 0.0;
    m.weights[rng() % m.weights.size()] = 1.0;
    const auto a = min_rotation_distance(q, r, m), b = min_rotation_distance_fft(q, r, m);
    worst = std::max(worst, std::abs(a.distance - b.distance));
    // a differing shift is fine only when it is an exact tie
    if (a.shift != b.shift && asymmetric_l2_squared(q, r, m, b.shift) != asymmetric_l2_squared(q, r, m, a.shift))
      ++shift_mismatch;
  }
  const double dt = seconds_since(t0);
  report(worst <= 1e-9 && shift_mismatch == 0 && dt < 30.0, "fft-equals-brute-force",
         "10000 triples, max |d| diff " + num(worst) + ", shift mismatches " + std::to_string(shift_mismatch) + ", " +
             num(dt) + " s");
}

void rotation_equivariance() {
  SyntheticSpec spec;
  spec.seed = 5;
  spec.queries = 0;
  const auto corpus = synthesize(spec);
  const auto tiles = tile_map(corpus.map, spec.tile_side, spec.tile_stride);
  const PoolingLayout layout;
  std::vector<int> ids;
  for (const auto& c : corpus.map.concepts) ids.push_back(c.id);
  std::mt19937_64 rng(7);
  std::vector<std::size_t> order(tiles.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  int used = 0, bad_shift = 0;
  double worst_elem = 0.0, worst_dist = 0.0;
  for (std::size_t i : order) {
    if (used == 100) break;
    const Tile& t = tiles[i];
    if (t.segments.empty()) continue;
    ++used;
    const int k = static_cast<int>(rng() % 8);
    std::vector<Segment> rotated;
    for (const auto& s : t.segments)
      rotated.push_back({s.concept_id, rotate_polygon(s.polygon, t.center, k * std::numbers::pi / 4.0)});
    const auto d = descriptor_from_segments(t.segments, ids, layout, t.center, kNorthOrientation);
    const auto dr = descriptor_from_segments(rotated, ids, layout, t.center, kNorthOrientation);
    const auto expect = rotate_descriptor(d, k);
    for (std::size_t e = 0; e < d.values.size(); ++e) worst_elem = std::max(worst_elem, std::abs(expect.values[e] - dr.values[e]));
    const auto m = min_rotation_distance(d, dr, full_mask(layout));
    worst_dist = std::max(worst_dist, m.distance);
    if (m.shift != k) {
      // symmetric content: accept another shift only if it is an exact alternative
      const double at_k = asymmetric_l2(d, dr, full_mask(layout), k);
      if (!(at_k <= 1e-9 && m.distance <= 1e-9)) ++bad_shift;
    }
  }
  report(used == 100 && worst_elem <= 1e-9 && worst_dist <= 1e-9 && bad_shift == 0, "rotation-equivariance",
         std::to_string(used) + " tiles, max element error " + num(worst_elem) + ", max distance " + num(worst_dist) +
             ", wrong shifts " + std::to_string(bad_shift));
}

bool inside(const Polygon& p, double x, double y) {
  bool in = false;
  for (std::size_t i = 0, j = p.size() - 1; i < p.size(); j = i++) {
    if ((p[i].y > y) != (p[j].y > y) && x < (p[j].x - p[i].x) * (y - p[i].y) / (p[j].y - p[i].y) + p[i].x) in = !in;
  }
  return in;
}

void moment_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(99);
  double worst_mean = 0.0, worst_cov = 0.0;
  for (int k = 0; k < 50; ++k) {
    // random star polygon, simple by construction
    const int n = 3 + static_cast<int>(rng() % 10);
    const Point2 c{uniform(rng, -100, 100), uniform(rng, -100, 100)};
    const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    Polygon poly;
    for (int i = 0; i < n; ++i) {
      const double a = phase + 2.0 * std::numbers::pi * (i + 0.45 * uniform(rng, 0.0, 1.0)) / n;
      const double r = uniform(rng, 2.0, 12.0);
      poly.push_back({c.x + r * std::cos(a), c.y + r * std::sin(a)});
    }
    if (polygon_area(poly) < 1.0) {
      --k;
      continue;
    }
    double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
    for (const auto& p : poly) {
      x0 = std::min(x0, p.x);
      x1 = std::max(x1, p.x);
      y0 = std::min(y0, p.y);
      y1 = std::max(y1, p.y);
    }
    // one million accepted samples, centred accumulation around the bbox centre
    const double ox = 0.5 * (x0 + x1), oy = 0.5 * (y0 + y1);
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    long accepted = 0;
    while (accepted < 1000000) {
      const double x = uniform(rng, x0, x1), y = uniform(rng, y0, y1);
      if (!inside(poly, x, y)) continue;
      const double dx = x - ox, dy = y - oy;
      sx += dx;
      sy += dy;
      sxx += dx * dx;
      sxy += dx * dy;
      syy += dy * dy;
      ++accepted;
    }
    const double nn = static_cast<double>(accepted);
    const double mx = sx / nn, my = sy / nn;
    Eigen::Matrix2d cov;
    cov << sxx / nn - mx * mx, sxy / nn - mx * my, sxy / nn - mx * my, syy / nn - my * my;
    const auto g = polygon_gaussian(poly).gaussian;
    const double diag = std::hypot(x1 - x0, y1 - y0);
    worst_mean = std::max(worst_mean, std::hypot(g.mean.x() - (mx + ox), g.mean.y() - (my + oy)) / diag);
    const double scale = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(cov).eigenvalues().maxCoeff();
    worst_cov = std::max(worst_cov, (g.cov - cov).cwiseAbs().maxCoeff() / scale);
  }
  const double dt = seconds_since(t0);
  report(worst_mean <= 0.005 && worst_cov <= 0.01 && dt < 60.0, "moment-oracle",
         "50 polygons x 1e6 samples, max mean error " + num(100 * worst_mean) + "% of bbox diagonal, max covariance error " +
             num(100 * worst_cov) + "% of largest eigenvalue, " + num(dt) + " s");
}

void self_retrieval() {
  int total = 0, hits = 0;
  for (std::uint64_t seed : {1u, 2u}) {
    SyntheticSpec spec;
    spec.seed = seed;
    spec.queries = 0;
    const auto corpus = synthesize(spec);
    const auto idx = build_index(corpus.map, {});
    const auto tiles = tile_map(corpus.map, spec.tile_side, spec.tile_stride);
    std::mt19937_64 rng(seed);
    RankParams p;
    p.exclude_empty = true;
    const FovMask full = full_mask(idx.layout);
    for (const auto& t : tiles) {
      if (t.segments.empty()) continue;
      // noiseless query: the tile's own content seen from an arbitrary heading
      const int k = static_cast<int>(rng() % 8);
      std::vector<Segment> view;
      for (const auto& s : t.segments)
        view.push_back({s.concept_id, rotate_polygon(s.polygon, t.center, k * std::numbers::pi / 4.0)});
      const auto q = descriptor_from_segments(view, idx.selected, idx.layout, t.center, kNorthOrientation);
      const auto out = rank_tiles(q, full, idx.tiles, p);
      ++total;
      hits += ground_truth_rank(out.results, t.id) == 1;
    }
  }
  report(total > 0 && hits == total, "self-retrieval",
         std::to_string(hits) + "/" + std::to_string(total) + " nonempty tiles at rank 1 (2 maps)");
}

void synthetic_retrieval() {
  const auto t0 = Clock::now();
  SyntheticSpec spec;  // 400 tiles, 100 queries, 2 m jitter, 10% dropout, 5% spurious
  const auto corpus = synthesize(spec);
  const auto idx = build_index(corpus.map, {});
  std::vector<EvalQuery> queries;
  for (std::size_t i = 0; i < corpus.queries.size(); ++i) queries.push_back({corpus.queries[i], corpus.truth[i]});
  const auto full = evaluate_config(idx, queries, parse_eval_config("ssl-cc+presence:ssl-cc+presence", idx));
  const auto pres = evaluate_config(idx, queries, parse_eval_config("presence:presence", idx));
  const auto rnd = evaluate_config(idx, queries, parse_eval_config("random:random", idx));
  const double dt = seconds_since(t0);
  const bool top5 = full.recall_at_5pct >= 0.8;
  const bool order = full.auc > pres.auc && full.auc > rnd.auc;
  const std::string tail = std::to_string(idx.tiles.size()) + " tiles, " + std::to_string(queries.size()) + " queries, " +
                           num(dt) + " s";
  report(top5 && dt < 300.0, "synthetic-retrieval-top5",
         "recall@5% = " + num(full.recall_at_5pct) + " (need >= 0.8), recall@1% = " + num(full.recall_at_1pct) +
             ", median normalized rank " + num(full.median_normalized_rank) + ", " + tail);
  report(order && dt < 300.0, "synthetic-retrieval-auc-order",
         "AUC ssl-cc+presence " + num(full.auc) + " > presence " + num(pres.auc) + ", random " + num(rnd.auc));
}

void tree_budget() {
  std::mt19937_64 rng(31);
  const int branches = 3, leaf = 3, samples = 5;
  const auto tiles = gen::planted_hierarchy(rng, branches, 5);  // 243 tiles
  std::vector<SslDescriptor> descs;
  for (const auto& t : tiles) descs.push_back(t.descriptor);
  const auto tree = build_tree(descs, branches, leaf, 1);
  const auto n = static_cast<double>(tiles.size());
  const std::size_t bound = static_cast<std::size_t>(samples * branches * tree.depth() + leaf);

  const FovMask mask = full_mask(1, 8);
  int agree = 0;
  std::size_t worst = 0;
  double total = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    SslDescriptor q = tiles[rng() % tiles.size()].descriptor;
    for (auto& v : q.values) v += uniform(rng, -1e-3, 1e-3);
    TraversalBudget b;
    b.samples = samples;
    b.seed = static_cast<std::uint64_t>(trial + 1);
    const auto res = tree_search(tree, tiles, q, mask, {}, b);
    const auto ex = rank_tiles(q, mask, tiles, {});
    agree += res.best.tile_id == ex.results.front().tile_id;
    worst = std::max(worst, res.comparisons);
    total += static_cast<double>(res.comparisons);
  }
  const double mean = total / 100.0;
  const double predicted = n / (samples * std::log(n) / std::log(static_cast<double>(branches)));
  const double speedup = n / mean;
  report(bound <= 78 && worst <= bound && worst <= 78, "tree-budget-bound",
         "depth " + std::to_string(tree.depth()) + ", max comparisons " + std::to_string(worst) + ", structural bound M*L*depth+leaf = " +
             std::to_string(bound) + ", required <= 78");
  report(agree >= 90, "tree-top1-agreement", std::to_string(agree) + "/100 trials match exhaustive top-1");
  report(speedup >= predicted / 2.0 && speedup <= predicted * 2.0, "tree-speedup",
         "mean comparisons " + num(mean) + ", speedup N/mean " + num(speedup) + " vs predicted N/(M log_L N) = " +
             num(predicted));
}

int run(const std::string& cmd) {
  const int st = std::system((cmd + " >/dev/null 2>&1").c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void determinism(const std::string& cli, const fs::path& work) {
  auto pipeline = [&](const fs::path& dir) {
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string q = "\"";
    int rc = run(cli + " synth --seed 17 --queries 40 --out " + q + (dir / "w").string() + q);
    rc |= run(cli + " build-index --tree --map " + q + (dir / "w/map.semmap").string() + q + " --out " + q +
              (dir / "idx.semidx").string() + q + " --dump-descriptors " + q + (dir / "desc.txt").string() + q);
    rc |= run(cli + " evaluate --index " + q + (dir / "idx.semidx").string() + q + " --manifest " + q +
              (dir / "w/manifest.csv").string() + q + " --run a:ssl-cc+presence --run b:ssl-ci --run c:random --curves " +
              q + (dir / "curves.csv").string() + q + " --summary " + q + (dir / "summary.csv").string() + q);
    return rc;
  };
  const fs::path a = work / "run_a", b = work / "run_b";
  const int rc = pipeline(a) | pipeline(b);
  std::size_t files = 0, differ = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    ++files;
    const fs::path other = b / fs::relative(e.path(), a);
    if (!fs::exists(other) || slurp(e.path()) != slurp(other)) ++differ;
  }
  report(rc == 0 && files > 40 && differ == 0, "determinism",
         std::to_string(files) + " files compared, " + std::to_string(differ) + " differ, exit status " + std::to_string(rc));
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) {
    std::cerr << "usage: acceptance <semloc-cli> <work-dir>\n";
    return 2;
  }
  const std::string cli = std::string("\"") + argv[1] + "\"";
  const fs::path work = argv[2];
  fs::create_directories(work);

  const std::vector<std::function<void()>> checks = {
      bhattacharyya_values, fft_equivalence, rotation_equivariance, moment_oracle, self_retrieval,
      synthetic_retrieval,  tree_budget,     [&] { determinism(cli, work); },
  };
  for (const auto& check : checks) {
    try {
      check();
    } catch (const std::exception& e) {
      report(false, "exception", e.what());
    }
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criterion check(s) failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
