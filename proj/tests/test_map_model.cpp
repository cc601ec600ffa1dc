#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace semloc;

namespace {

std::string header(double xmax = 90, double ymax = 90) {
  std::string s = "SEMMAP 1\nBOUNDS 0 0 " + text::format_double(xmax) + " " + text::format_double(ymax) + "\nCONCEPTS 7\n";
  for (const auto& c : default_concepts()) s += std::to_string(c.id) + " " + c.name + " " + (c.vertical ? "1" : "0") + "\n";
  return s;
}

}  // namespace

TEST(ParseMap, HeaderOnlyGivesEmptyMap) {
  const SemanticMap m = parse_map(header());
  EXPECT_EQ(m.concepts.size(), 7u);
  EXPECT_TRUE(m.segments.empty());
  EXPECT_EQ(m.bounds.xmax, 90.0);
  EXPECT_EQ(m.concepts[4].name, "Lamp Post");
  EXPECT_TRUE(m.concepts[4].vertical);
}

TEST(ParseMap, UnitSquareRoad) {
  const SemanticMap m = parse_map(header() + "SEG 0 4 1 1 2 1 2 2 1 2\n");
  ASSERT_EQ(m.segments.size(), 1u);
  EXPECT_EQ(m.segments[0].concept_id, 0);
  EXPECT_DOUBLE_EQ(polygon_area(m.segments[0].polygon), 1.0);
}

TEST(ParseMap, RoundTripPreservesEverything) {
  std::mt19937_64 rng(5);
  SemanticMap m;
  m.concepts = default_concepts();
  m.bounds = {0, 0, 100, 100};
  for (int i = 0; i < 20; ++i)
    m.segments.push_back({i % 7, gen::random_star_polygon(rng, {50, 50}, 1, 20)});
  const SemanticMap back = parse_map(write_map(m));
  ASSERT_EQ(back.segments.size(), m.segments.size());
  for (std::size_t i = 0; i < m.segments.size(); ++i) {
    EXPECT_EQ(back.segments[i].concept_id, m.segments[i].concept_id);
    EXPECT_EQ(back.segments[i].polygon, m.segments[i].polygon);
  }
  EXPECT_EQ(write_map(back), write_map(m));
}

TEST(ParseMap, Errors) {
  EXPECT_THROW(parse_map(header() + "SEG 0 4 1 1 2 1 2 2 100 2\n"), ValidationError);  // outside bounds
  EXPECT_THROW(parse_map(header() + "SEG 9 3 1 1 2 1 2 2\n"), ValidationError);        // undeclared
  EXPECT_THROW(parse_map(header() + "SEG 0 2 1 1 2 1\n"), ValidationError);            // < 3 vertices
  try {
    parse_map(header() + "SEG 0 3 1 1 2 x 2 2\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 11u);
  }
  EXPECT_THROW(parse_map("SEMMAP 2\n"), ParseError);
  EXPECT_THROW(parse_map(header() + "SEG 0 3 1 1 2 1\n"), ParseError);  // coordinate count mismatch
}

TEST(TileMap, GridCountsMatchArithmetic) {
  const SemanticMap m = parse_map(header());
  // oracle: (extent - side) / stride + 1 per axis
  EXPECT_EQ(tile_map(m, 30, 15).size(), 25u);
  EXPECT_EQ(tile_map(m, 30, 30).size(), 9u);
  EXPECT_THROW(tile_map(m, 0, 1), ParameterError);
  EXPECT_THROW(tile_map(m, 10, 20), ParameterError);
  for (double ext : {30.0, 45.0, 90.0, 120.0, 315.0})
    for (double stride : {5.0, 10.0, 15.0, 30.0}) {
      const double expect = std::floor((ext - 30) / stride + 1e-9) + 1;
      if (std::abs((ext - 30) / stride - std::round((ext - 30) / stride)) < 1e-9) {
        EXPECT_EQ(tiles_per_axis(ext, 30, stride), static_cast<int>(expect));
      }
    }
}

TEST(TileMap, SpanningSegmentAppearsClippedInBoth) {
  const SemanticMap m = parse_map(header(60, 30) + "SEG 3 4 20 10 40 10 40 20 20 20\n");
  const auto tiles = tile_map(m, 30, 30);
  ASSERT_EQ(tiles.size(), 2u);
  ASSERT_EQ(tiles[0].segments.size(), 1u);
  ASSERT_EQ(tiles[1].segments.size(), 1u);
  EXPECT_NEAR(polygon_area(tiles[0].segments[0].polygon), 100.0, 1e-9);
  EXPECT_NEAR(polygon_area(tiles[1].segments[0].polygon), 100.0, 1e-9);
}

TEST(TileMap, VerticesInsideTilesAndEmptyFlag) {
  std::mt19937_64 rng(8);
  SemanticMap m;
  m.concepts = default_concepts();
  m.bounds = {0, 0, 90, 90};
  for (int i = 0; i < 40; ++i) {
    Polygon p = gen::random_star_polygon(rng, {gen::uniform(rng, 10, 80), gen::uniform(rng, 10, 80)}, 1, 9);
    m.segments.push_back({i % 7, p});
  }
  double total_tile_area = 0.0, map_area = 0.0;
  for (const auto& s : m.segments) map_area += polygon_area(s.polygon);
  for (const auto& t : tile_map(m, 30, 15)) {
    EXPECT_EQ(t.empty, t.segments.empty());
    for (const auto& s : t.segments) {
      total_tile_area += polygon_area(s.polygon);
      for (const auto& p : s.polygon) ASSERT_TRUE(t.rect().contains(p, 1e-9));
      // clipping is idempotent
      ASSERT_NEAR(polygon_area(clip_to_rect(s.polygon, t.rect())), polygon_area(s.polygon), 1e-9);
    }
  }
  EXPECT_GE(total_tile_area, map_area - 1e-6);
}

TEST(TileMap, PartitionPreservesAreaWhenStrideEqualsSide) {
  std::mt19937_64 rng(9);
  SemanticMap m;
  m.concepts = default_concepts();
  m.bounds = {0, 0, 90, 90};
  double map_area = 0.0;
  for (int i = 0; i < 30; ++i) {
    Polygon p = gen::random_star_polygon(rng, {gen::uniform(rng, 10, 80), gen::uniform(rng, 10, 80)}, 1, 9);
    map_area += polygon_area(p);
    m.segments.push_back({0, p});
  }
  double tiles_area = 0.0;
  for (const auto& t : tile_map(m, 30, 30))
    for (const auto& s : t.segments) tiles_area += polygon_area(s.polygon);
  EXPECT_NEAR(tiles_area, map_area, 1e-6);
}

TEST(PolygonGaussian, UnitSquare) {
  const SegmentGaussian g = polygon_gaussian(Polygon{{0, 0}, {1, 0}, {1, 1}, {0, 1}});
  EXPECT_NEAR(g.gaussian.mean.x(), 0.5, 1e-15);
  EXPECT_NEAR(g.gaussian.mean.y(), 0.5, 1e-15);
  EXPECT_NEAR(g.gaussian.cov(0, 0), 1.0 / 12, 1e-15);
  EXPECT_NEAR(g.gaussian.cov(1, 1), 1.0 / 12, 1e-15);
  EXPECT_NEAR(g.gaussian.cov(0, 1), 0.0, 1e-15);
  EXPECT_FALSE(g.degenerate);
  EXPECT_DOUBLE_EQ(g.area, 1.0);
}

TEST(PolygonGaussian, TranslatedSquare) {
  const SegmentGaussian g = polygon_gaussian(translate_polygon(Polygon{{0, 0}, {1, 0}, {1, 1}, {0, 1}}, {10, -3}));
  EXPECT_NEAR(g.gaussian.mean.x(), 10.5, 1e-12);
  EXPECT_NEAR(g.gaussian.mean.y(), -2.5, 1e-12);
  EXPECT_NEAR(g.gaussian.cov(0, 0), 1.0 / 12, 1e-12);
}

TEST(PolygonGaussian, RectangleAndTriangleClosedForms) {
  // w x h rectangle: var w^2/12, h^2/12
  const SegmentGaussian r = polygon_gaussian(Polygon{{0, 0}, {4, 0}, {4, 2}, {0, 2}});
  EXPECT_NEAR(r.gaussian.cov(0, 0), 16.0 / 12, 1e-12);
  EXPECT_NEAR(r.gaussian.cov(1, 1), 4.0 / 12, 1e-12);
  // right triangle (0,0),(1,0),(0,1): centroid 1/3, var 1/18, cov -1/36
  const SegmentGaussian t = polygon_gaussian(Polygon{{0, 0}, {1, 0}, {0, 1}});
  EXPECT_NEAR(t.gaussian.mean.x(), 1.0 / 3, 1e-12);
  EXPECT_NEAR(t.gaussian.cov(0, 0), 1.0 / 18, 1e-12);
  EXPECT_NEAR(t.gaussian.cov(0, 1), -1.0 / 36, 1e-12);
}

TEST(PolygonGaussian, InvariantToVertexRotationAndReversal) {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 100; ++i) {
    Polygon p = gen::random_star_polygon(rng, {3, -2}, 1, 10);
    const auto a = polygon_gaussian(p).gaussian;
    std::rotate(p.begin(), p.begin() + 1, p.end());
    const auto b = polygon_gaussian(p).gaussian;
    std::reverse(p.begin(), p.end());
    const auto c = polygon_gaussian(p).gaussian;
    ASSERT_LT((a.mean - b.mean).norm(), 1e-9);
    ASSERT_LT((a.mean - c.mean).norm(), 1e-9);
    ASSERT_LT((a.cov - b.cov).norm(), 1e-9);
    ASSERT_LT((a.cov - c.cov).norm(), 1e-9);
  }
}

TEST(PolygonGaussian, DegenerateAndFloored) {
  const SegmentGaussian g = polygon_gaussian(Polygon{{0, 0}, {1, 1}, {2, 2}});
  EXPECT_TRUE(g.degenerate);
  EXPECT_NEAR(g.gaussian.mean.x(), 1.0, 1e-12);
  EXPECT_NEAR(g.gaussian.cov(0, 0), kCovFloor, 1e-15);
  EXPECT_NEAR(g.gaussian.cov(0, 1), 0.0, 1e-15);
  // a thin sliver is floored, never below eps
  const SegmentGaussian s = polygon_gaussian(Polygon{{0, 0}, {10, 0}, {10, 1e-4}, {0, 1e-4}});
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(s.gaussian.cov);
  EXPECT_GE(es.eigenvalues().minCoeff(), kCovFloor - 1e-12);
}

TEST(TileGmm, WeightsAreAreaProportional) {
  Tile t;
  t.segments = {{0, {{0, 0}, {3, 0}, {3, 1}, {0, 1}}}, {0, {{5, 5}, {6, 5}, {6, 6}, {5, 6}}}, {3, {{0, 0}, {1, 0}, {1, 1}}}};
  const ConceptGmm road = tile_gmm(t, 0);
  ASSERT_EQ(road.size(), 2u);
  EXPECT_NEAR(road.weights[0], 0.75, 1e-15);
  EXPECT_NEAR(road.weights[1], 0.25, 1e-15);
  const ConceptGmm water = tile_gmm(t, 3);
  ASSERT_EQ(water.size(), 1u);
  EXPECT_DOUBLE_EQ(water.weights[0], 1.0);
  EXPECT_TRUE(tile_gmm(t, 5).empty());
}

TEST(TileGmm, WeightsSumToOneProperty) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 100; ++i) {
    const auto segs = gen::random_scene(rng, {0, 0}, 15, 3, 1 + i % 9);
    for (int c = 0; c < 3; ++c) {
      const ConceptGmm g = concept_gmm(segs, c);
      const auto count = std::count_if(segs.begin(), segs.end(), [&](const Segment& s) { return s.concept_id == c; });
      ASSERT_EQ(g.size(), static_cast<std::size_t>(count));
      if (g.empty()) continue;
      double sum = 0;
      for (double w : g.weights) sum += w;
      ASSERT_NEAR(sum, 1.0, 1e-12);
    }
  }
}
