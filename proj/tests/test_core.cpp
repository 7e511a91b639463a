#include <gtest/gtest.h>

#include "topologic/core.hpp"

using namespace topologic;

namespace {

LaneLine line(std::vector<Point3> pts) { return LaneLine(std::move(pts)); }

LaneLine straight(Point3 a, Point3 b) {
  std::vector<Point3> pts;
  for (std::size_t k = 0; k < kLanePoints; ++k) pts.push_back(a + (b - a) * (static_cast<double>(k) / 10.0));
  return LaneLine(std::move(pts));
}

}  // namespace

TEST(Endpoints, TwoPointLane) {
  const auto [s, e] = endpoints(line({{0, 0, 0}, {1, 0, 0}}));
  EXPECT_EQ(s, (Point3{0, 0, 0}));
  EXPECT_EQ(e, (Point3{1, 0, 0}));
}

TEST(Endpoints, ElevenPointLaneReadsFirstAndLast) {
  const LaneLine l = straight({0, 0, 0}, {10, 2, 1});
  EXPECT_EQ(endpoints(l).first, l[0]);
  EXPECT_EQ(endpoints(l).second, l[10]);
}

TEST(Endpoints, ReversedCopySwaps) {
  const LaneLine l = straight({1, 2, 3}, {4, 5, 6});
  const auto [s, e] = endpoints(l.reversed());
  EXPECT_EQ(s, l.end());
  EXPECT_EQ(e, l.start());
}

TEST(LaneLine, RejectsShortOrNonFinite) {
  EXPECT_THROW(line({{0, 0, 0}}), InvalidInput);
  EXPECT_THROW(line({{0, 0, 0}, {NAN, 0, 0}}), InvalidInput);
  EXPECT_THROW(line({{0, 0, 0}, {INFINITY, 0, 0}}), std::invalid_argument);
}

TEST(Adjacency, EmptyEdges) {
  const TopologyMatrix a = adjacency_from_edges({}, 3);
  EXPECT_EQ(a.n, 3u);
  for (double v : a.values) EXPECT_EQ(v, 0.0);
}

TEST(Adjacency, SingleEdge) {
  const TopologyMatrix a = adjacency_from_edges({{0, 1}}, 2);
  EXPECT_EQ(a.values, (std::vector<double>{0, 1, 0, 0}));
}

TEST(Adjacency, DirectedPair) {
  const TopologyMatrix a = adjacency_from_edges({{0, 1}, {1, 0}}, 2);
  EXPECT_EQ(a.values, (std::vector<double>{0, 1, 1, 0}));
}

TEST(Adjacency, OutOfRangeNamesThePair) {
  try {
    adjacency_from_edges({{0, 5}}, 3);
    FAIL() << "expected rejection";
  } catch (const InvalidInput& e) {
    EXPECT_NE(std::string(e.what()).find("(0,5)"), std::string::npos);
  }
}

TEST(Adjacency, RoundTripRecoversEdges) {
  const EdgeSet edges{{0, 2}, {2, 1}, {3, 0}, {1, 3}};
  EXPECT_EQ(edges_from_adjacency(adjacency_from_edges(edges, 4)), edges);
}

TEST(ValidateScene, SelfEdgeListed) {
  Scene s{"s", {{straight({0, 0, 0}, {10, 0, 0})}, {{0, 0}}}, {}};
  const auto r = validate_scene(s, false);
  ASSERT_EQ(r.violations.size(), 1u);
  EXPECT_EQ(r.violations[0].kind, ViolationKind::self_edge);
}

TEST(ValidateScene, EndpointGapMeasured) {
  Scene s{"s", {{straight({0, 0, 0}, {10, 0, 0}), straight({10, 0.4, 0}, {20, 0, 0})}, {{0, 1}}}, {}};
  EXPECT_TRUE(validate_scene(s, false).ok());
  const auto r = validate_scene(s, true);
  ASSERT_EQ(r.violations.size(), 1u);
  EXPECT_EQ(r.violations[0].kind, ViolationKind::endpoint_gap);
  EXPECT_NEAR(r.violations[0].gap, 0.4, 1e-15);
}

TEST(ValidateScene, OutOfRangeAndNonCanonical) {
  Scene s{"s", {{line({{0, 0, 0}, {1, 0, 0}})}, {{0, 3}}}, {}};
  const auto r = validate_scene(s, true);
  ASSERT_EQ(r.violations.size(), 2u);
  EXPECT_EQ(r.violations[0].kind, ViolationKind::non_canonical_lane);
  EXPECT_EQ(r.violations[1].kind, ViolationKind::edge_out_of_range);
}

TEST(ValidateScene, ZeroLengthLane) {
  Scene s{"s", {{line(std::vector<Point3>(kLanePoints, Point3{1, 1, 1}))}, {}}, {}};
  const auto r = validate_scene(s, false);
  ASSERT_EQ(r.violations.size(), 1u);
  EXPECT_EQ(r.violations[0].kind, ViolationKind::zero_length_lane);
}

TEST(TopologyMatrix, ValidateChecksRangeWhenCalibrated) {
  TopologyMatrix g(2, 0.5, true);
  EXPECT_NO_THROW(g.validate());
  g(0, 1) = 1.5;
  EXPECT_THROW(g.validate(), InvalidInput);
  g.calibrated = false;
  EXPECT_NO_THROW(g.validate());
  g(1, 0) = NAN;
  EXPECT_THROW(g.validate(), NumericalError);
}

TEST(Errors, Hierarchy) {
  EXPECT_TRUE((std::is_base_of_v<std::invalid_argument, InvalidInput>));
  EXPECT_TRUE((std::is_base_of_v<std::runtime_error, NumericalError>));
}
