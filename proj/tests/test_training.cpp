#include <gtest/gtest.h>

#include <cmath>

#include "gradient_cases.hpp"
#include "topologic/io.hpp"

using namespace topologic;
using nn::Matrix;
using nn::Tape;

namespace {

LaneLine straight(double x0, double y) {
  std::vector<Point3> pts;
  for (std::size_t p = 0; p < kLanePoints; ++p) pts.push_back({x0 + static_cast<double>(p), y, 0.0});
  return LaneLine(std::move(pts));
}

std::vector<Scene> small_dataset(std::size_t n, std::uint64_t seed) {
  static constexpr Layout kSmall[] = {Layout::straight_chain, Layout::fork, Layout::merge};
  return make_dataset(n, seed, kSmall);
}

std::string checkpoint_text(Model& m, const TrainState& s) { return io::dump(io::checkpoint_to_json(m, s.epoch, s.optimizer.step)); }

}  // namespace

TEST(FocalTerm, SpecExamples) {
  nn::FocalOptions plain{0.0, 1.0};
  EXPECT_NEAR(nn::focal_term(0.5, 1.0, plain), 0.6931471805599453, 1e-12);
  const double v = nn::focal_term(0.9, 1.0, nn::FocalOptions{});
  EXPECT_NEAR(v, 0.25 * 0.01 * -std::log(0.9), 1e-15);
  EXPECT_NEAR(v, 2.634e-4, 5e-8);
  EXPECT_LT(nn::focal_term(1.0, 1.0, nn::FocalOptions{}), 1e-12);
  EXPECT_LT(nn::focal_term(0.0, 0.0, nn::FocalOptions{}), 1e-12);
}

TEST(L1LaneLoss, SpecExamples) {
  EXPECT_EQ(l1_lane_loss(straight(0, 0), straight(0, 0)), 0.0);
  // One unit along y at every point: 11 of 33 coordinates differ.
  EXPECT_NEAR(l1_lane_loss(straight(0, 0), straight(0, 1)), 1.0 / 3.0, 1e-15);
  std::vector<Point3> pts;
  for (std::size_t p = 0; p < kLanePoints; ++p) pts.push_back({static_cast<double>(p), 0.0, p == 5 ? 3.0 : 0.0});
  EXPECT_NEAR(l1_lane_loss(straight(0, 0), LaneLine(pts)), 3.0 / 33.0, 1e-15);
  EXPECT_THROW(l1_lane_loss(straight(0, 0), LaneLine({{0, 0, 0}, {1, 0, 0}})), InvalidInput);
}

TEST(HungarianMatch, PrefersCloseConfidentPredictions) {
  LaneGraph gt{{straight(0, 0), straight(0, 10)}, {}};
  Prediction p;
  p.scene_id = "s";
  p.lanes = {straight(0, 10.2), straight(0, 50), straight(0, 0.1)};
  p.scores = {0.9, 0.99, 0.8};
  p.topology = TopologyMatrix(3, 0.0, true);
  const MatchResult m = hungarian_match(p, gt, LossWeights{});
  ASSERT_EQ(m.assignment.size(), 2u);
  const auto gt_of = m.gt_of(3);
  EXPECT_EQ(gt_of[0], 1u);
  EXPECT_EQ(gt_of[2], 0u);
  EXPECT_EQ(gt_of[1], MatchResult::npos);
  EXPECT_EQ(m.unmatched_predictions, std::vector<std::size_t>{1});
}

TEST(HungarianMatch, EmptySides) {
  Prediction p;
  p.lanes = {straight(0, 0)};
  p.scores = {0.5};
  const MatchResult a = hungarian_match(p, LaneGraph{}, LossWeights{});
  EXPECT_TRUE(a.assignment.empty());
  EXPECT_EQ(a.unmatched_predictions.size(), 1u);
  const MatchResult b = hungarian_match(Prediction{}, LaneGraph{{straight(0, 0)}, {}}, LossWeights{});
  EXPECT_EQ(b.unmatched_ground_truths.size(), 1u);
}

TEST(MatchingCost, Formula) {
  LaneGraph gt{{straight(0, 0)}, {}};
  const std::vector<LaneLine> lanes{straight(0, 1)};
  const std::vector<double> scores{0.75};
  const CostMatrix c = matching_cost(scores, lanes, gt, LossWeights{2.0, 3.0, 1.0});
  EXPECT_NEAR(c(0, 0), 2.0 * 0.25 + 3.0 / 3.0, 1e-15);
}

TEST(TopologyTargets, MatchedEdgesOnlyAndNoDiagonal) {
  LaneGraph gt{{straight(0, 0), straight(11, 0), straight(22, 0)}, {{0, 1}, {1, 2}}};
  MatchResult m;
  m.assignment = {{0, 1}, {1, 2}, {3, 0}};
  const TopologyTargets t = topology_targets(4, gt, m);
  EXPECT_EQ(t.labels(0, 1), 1.0);  // gt 1 -> 2
  EXPECT_EQ(t.labels(3, 0), 1.0);  // gt 0 -> 1
  EXPECT_EQ(t.labels(1, 0), 0.0);
  EXPECT_EQ(t.labels(2, 0), 0.0);  // unmatched prediction
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(t.mask(i, i), 0.0);
  EXPECT_EQ(t.mask(2, 0), 1.0);
}

TEST(TopologyLoss, PerfectIsSmallAndUniformHalfMatchesClosedForm) {
  LaneGraph gt{{straight(0, 0), straight(11, 0), straight(22, 0)}, {{0, 1}, {1, 2}}};
  MatchResult m;
  m.assignment = {{0, 0}, {1, 1}, {2, 2}};
  Tape t;
  Matrix perfect(3, 3);
  perfect(0, 1) = perfect(1, 2) = 1.0;
  EXPECT_LT(topology_loss(t.constant(perfect), gt, m).value().item(), 1e-3);
  // Six off-diagonal entries, two positive: mean of 0.25^2 * ln 2 weighted by alpha.
  const double half = topology_loss(t.constant(Matrix(3, 3, 0.5)), gt, m).value().item();
  const double expect = 0.25 * std::log(2.0) * (2.0 * 0.25 + 4.0 * 0.75) / 6.0;
  EXPECT_NEAR(half, expect, 1e-12);
  const double bce = topology_loss(t.constant(Matrix(3, 3, 0.5)), gt, m, TopologyLossKind::bce).value().item();
  EXPECT_NEAR(bce, std::log(2.0), 1e-12);
}

TEST(TopologyLoss, NoEdgesStillDefined) {
  LaneGraph gt{{straight(0, 0), straight(0, 10)}, {}};
  MatchResult m;
  m.assignment = {{0, 0}, {1, 1}};
  Tape t;
  const double v = topology_loss(t.constant(Matrix(2, 2, 0.01)), gt, m).value().item();
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_LT(v, 1e-5);
}

TEST(Routing, GeometricParametersSeeOnlyTheDetectionLoss) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto r = cases::routing_report(seed);
    EXPECT_GT(r.det_only.geo, 0.0) << seed;
    EXPECT_EQ(r.top_only.geo, 0.0) << seed;
    EXPECT_EQ(r.zero_det_weights.geo, 0.0) << seed;
    EXPECT_GT(r.top_with_gdis.geo, 0.0) << seed;
  }
}

TEST(Routing, EveryOtherGroupIsReachedAsDocumented) {
  const auto r = cases::routing_report(4);
  EXPECT_GT(r.top_only.sim, 0.0);
  EXPECT_GT(r.top_only.encoder, 0.0);
  EXPECT_EQ(r.top_only.head, 0.0);
  EXPECT_EQ(r.top_only.fusion, 0.0);
  EXPECT_EQ(r.top_only.aggregation, 0.0);
  EXPECT_GT(r.det_only.sim, 0.0);
  EXPECT_GT(r.det_only.encoder, 0.0);
  EXPECT_GT(r.det_only.fusion, 0.0);
  EXPECT_GT(r.det_only.aggregation, 0.0);
  EXPECT_GT(r.det_only.head, 0.0);
}

TEST(Routing, GeodistHeadHasNoSimilarityParameters) {
  ModelConfig mc;
  mc.head = HeadMode::geodist;
  Model m = Model::init(mc);
  bool saw_sim = false;
  m.for_each_parameter([&](nn::Parameter& p) { saw_sim |= p.name.starts_with("sim"); });
  EXPECT_FALSE(saw_sim);
  const Scene s = generate_scene(preset_config(Layout::fork, 3));
  Tape t;
  const ForwardPass pass = m.forward(t, perturb_scene(s, NoiseConfig{}));
  EXPECT_FALSE(pass.supervised.has_value());
  const auto l = scene_losses(pass, s.graph, TrainConfig{});
  EXPECT_EQ(l.top, 0.0);
}

TEST(Train, ZeroLearningRateLeavesParametersUntouched) {
  const auto scenes = small_dataset(4, 1);
  TrainConfig tc;
  tc.epochs = 2;
  tc.adam.lr = 0.0;
  TrainState s = make_train_state(ModelConfig{}, tc);
  const std::string before = io::dump(io::checkpoint_to_json(s.model, 0, 0));
  train(s, scenes, tc);
  EXPECT_EQ(s.optimizer.step, 4u);
  EXPECT_EQ(io::dump(io::checkpoint_to_json(s.model, 0, 0)), before);
}

TEST(Train, DeterministicCheckpoints) {
  const auto scenes = small_dataset(6, 2);
  TrainConfig tc;
  tc.epochs = 2;
  tc.seed = 9;
  auto run = [&] {
    TrainState s = make_train_state(ModelConfig{}, tc);
    train(s, scenes, tc);
    return checkpoint_text(s.model, s);
  };
  const std::string a = run();
  EXPECT_EQ(a, run());
  tc.seed = 10;
  EXPECT_NE(a, run());
}

TEST(Train, LogRecordsEveryStep) {
  const auto scenes = small_dataset(5, 3);
  TrainConfig tc;
  tc.epochs = 1;
  std::vector<LogRecord> recs;
  TrainState s = make_train_state(ModelConfig{}, tc);
  train(s, scenes, tc, [&](const LogRecord& r) { recs.push_back(r); });
  ASSERT_EQ(recs.size(), 3u);
  for (std::size_t k = 0; k < recs.size(); ++k) {
    EXPECT_EQ(recs[k].step, k + 1);
    EXPECT_GT(recs[k].l_det, 0.0);
    EXPECT_GT(recs[k].alpha, 0.0);
  }
}

TEST(Train, OverfitsASingleScene) {
  const std::vector<Scene> scenes{generate_scene(preset_config(Layout::fork, 5))};
  TrainConfig tc;
  tc.epochs = 500;
  tc.batch_size = 1;
  tc.noise.endpoint_sigma = 0.0;
  std::vector<double> totals;
  TrainState s = make_train_state(ModelConfig{}, tc);
  train(s, scenes, tc, [&](const LogRecord& r) { totals.push_back(r.l_det + r.l_top); });
  ASSERT_EQ(totals.size(), 500u);
  std::vector<double> blocks;
  for (std::size_t b = 0; b < 50; ++b) {
    double m = 0.0;
    for (std::size_t k = 0; k < 10; ++k) m += totals[10 * b + k];
    blocks.push_back(m / 10.0);
  }
  for (std::size_t b = 1; b < blocks.size(); ++b) EXPECT_LE(blocks[b], blocks[b - 1]) << "block " << b;
  EXPECT_LT(blocks.back(), 0.5 * blocks.front());
}

TEST(Train, NumericalErrorNamesSceneAndStep) {
  auto scenes = small_dataset(3, 4);
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 1;
  TrainState s = make_train_state(ModelConfig{}, tc);
  // Every pre-activation is positive and the second product overflows.
  for (auto& layer : s.model.encoder.mlp.layers) {
    for (auto& v : layer.weight.value.values()) v = 1e300;
    for (auto& v : layer.bias.value.values()) v = 1e300;
  }
  try {
    train(s, scenes, tc);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(scenes[0].id), std::string::npos) << msg;
    EXPECT_NE(msg.find("step 0"), std::string::npos) << msg;
  }
}

TEST(Train, RejectsBadConfig) {
  const auto scenes = small_dataset(2, 5);
  TrainConfig tc;
  tc.epochs = 0;
  TrainState s = make_train_state(ModelConfig{}, TrainConfig{});
  EXPECT_THROW(train_epoch(s, scenes, tc), InvalidInput);
  tc.epochs = 1;
  tc.weights.cls = -1.0;
  EXPECT_THROW(train_epoch(s, scenes, tc), InvalidInput);
  EXPECT_THROW(train_epoch(s, std::vector<Scene>{}, TrainConfig{}), InvalidInput);
}

TEST(Train, EpochNoiseSeedsDiffer) {
  EXPECT_NE(epoch_noise_seed(1, 0, 0), epoch_noise_seed(1, 1, 0));
  EXPECT_NE(epoch_noise_seed(1, 0, 0), epoch_noise_seed(1, 0, 1));
  EXPECT_EQ(epoch_noise_seed(1, 2, 3), epoch_noise_seed(1, 2, 3));
}
