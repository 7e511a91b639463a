#include <gtest/gtest.h>

#include <filesystem>

#include "oracles.hpp"
#include "topologic/io.hpp"

using namespace topologic;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("topologic_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

io::Json checkpoint_json() {
  ModelConfig mc;
  mc.query_dim = 4;
  mc.hidden_dim = 5;
  Model m = Model::init(mc);
  return io::checkpoint_to_json(m, 3, 12);
}

}  // namespace

TEST(Io, SceneRoundTrip) {
  const Scene s = generate_scene(preset_config(Layout::grid_intersection, 4));
  const io::Json j = io::scene_to_json(s);
  const Scene back = io::scene_from_json(j);
  EXPECT_EQ(back.id, s.id);
  EXPECT_EQ(back.graph.lanes, s.graph.lanes);
  EXPECT_EQ(back.graph.edges, s.graph.edges);
  EXPECT_EQ(io::dump(io::scene_to_json(back)), io::dump(j));
}

TEST(Io, CandidatesRoundTrip) {
  const Scene s = generate_scene(preset_config(Layout::fork, 5));
  NoiseConfig n;
  n.distractor_count = 2;
  const CandidateSet c = perturb_scene(s, n);
  const CandidateSet back = io::candidates_from_json(io::candidates_to_json(c));
  EXPECT_EQ(back.scene_id, c.scene_id);
  EXPECT_EQ(back.candidates, c.candidates);
  EXPECT_EQ(io::dump(io::candidates_to_json(back)), io::dump(io::candidates_to_json(c)));
}

TEST(Io, PredictionRoundTrip) {
  ModelConfig mc;
  mc.head = HeadMode::fused;
  Model m = Model::init(mc);
  const Scene s = generate_scene(preset_config(Layout::merge, 6));
  const Prediction p = m.predict(perturb_scene(s, NoiseConfig{}));
  const Prediction back = io::prediction_from_json(io::prediction_to_json(p));
  EXPECT_EQ(back.lanes, p.lanes);
  EXPECT_EQ(back.scores, p.scores);
  EXPECT_EQ(back.topology.values, p.topology.values);
  EXPECT_EQ(back.meta, p.meta);
}

TEST(Io, PredictionRejectsMismatchedLists) {
  const Scene s = generate_scene(preset_config(Layout::fork, 7));
  io::Json j = io::prediction_to_json(oracle::perfect_prediction(s));
  j["scores"].erase(0);
  EXPECT_THROW(io::prediction_from_json(j), InvalidInput);
  j = io::prediction_to_json(oracle::perfect_prediction(s));
  j["topology"][0].erase(0);
  EXPECT_THROW(io::prediction_from_json(j), InvalidInput);
  j = io::prediction_to_json(oracle::perfect_prediction(s));
  j["topology"][0][1] = 1.5;
  EXPECT_THROW(io::prediction_from_json(j), InvalidInput);
  j = io::prediction_to_json(oracle::perfect_prediction(s));
  j.erase("lanes");
  EXPECT_THROW(io::prediction_from_json(j), InvalidInput);
}

TEST(Io, CheckpointRoundTripIsExact) {
  const io::Json j = checkpoint_json();
  io::Checkpoint c = io::checkpoint_from_json(j);
  EXPECT_EQ(c.epoch, 3u);
  EXPECT_EQ(c.step, 12u);
  EXPECT_EQ(io::dump(io::checkpoint_to_json(c.model, c.epoch, c.step)), io::dump(j));
}

TEST(Io, CheckpointValidation) {
  {
    io::Json j = checkpoint_json();
    j["parameters"][0]["rows"] = 99;
    EXPECT_THROW(io::checkpoint_from_json(j), InvalidInput);
  }
  {
    io::Json j = checkpoint_json();
    j["parameters"].erase(1);
    try {
      io::checkpoint_from_json(j);
      FAIL();
    } catch (const InvalidInput& e) {
      EXPECT_NE(std::string(e.what()).find("missing"), std::string::npos);
    }
  }
  {
    io::Json j = checkpoint_json();
    j["parameters"].push_back(j["parameters"][0]);
    EXPECT_THROW(io::checkpoint_from_json(j), InvalidInput);
  }
  {
    io::Json j = checkpoint_json();
    j["parameters"][0]["name"] = "nope";
    EXPECT_THROW(io::checkpoint_from_json(j), InvalidInput);
  }
  {
    io::Json j = checkpoint_json();
    j["parameters"][0]["values"].erase(0);
    EXPECT_THROW(io::checkpoint_from_json(j), InvalidInput);
  }
  {
    io::Json j = checkpoint_json();
    j["format"] = "something.else";
    EXPECT_THROW(io::checkpoint_from_json(j), InvalidInput);
  }
  {
    io::Json j = checkpoint_json();
    j["parameters"][0]["values"][0] = "x";
    EXPECT_THROW(io::checkpoint_from_json(j), InvalidInput);
  }
}

TEST(Io, ModelConfigRoundTrip) {
  ModelConfig mc;
  mc.head = HeadMode::geodist;
  mc.mapping = MappingKind::tanh_based;
  mc.mapping_init = {0.3, 1.5};
  mc.std_mode = StdMode::sample;
  mc.encoding = FeatureEncoding::absolute;
  mc.init_scheme = nn::InitScheme::fan_in;
  mc.fixed_queries = true;
  mc.num_queries = 7;
  mc.init_seed = 1234567890123ULL;
  EXPECT_EQ(config_hash(io::model_config_from_json(io::model_config_to_json(mc))), config_hash(mc));
}

TEST(Io, DatasetFilesAndErrors) {
  const fs::path dir = scratch("dataset");
  const auto scenes = make_dataset(3, 2, kAllLayouts);
  io::Manifest m;
  m.seed = 2;
  m.layout = "all";
  for (const auto& s : scenes) {
    io::write_json(dir / "scenes" / (s.id + ".json"), io::scene_to_json(s));
    m.scenes.push_back("scenes/" + s.id + ".json");
  }
  io::write_json(dir / "manifest.json", io::manifest_to_json(m));
  const io::Dataset d = io::load_dataset(dir / "manifest.json");
  ASSERT_EQ(d.scenes.size(), 3u);
  EXPECT_EQ(d.scenes[1].graph.edges, scenes[1].graph.edges);
  EXPECT_TRUE(d.candidates.empty());

  EXPECT_THROW(io::load_dataset(dir / "missing.json"), InvalidInput);
  io::write_text(dir / "broken.json", "{ not json");
  EXPECT_THROW(io::read_json(dir / "broken.json"), InvalidInput);
  m.scenes.push_back("scenes/absent.json");
  io::write_json(dir / "manifest2.json", io::manifest_to_json(m));
  EXPECT_THROW(io::load_dataset(dir / "manifest2.json"), InvalidInput);
}

TEST(Io, MetricsCsvAndJson) {
  MetricsReport r;
  r.det_l = 0.5;
  r.top_ll = 0.25;
  r.ols_lane_only = 0.5;
  EXPECT_EQ(io::metrics_csv_row("x", r), "x,0.500000,0.250000,0.500000\n");
  const io::Json j = io::metrics_to_json(r);
  EXPECT_EQ(j.at("det_l").get<double>(), 0.5);
  EXPECT_TRUE(j.at("det_ap").contains("1"));
}

TEST(Io, LogLineIsOneJsonObject) {
  const std::string line = io::log_line(LogRecord{3, 0.5, 0.25, 0.2, 2.0, 1.0, 1.0});
  EXPECT_EQ(line.back(), '\n');
  EXPECT_EQ(std::count(line.begin(), line.end(), '\n'), 1);
  const io::Json j = io::Json::parse(line);
  EXPECT_EQ(j.at("step").get<int>(), 3);
}
