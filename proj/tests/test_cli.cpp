#include <gtest/gtest.h>

#include <sstream>

#include "cli.hpp"
#include "oracles.hpp"

using namespace topologic;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string log;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  std::ostringstream log, err;
  const int code = cli::run(args, log, err);
  return {code, log.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("topologic_cli_" + name);
  fs::remove_all(p);
  return p;
}

/// Every regular file under `root` with its bytes, keyed by relative path.
std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = io::read_text(e.path());
  return out;
}

/// Artifacts that should not differ between runs in different directories.
std::map<std::string, std::string> artifacts(const fs::path& root) {
  auto t = tree(root);
  t.erase("config.ini");
  return t;
}

fs::path gen(const std::string& name, std::vector<std::string> extra = {}) {
  const fs::path dir = scratch(name);
  std::vector<std::string> args{"gen", "--scenes", "6", "--seed", "3", "--out", dir.string()};
  args.insert(args.end(), extra.begin(), extra.end());
  const Outcome o = run(args);
  EXPECT_EQ(o.code, 0) << o.err;
  return dir;
}

}  // namespace

TEST(Cli, GenIsDeterministic) {
  const fs::path a = scratch("gen_a"), b = scratch("gen_b");
  for (const auto& d : {a, b})
    ASSERT_EQ(run({"gen", "--layout", "fork", "--scenes", "100", "--seed", "1", "--out", d.string()}).code, 0);
  EXPECT_EQ(io::read_text(a / "manifest.json"), io::read_text(b / "manifest.json"));
  EXPECT_EQ(artifacts(a), artifacts(b));
  EXPECT_EQ(artifacts(a).size(), 201u);
  const fs::path c = scratch("gen_c");
  ASSERT_EQ(run({"gen", "--layout", "fork", "--scenes", "100", "--seed", "2", "--out", c.string()}).code, 0);
  EXPECT_NE(io::read_text(a / "manifest.json"), io::read_text(c / "manifest.json"));
}

TEST(Cli, ConfigEchoReproducesTheRun) {
  const fs::path a = gen("echo_a", {"--layout", "merge", "--sigma", "0.5"});
  const fs::path b = scratch("echo_b");
  const Outcome o = run({"gen", "--config", (a / "config.ini").string(), "--out", b.string()});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_EQ(artifacts(a), artifacts(b));
  EXPECT_NE(io::read_text(a / "config.ini").find("layout"), std::string::npos);
}

TEST(Cli, TrainAndEvalAreDeterministic) {
  const fs::path data = gen("train_data");
  const fs::path tdir = scratch("train"), edir = scratch("eval");
  std::map<std::string, std::string> first_train, first_eval;
  for (int rep = 0; rep < 2; ++rep) {
    fs::remove_all(tdir);
    fs::remove_all(edir);
    const Outcome t = run({"train", "--data", (data / "manifest.json").string(), "--epochs", "2", "--head", "geodist",
                           "--out", tdir.string()});
    ASSERT_EQ(t.code, 0) << t.err;
    EXPECT_TRUE(fs::exists(tdir / "checkpoints" / "epoch-002.json"));
    const Outcome e = run({"eval", "--data", (data / "manifest.json").string(), "--checkpoint",
                           (tdir / "model.json").string(), "--out", edir.string()});
    ASSERT_EQ(e.code, 0) << e.err;
    if (rep == 0) {
      first_train = tree(tdir);
      first_eval = tree(edir);
    } else {
      EXPECT_EQ(tree(tdir), first_train);
      EXPECT_EQ(tree(edir), first_eval);
    }
  }
  EXPECT_TRUE(first_train.contains("train_log.jsonl"));
  EXPECT_TRUE(first_eval.contains("metrics.csv"));
  EXPECT_EQ(first_eval.at("metrics.csv").rfind(io::kMetricsCsvHeader, 0), 0u);
}

TEST(Cli, EvalOfGroundTruthScoresOne) {
  const fs::path data = gen("perfect_data");
  const io::Dataset d = io::load_dataset(data / "manifest.json");
  const fs::path preds = scratch("perfect_preds");
  for (const auto& s : d.scenes) io::write_json(preds / (s.id + ".json"), io::prediction_to_json(oracle::perfect_prediction(s)));
  const fs::path out = scratch("perfect_eval");
  const Outcome o = run({"eval", "--data", (data / "manifest.json").string(), "--predictions", preds.string(), "--out",
                         out.string()});
  ASSERT_EQ(o.code, 0) << o.err;
  const io::Json m = io::read_json(out / "metrics.json");
  EXPECT_NEAR(m.at("det_l").get<double>(), 1.0, 1e-9);
  EXPECT_NEAR(m.at("top_ll").get<double>(), 1.0, 1e-9);
  EXPECT_NEAR(m.at("ols_lane_only").get<double>(), 1.0, 1e-9);
  EXPECT_EQ(m.at("config").at("ols_variant").get<std::string>(), "lane-only");
}

TEST(Cli, PostprocessKeepsDetection) {
  const fs::path data = gen("pp_data");
  const io::Dataset d = io::load_dataset(data / "manifest.json");
  const fs::path preds = scratch("pp_preds");
  for (const auto& s : d.scenes) {
    Prediction p = oracle::perfect_prediction(s);
    for (auto& v : p.topology.values) v = 0.0;
    io::write_json(preds / (s.id + ".json"), io::prediction_to_json(p));
  }
  const fs::path out = scratch("pp_out");
  const Outcome o = run({"postprocess", "--data", (data / "manifest.json").string(), "--predictions", preds.string(),
                         "--out", out.string()});
  ASSERT_EQ(o.code, 0) << o.err;
  const io::Json before = io::read_json(out / "metrics_before.json");
  const io::Json after = io::read_json(out / "metrics_after.json");
  EXPECT_EQ(before.at("det_l"), after.at("det_l"));
  EXPECT_EQ(before.at("top_ll").get<double>(), 0.0);
  EXPECT_GT(after.at("top_ll").get<double>(), 0.5);
  EXPECT_EQ(tree(out / "predictions").size(), d.scenes.size());
}

TEST(Cli, AblateMappingOnFrozenCheckpoint) {
  const fs::path data = gen("am_data");
  const fs::path tdir = scratch("am_train");
  ASSERT_EQ(run({"train", "--data", (data / "manifest.json").string(), "--epochs", "1", "--head", "geodist", "--out",
                 tdir.string()})
                .code,
            0);
  const fs::path out = scratch("am_out");
  const Outcome o = run({"ablate-mapping", "--test-data", (data / "manifest.json").string(), "--checkpoint",
                         (tdir / "model.json").string(), "--out", out.string()});
  ASSERT_EQ(o.code, 0) << o.err;
  const std::string csv = io::read_text(out / "ablate_mapping.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  EXPECT_EQ(csv.rfind("mapping,det_l,top_ll,ols_lane_only\n", 0), 0u);
  for (const char* kind : {"\nours,", "\ngaussian,", "\nsigmoid,", "\ntanh,"}) EXPECT_NE(csv.find(kind), std::string::npos);
}

TEST(Cli, CurvesTable) {
  const fs::path out = scratch("curves");
  ASSERT_EQ(run({"curves", "--curve-count", "11", "--out", out.string()}).code, 0);
  const std::string csv = io::read_text(out / "curves.csv");
  EXPECT_EQ(csv.rfind("x,ours,gaussian,sigmoid,tanh\n0,1,1,1,1\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 12);
  EXPECT_EQ(run({"curves", "--curve-count", "0", "--out", out.string()}).code, 1);
}

TEST(Cli, UsageErrorsExitOne) {
  const fs::path out = scratch("usage");
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  EXPECT_EQ(run({"gen", "--no-such-flag", "--out", out.string()}).code, 1);
  EXPECT_EQ(run({"train", "--head", "bogus", "--out", out.string()}).code, 1);
  EXPECT_EQ(run({"eval", "--out", out.string()}).code, 1);
  EXPECT_EQ(run({"gen", "--sigma", "-1", "--out", out.string()}).code, 1);
  EXPECT_EQ(run({"gen", "--scenes", "0", "--out", out.string()}).code, 1);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST(Cli, BadInputExitsTwo) {
  const fs::path out = scratch("bad");
  EXPECT_EQ(run({"eval", "--data", (out / "nope.json").string(), "--predictions", "x", "--out", out.string()}).code, 2);
  io::write_text(out / "broken.json", "{");
  const Outcome o = run({"train", "--data", (out / "broken.json").string(), "--out", out.string()});
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("broken.json"), std::string::npos);
  EXPECT_EQ(run({"gen", "--layout", "spiral", "--out", out.string()}).code, 2);
  EXPECT_EQ(run({"gen", "--drop-prob", "2", "--out", out.string()}).code, 2);
}

TEST(Cli, NumericalFailureExitsThreeWithLogPointer) {
  const fs::path data = gen("nan_data");
  const fs::path out = scratch("nan_train");
  const Outcome o = run({"train", "--data", (data / "manifest.json").string(), "--epochs", "3", "--lr", "1e200",
                         "--out", out.string()});
  EXPECT_EQ(o.code, 3) << o.err;
  EXPECT_NE(o.err.find("train_log.jsonl"), std::string::npos) << o.err;
  EXPECT_NE(o.err.find("scene '"), std::string::npos) << o.err;
}
