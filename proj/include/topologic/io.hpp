#pragma once

// JSON artifacts: scenes, candidate sets, manifests, checkpoints,
// predictions, metrics reports and the training log. Objects keep insertion
// order and doubles print in shortest round-trip form, so equal inputs give
// byte-identical files.

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "topologic/eval.hpp"
#include "topologic/training.hpp"

namespace topologic::io {

using Json = nlohmann::ordered_json;

inline constexpr int kFormatVersion = 1;

// Field access that reports which field was wrong.

inline const Json& field(const Json& j, const char* key) {
  if (!j.is_object()) throw InvalidInput(std::string("expected an object holding '") + key + "'");
  auto it = j.find(key);
  if (it == j.end()) throw InvalidInput(std::string("missing field '") + key + "'");
  return *it;
}

inline double number(const Json& j, const char* what) {
  if (!j.is_number()) throw InvalidInput(std::string("field '") + what + "' must be a number");
  return j.get<double>();
}

// Parsed text yields unsigned integers; values built in memory may be signed.
inline bool nonnegative_integer(const Json& j) {
  return j.is_number_unsigned() || (j.is_number_integer() && j.get<std::int64_t>() >= 0);
}

inline std::size_t count(const Json& j, const char* what) {
  if (!nonnegative_integer(j)) throw InvalidInput(std::string("field '") + what + "' must be a nonnegative integer");
  return j.get<std::size_t>();
}

inline std::uint64_t seed_value(const Json& j, const char* what) {
  if (!nonnegative_integer(j)) throw InvalidInput(std::string("field '") + what + "' must be a nonnegative integer");
  return j.get<std::uint64_t>();
}

inline std::string text(const Json& j, const char* what) {
  if (!j.is_string()) throw InvalidInput(std::string("field '") + what + "' must be a string");
  return j.get<std::string>();
}

inline const Json& array(const Json& j, const char* what) {
  if (!j.is_array()) throw InvalidInput(std::string("field '") + what + "' must be an array");
  return j;
}

inline void expect_format(const Json& j, const std::string& format) {
  if (text(field(j, "format"), "format") != format) throw InvalidInput("expected a '" + format + "' file");
  const auto v = count(field(j, "version"), "version");
  if (v != kFormatVersion) throw InvalidInput("unsupported " + format + " version " + std::to_string(v));
}

// Files.

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

inline Json read_json(const std::filesystem::path& path) {
  const std::string s = read_text(path);
  try {
    return Json::parse(s);
  } catch (const Json::parse_error& e) {
    throw InvalidInput("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

inline void write_json(const std::filesystem::path& path, const Json& j) { write_text(path, dump(j)); }

// Geometry.

inline Json lane_to_json(const LaneLine& lane) {
  Json pts = Json::array();
  for (const auto& p : lane.points()) pts.push_back({p.x, p.y, p.z});
  return pts;
}

inline LaneLine lane_from_json(const Json& j) {
  array(j, "lane");
  std::vector<Point3> pts;
  for (const auto& p : j) {
    if (!p.is_array() || p.size() != 3) throw InvalidInput("lane points must be [x, y, z] triples");
    pts.push_back({number(p[0], "x"), number(p[1], "y"), number(p[2], "z")});
  }
  return LaneLine(std::move(pts));
}

inline Json lanes_to_json(std::span<const LaneLine> lanes) {
  Json a = Json::array();
  for (const auto& l : lanes) a.push_back(lane_to_json(l));
  return a;
}

inline std::vector<LaneLine> lanes_from_json(const Json& j) {
  std::vector<LaneLine> lanes;
  for (const auto& l : array(j, "lanes")) lanes.push_back(lane_from_json(l));
  return lanes;
}

inline Json string_map_to_json(const std::map<std::string, std::string>& m) {
  Json o = Json::object();
  for (const auto& [k, v] : m) o[k] = v;
  return o;
}

inline std::map<std::string, std::string> string_map_from_json(const Json& j, const char* what) {
  if (!j.is_object()) throw InvalidInput(std::string("field '") + what + "' must be an object");
  std::map<std::string, std::string> m;
  for (const auto& [k, v] : j.items()) m[k] = text(v, what);
  return m;
}

// Scenes.

inline Json scene_to_json(const Scene& s) {
  Json edges = Json::array();
  for (const auto& [i, k] : s.graph.edges) edges.push_back({i, k});
  return Json{{"id", s.id},
              {"lanes", lanes_to_json(s.graph.lanes)},
              {"edges", edges},
              {"metadata", string_map_to_json(s.metadata)}};
}

inline Scene scene_from_json(const Json& j) {
  Scene s;
  s.id = text(field(j, "id"), "id");
  s.graph.lanes = lanes_from_json(field(j, "lanes"));
  for (const auto& e : array(field(j, "edges"), "edges")) {
    if (!e.is_array() || e.size() != 2) throw InvalidInput("edges must be [i, j] pairs");
    s.graph.edges.emplace(count(e[0], "edge"), count(e[1], "edge"));
  }
  s.metadata = string_map_from_json(field(j, "metadata"), "metadata");
  const ValidationReport r = validate_scene(s, false);
  if (!r.ok()) throw InvalidInput("scene '" + s.id + "': " + r.violations.front().message);
  return s;
}

// Candidate sets. An origin is the true lane index, or null for a distractor.

inline Json candidates_to_json(const CandidateSet& c) {
  Json origins = Json::array();
  for (const auto& o : c.origins) origins.push_back(o.true_lane ? Json(*o.true_lane) : Json(nullptr));
  return Json{{"id", c.scene_id}, {"lanes", lanes_to_json(c.candidates)}, {"origins", origins}};
}

inline CandidateSet candidates_from_json(const Json& j) {
  CandidateSet c;
  c.scene_id = text(field(j, "id"), "id");
  c.candidates = lanes_from_json(field(j, "lanes"));
  for (const auto& o : array(field(j, "origins"), "origins")) {
    c.origins.push_back(o.is_null() ? CandidateOrigin{} : CandidateOrigin{count(o, "origin")});
  }
  if (c.origins.size() != c.candidates.size()) throw InvalidInput("candidate set '" + c.scene_id + "': origin count differs from lanes");
  return c;
}

// Dataset manifest.

struct Manifest {
  std::uint64_t seed = 0;
  std::uint64_t noise_seed = 0;
  std::string layout;
  NoiseConfig noise{};
  /// Paths relative to the manifest's directory.
  std::vector<std::string> scenes;
  std::vector<std::string> candidates;
};

inline Json manifest_to_json(const Manifest& m) {
  return Json{{"format", "topologic.manifest"},
              {"version", kFormatVersion},
              {"seed", m.seed},
              {"noise_seed", m.noise_seed},
              {"layout", m.layout},
              {"noise",
               {{"endpoint_sigma", m.noise.endpoint_sigma},
                {"drop_prob", m.noise.drop_prob},
                {"distractor_count", m.noise.distractor_count}}},
              {"scenes", m.scenes},
              {"candidates", m.candidates}};
}

inline Manifest manifest_from_json(const Json& j) {
  expect_format(j, "topologic.manifest");
  Manifest m;
  m.seed = seed_value(field(j, "seed"), "seed");
  m.noise_seed = seed_value(field(j, "noise_seed"), "noise_seed");
  m.layout = text(field(j, "layout"), "layout");
  const Json& n = field(j, "noise");
  m.noise.endpoint_sigma = number(field(n, "endpoint_sigma"), "endpoint_sigma");
  m.noise.drop_prob = number(field(n, "drop_prob"), "drop_prob");
  m.noise.distractor_count = count(field(n, "distractor_count"), "distractor_count");
  m.noise.validate();
  for (const auto& p : array(field(j, "scenes"), "scenes")) m.scenes.push_back(text(p, "scenes"));
  for (const auto& p : array(field(j, "candidates"), "candidates")) m.candidates.push_back(text(p, "candidates"));
  if (!m.candidates.empty() && m.candidates.size() != m.scenes.size()) {
    throw InvalidInput("manifest lists " + std::to_string(m.candidates.size()) + " candidate files for " +
                       std::to_string(m.scenes.size()) + " scenes");
  }
  return m;
}

struct Dataset {
  Manifest manifest;
  std::vector<Scene> scenes;
  std::vector<CandidateSet> candidates;
};

/// Loads a manifest and every file it lists.
inline Dataset load_dataset(const std::filesystem::path& manifest_path) {
  Dataset d;
  d.manifest = manifest_from_json(read_json(manifest_path));
  const auto base = manifest_path.parent_path();
  for (const auto& p : d.manifest.scenes) d.scenes.push_back(scene_from_json(read_json(base / p)));
  for (const auto& p : d.manifest.candidates) d.candidates.push_back(candidates_from_json(read_json(base / p)));
  for (std::size_t i = 0; i < d.candidates.size(); ++i) {
    if (d.candidates[i].scene_id != d.scenes[i].id) {
      throw InvalidInput("candidate file " + std::to_string(i) + " belongs to '" + d.candidates[i].scene_id +
                         "', expected '" + d.scenes[i].id + "'");
    }
  }
  return d;
}

// Model configuration and checkpoints.

inline const char* to_string(FeatureEncoding e) { return e == FeatureEncoding::absolute ? "absolute" : "segments"; }
inline const char* to_string(nn::InitScheme s) { return s == nn::InitScheme::he ? "he" : "fan_in"; }
inline const char* to_string(StdMode m) { return m == StdMode::population ? "population" : "sample"; }

inline FeatureEncoding parse_encoding(const std::string& s) {
  if (s == "absolute") return FeatureEncoding::absolute;
  if (s == "segments") return FeatureEncoding::segments;
  throw InvalidInput("unknown encoding '" + s + "'");
}

inline nn::InitScheme parse_init_scheme(const std::string& s) {
  if (s == "he") return nn::InitScheme::he;
  if (s == "fan_in") return nn::InitScheme::fan_in;
  throw InvalidInput("unknown init scheme '" + s + "'");
}

inline StdMode parse_std_mode(const std::string& s) {
  if (s == "population") return StdMode::population;
  if (s == "sample") return StdMode::sample;
  throw InvalidInput("unknown std mode '" + s + "'");
}

inline Json model_config_to_json(const ModelConfig& c) {
  return Json{{"head", to_string(c.head)},
              {"mapping", to_string(c.mapping)},
              {"alpha0", c.mapping_init.alpha},
              {"lambda0", c.mapping_init.lambda},
              {"std_mode", to_string(c.std_mode)},
              {"query_dim", c.query_dim},
              {"hidden_dim", c.hidden_dim},
              {"init_scheme", to_string(c.init_scheme)},
              {"aggregation_layers", c.aggregation_layers},
              {"zero_sim_diagonal", c.zero_sim_diagonal},
              {"encoding", to_string(c.encoding)},
              {"coord_scale", c.coord_scale},
              {"segment_scale", c.segment_scale},
              {"reg_init_scale", c.reg_init_scale},
              {"fixed_queries", c.fixed_queries},
              {"num_queries", c.num_queries},
              {"init_seed", c.init_seed}};
}

inline ModelConfig model_config_from_json(const Json& j) {
  ModelConfig c;
  c.head = parse_head_mode(text(field(j, "head"), "head"));
  c.mapping = parse_mapping_kind(text(field(j, "mapping"), "mapping"));
  c.mapping_init.alpha = number(field(j, "alpha0"), "alpha0");
  c.mapping_init.lambda = number(field(j, "lambda0"), "lambda0");
  c.std_mode = parse_std_mode(text(field(j, "std_mode"), "std_mode"));
  c.query_dim = count(field(j, "query_dim"), "query_dim");
  c.hidden_dim = count(field(j, "hidden_dim"), "hidden_dim");
  c.init_scheme = parse_init_scheme(text(field(j, "init_scheme"), "init_scheme"));
  c.aggregation_layers = count(field(j, "aggregation_layers"), "aggregation_layers");
  const Json& z = field(j, "zero_sim_diagonal");
  if (!z.is_boolean()) throw InvalidInput("field 'zero_sim_diagonal' must be a boolean");
  c.zero_sim_diagonal = z.get<bool>();
  c.encoding = parse_encoding(text(field(j, "encoding"), "encoding"));
  c.coord_scale = number(field(j, "coord_scale"), "coord_scale");
  c.segment_scale = number(field(j, "segment_scale"), "segment_scale");
  c.reg_init_scale = number(field(j, "reg_init_scale"), "reg_init_scale");
  const Json& f = field(j, "fixed_queries");
  if (!f.is_boolean()) throw InvalidInput("field 'fixed_queries' must be a boolean");
  c.fixed_queries = f.get<bool>();
  c.num_queries = count(field(j, "num_queries"), "num_queries");
  c.init_seed = seed_value(field(j, "init_seed"), "init_seed");
  c.validate();
  return c;
}

inline Json checkpoint_to_json(Model& model, std::size_t epoch, std::size_t step) {
  Json params = Json::array();
  model.for_each_parameter([&](nn::Parameter& p) {
    Json values = Json::array();
    for (double v : p.value.values()) values.push_back(v);
    params.push_back(Json{{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}, {"values", values}});
  });
  return Json{{"format", "topologic.checkpoint"},
              {"version", kFormatVersion},
              {"model_config", model_config_to_json(model.config)},
              {"epoch", epoch},
              {"step", step},
              {"parameters", params}};
}

struct Checkpoint {
  Model model;
  std::size_t epoch = 0;
  std::size_t step = 0;
};

/// Rebuilds the model from its config, then overwrites every parameter.
/// Names, shapes and the parameter set must match the config exactly.
inline Checkpoint checkpoint_from_json(const Json& j) {
  expect_format(j, "topologic.checkpoint");
  Checkpoint c{Model::init(model_config_from_json(field(j, "model_config"))), count(field(j, "epoch"), "epoch"),
               count(field(j, "step"), "step")};
  std::map<std::string, nn::Parameter*> by_name;
  c.model.for_each_parameter([&](nn::Parameter& p) { by_name[p.name] = &p; });
  std::set<std::string> seen;
  for (const auto& e : array(field(j, "parameters"), "parameters")) {
    const std::string name = text(field(e, "name"), "name");
    auto it = by_name.find(name);
    if (it == by_name.end()) throw InvalidInput("checkpoint parameter '" + name + "' does not exist in this model");
    if (!seen.insert(name).second) throw InvalidInput("checkpoint lists parameter '" + name + "' twice");
    const std::size_t rows = count(field(e, "rows"), "rows");
    const std::size_t cols = count(field(e, "cols"), "cols");
    nn::Matrix& target = it->second->value;
    if (rows != target.rows() || cols != target.cols()) {
      throw InvalidInput("checkpoint parameter '" + name + "' has shape " + std::to_string(rows) + "x" +
                         std::to_string(cols) + ", model expects " + target.shape());
    }
    const Json& values = array(field(e, "values"), "values");
    if (values.size() != rows * cols) throw InvalidInput("checkpoint parameter '" + name + "' has the wrong value count");
    for (std::size_t k = 0; k < values.size(); ++k) target[k] = number(values[k], "values");
  }
  for (const auto& [name, p] : by_name) {
    if (!seen.contains(name)) throw InvalidInput("checkpoint is missing parameter '" + name + "'");
  }
  return c;
}

// Predictions.

inline Json prediction_to_json(const Prediction& p) {
  Json topology = Json::array();
  for (std::size_t i = 0; i < p.topology.n; ++i) {
    Json row = Json::array();
    for (std::size_t k = 0; k < p.topology.n; ++k) row.push_back(p.topology(i, k));
    topology.push_back(row);
  }
  return Json{{"id", p.scene_id},
              {"lanes", lanes_to_json(p.lanes)},
              {"scores", p.scores},
              {"topology", topology},
              {"meta", string_map_to_json(p.meta)}};
}

inline Prediction prediction_from_json(const Json& j) {
  Prediction p;
  p.scene_id = text(field(j, "id"), "id");
  p.lanes = lanes_from_json(field(j, "lanes"));
  for (const auto& s : array(field(j, "scores"), "scores")) p.scores.push_back(number(s, "scores"));
  const Json& rows = array(field(j, "topology"), "topology");
  p.topology = TopologyMatrix(rows.size(), 0.0, true);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Json& row = array(rows[i], "topology row");
    if (row.size() != rows.size()) throw InvalidInput("topology must be square");
    for (std::size_t k = 0; k < row.size(); ++k) p.topology(i, k) = number(row[k], "topology");
  }
  if (j.contains("meta")) p.meta = string_map_from_json(j.at("meta"), "meta");
  for (const auto& lane : p.lanes)
    if (!lane.canonical()) throw InvalidInput("prediction '" + p.scene_id + "' has a non-canonical lane");
  p.validate();
  return p;
}

// Metrics.

inline Json metrics_to_json(const MetricsReport& r) {
  Json ap = Json::object();
  for (std::size_t t = 0; t < kDetThresholds.size(); ++t) {
    std::ostringstream key;
    key << kDetThresholds[t];
    ap[key.str()] = r.det_ap[t];
  }
  Json scenes = Json::array();
  for (const auto& s : r.scenes) {
    scenes.push_back(Json{{"id", s.scene_id},
                          {"det_l", s.det_l},
                          {"top_ll", s.top_ll ? Json(*s.top_ll) : Json(nullptr)},
                          {"predictions", s.predictions},
                          {"ground_truth", s.ground_truth}});
  }
  Json config = Json::object();
  for (const auto& [k, v] : r.config) config[k] = v;
  return Json{{"det_l", r.det_l},
              {"top_ll", r.top_ll},
              {"ols_lane_only", r.ols_lane_only},
              {"det_ap", ap},
              {"scored_topology_scenes", r.scored_topology_scenes},
              {"config", config},
              {"scenes", scenes}};
}

inline std::string format_number(double v) {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed << v;
  return os.str();
}

inline const char* kMetricsCsvHeader = "run,det_l,top_ll,ols_lane_only\n";

inline std::string metrics_csv_row(const std::string& run, const MetricsReport& r) {
  return run + "," + format_number(r.det_l) + "," + format_number(r.top_ll) + "," + format_number(r.ols_lane_only) + "\n";
}

// Training log: one JSON object per line.

inline std::string log_line(const LogRecord& r) {
  const Json j{{"step", r.step},          {"L_det", r.l_det},     {"L_top", r.l_top},     {"alpha", r.alpha},
               {"lambda", r.lambda},      {"lambda1", r.lambda1}, {"lambda2", r.lambda2}};
  return j.dump() + "\n";
}

}  // namespace topologic::io
