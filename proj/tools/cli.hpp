#pragma once

// The topologic command line. run() is the whole program so tests can drive
// it in-process; main() only forwards argv.
//
// Exit codes: 0 success, 1 usage error, 2 invalid input file, 3 numerical
// failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "topologic/experiment.hpp"
#include "topologic/io.hpp"

namespace topologic::cli {

namespace fs = std::filesystem;

enum ExitCode { kOk = 0, kUsage = 1, kBadInput = 2, kNumerical = 3 };

inline constexpr const char* kCommands[] = {"gen", "train", "eval", "ablate-mapping", "ablate-heads", "postprocess", "curves"};

struct Options {
  std::string command;
  std::uint64_t seed = 1;
  std::string out = "out";
  std::vector<double> sigma{0.3};
  std::string mapping = "ours";
  std::string fuse_rule = "max";

  // gen
  std::string layout = "all";
  std::size_t scenes = 100;
  double drop_prob = 0.0;
  std::size_t distractors = 0;

  // data and models
  std::string data;
  std::string test_data;
  std::string checkpoint;
  std::string predictions;
  std::string head = "fused";

  // training
  std::size_t epochs = 24;
  std::size_t batch = 2;
  double lr = 2e-4;
  double weight_decay = 0.01;
  std::string topology_loss = "focal";
  bool supervise_gdis = false;
  std::size_t query_dim = 32;
  std::size_t hidden_dim = 64;
  std::size_t aggregation_layers = 1;
  bool train_per_sigma = false;

  // post-processing and curves
  double alpha = 0.2;
  double lambda = 2.0;
  double score_threshold = 0.0;
  double curve_min = 0.0;
  double curve_max = 10.0;
  std::size_t curve_count = 201;
  double curve_std = 1.0;
};

/// Raised for missing or contradictory flags after parsing.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Context {
  Options opt;
  fs::path out;
  std::ostream& log;
};

// Shared helpers.

inline std::vector<Layout> layouts_for(const std::string& name) {
  if (name == "all") return {std::begin(kAllLayouts), std::end(kAllLayouts)};
  return {parse_layout(name)};
}

inline const std::string& require(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string("this command needs ") + flag);
  return value;
}

inline ModelConfig model_config(const Options& o, HeadMode head) {
  ModelConfig mc;
  mc.head = head;
  mc.mapping = parse_mapping_kind(o.mapping);
  mc.query_dim = o.query_dim;
  mc.hidden_dim = o.hidden_dim;
  mc.aggregation_layers = o.aggregation_layers;
  mc.init_seed = o.seed;
  mc.validate();
  return mc;
}

inline TopologyLossKind parse_topology_loss(const std::string& s) {
  if (s == "focal") return TopologyLossKind::focal;
  if (s == "bce") return TopologyLossKind::bce;
  throw InvalidInput("unknown topology loss '" + s + "'");
}

inline TrainConfig train_config(const Options& o, const NoiseConfig& data_noise, double sigma) {
  TrainConfig tc;
  tc.epochs = o.epochs;
  tc.batch_size = o.batch;
  tc.seed = o.seed;
  tc.adam.lr = o.lr;
  tc.adam.weight_decay = o.weight_decay;
  tc.topology_loss = parse_topology_loss(o.topology_loss);
  tc.supervise_gdis_directly = o.supervise_gdis;
  tc.noise = data_noise;
  tc.noise.endpoint_sigma = sigma;
  tc.validate();
  return tc;
}

inline std::string sigma_tag(double s) {
  std::ostringstream os;
  os << s;
  return os.str();
}

/// Trains on `scenes`, writing the JSONL log and the final checkpoint into
/// `dir`; with `per_epoch` set, also one checkpoint per epoch.
inline TrainState train_into(const fs::path& dir, const ModelConfig& mc, const TrainConfig& tc,
                             std::span<const Scene> scenes, bool per_epoch, std::ostream& log) {
  fs::create_directories(dir);
  const fs::path log_path = dir / "train_log.jsonl";
  std::ofstream log_file(log_path, std::ios::binary | std::ios::trunc);
  if (!log_file) throw std::runtime_error("cannot write '" + log_path.string() + "'");
  TrainState st = make_train_state(mc, tc);
  try {
    train(
        st, scenes, tc, [&](const LogRecord& r) { log_file << io::log_line(r); },
        [&](TrainState& s, const EpochMetrics& m) {
          log << "  " << to_string(mc.head) << " epoch " << s.epoch << "/" << tc.epochs << " L_det " << m.mean_det
              << " L_top " << m.mean_top << "\n";
          if (per_epoch) {
            char name[32];
            std::snprintf(name, sizeof name, "epoch-%03zu.json", s.epoch);
            io::write_json(dir / "checkpoints" / name,
                           io::checkpoint_to_json(s.model, s.epoch, s.optimizer.step));
          }
        });
  } catch (const NumericalError& e) {
    log_file.flush();
    throw NumericalError(std::string(e.what()) + " (training log: " + log_path.string() + ")");
  }
  io::write_json(dir / "model.json", io::checkpoint_to_json(st.model, st.epoch, st.optimizer.step));
  return st;
}

inline std::vector<CandidateSet> candidates_at(const io::Dataset& d, double sigma) {
  NoiseConfig n = d.manifest.noise;
  n.endpoint_sigma = sigma;
  return make_candidates(d.scenes, n, d.manifest.noise_seed);
}

inline std::vector<Prediction> load_predictions(const fs::path& dir, std::span<const Scene> scenes) {
  std::vector<Prediction> preds;
  for (const auto& s : scenes) {
    const fs::path p = dir / (s.id + ".json");
    Prediction pred = io::prediction_from_json(io::read_json(p));
    if (pred.scene_id != s.id) throw InvalidInput("'" + p.string() + "' holds predictions for '" + pred.scene_id + "'");
    preds.push_back(std::move(pred));
  }
  return preds;
}

inline void write_predictions(const fs::path& dir, std::span<const Prediction> preds) {
  for (const auto& p : preds) io::write_json(dir / (p.scene_id + ".json"), io::prediction_to_json(p));
}

inline void add_config(MetricsReport& r, const Options& o, std::initializer_list<std::pair<std::string, std::string>> extra) {
  r.config.emplace_back("fuse_rule", o.fuse_rule);
  r.config.emplace_back("mapping", o.mapping);
  r.config.emplace_back("topology_view", "calibrated");
  for (const auto& kv : extra) r.config.push_back(kv);
}

inline void print_metrics(std::ostream& log, const std::string& label, const MetricsReport& r) {
  log << label << ": DET_l " << io::format_number(r.det_l) << " TOP_ll " << io::format_number(r.top_ll)
      << " OLS(lane-only) " << io::format_number(r.ols_lane_only) << "\n";
}

// Commands.

inline int cmd_gen(Context& c) {
  const Options& o = c.opt;
  if (o.scenes == 0) throw UsageError("--scenes must be positive");
  const auto layouts = layouts_for(o.layout);
  const auto scenes = make_dataset(o.scenes, o.seed, layouts);
  io::Manifest m;
  m.seed = o.seed;
  m.noise_seed = mix_seed(o.seed, 1);
  m.layout = o.layout;
  m.noise.endpoint_sigma = o.sigma.front();
  m.noise.drop_prob = o.drop_prob;
  m.noise.distractor_count = o.distractors;
  m.noise.validate();
  const auto cands = make_candidates(scenes, m.noise, m.noise_seed);
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const std::string scene_path = "scenes/" + scenes[i].id + ".json";
    const std::string cand_path = "candidates/" + scenes[i].id + ".json";
    io::write_json(c.out / scene_path, io::scene_to_json(scenes[i]));
    io::write_json(c.out / cand_path, io::candidates_to_json(cands[i]));
    m.scenes.push_back(scene_path);
    m.candidates.push_back(cand_path);
  }
  io::write_json(c.out / "manifest.json", io::manifest_to_json(m));
  c.log << "wrote " << scenes.size() << " scenes to " << (c.out / "manifest.json").string() << "\n";
  return kOk;
}

inline int cmd_train(Context& c) {
  const Options& o = c.opt;
  const io::Dataset d = io::load_dataset(require(o.data, "--data"));
  const ModelConfig mc = model_config(o, parse_head_mode(o.head));
  const TrainConfig tc = train_config(o, d.manifest.noise, o.sigma.front());
  c.log << "training " << o.head << " on " << d.scenes.size() << " scenes, sigma " << tc.noise.endpoint_sigma << "\n";
  train_into(c.out, mc, tc, d.scenes, true, c.log);
  c.log << "wrote " << (c.out / "model.json").string() << "\n";
  return kOk;
}

inline int cmd_eval(Context& c, bool sigma_given) {
  const Options& o = c.opt;
  const io::Dataset d = io::load_dataset(require(o.data, "--data"));
  std::vector<Prediction> preds;
  std::string source;
  if (!o.predictions.empty()) {
    preds = load_predictions(o.predictions, d.scenes);
    source = o.predictions;
  } else {
    io::Checkpoint ck = io::checkpoint_from_json(io::read_json(require(o.checkpoint, "--checkpoint or --predictions")));
    const auto cands = sigma_given || d.candidates.empty() ? candidates_at(d, o.sigma.front()) : d.candidates;
    preds = predict_all(ck.model, cands);
    write_predictions(c.out / "predictions", preds);
    source = o.checkpoint;
  }
  MetricsReport r = evaluate(preds, d.scenes);
  add_config(r, o, {{"source", source}});
  io::write_json(c.out / "metrics.json", io::metrics_to_json(r));
  io::write_text(c.out / "metrics.csv", std::string(io::kMetricsCsvHeader) + io::metrics_csv_row("eval", r));
  print_metrics(c.log, "eval", r);
  return kOk;
}

/// Trains one model per mapping kind, or with --checkpoint swaps the kind of
/// an already trained model without retraining.
inline int cmd_ablate_mapping(Context& c) {
  const Options& o = c.opt;
  const io::Dataset test = io::load_dataset(require(o.test_data, "--test-data"));
  const auto cands = candidates_at(test, o.sigma.front());
  std::string csv = "mapping,det_l,top_ll,ols_lane_only\n";
  std::optional<io::Checkpoint> frozen;
  std::optional<io::Dataset> train_set;
  if (!o.checkpoint.empty()) {
    frozen = io::checkpoint_from_json(io::read_json(o.checkpoint));
  } else {
    train_set = io::load_dataset(require(o.data, "--data or --checkpoint"));
  }
  for (MappingKind kind : kAllMappingKinds) {
    Model model;
    if (frozen) {
      model = frozen->model;
      model.config.mapping = kind;
    } else {
      ModelConfig mc = model_config(o, parse_head_mode(o.head));
      mc.mapping = kind;
      const TrainConfig tc = train_config(o, train_set->manifest.noise, o.sigma.front());
      model = train_into(c.out / to_string(kind), mc, tc, train_set->scenes, false, c.log).model;
    }
    const MetricsReport r = evaluate(predict_all(model, cands), test.scenes);
    print_metrics(c.log, to_string(kind), r);
    csv += std::string(to_string(kind)) + "," + io::format_number(r.det_l) + "," + io::format_number(r.top_ll) + "," +
           io::format_number(r.ols_lane_only) + "\n";
  }
  io::write_text(c.out / "ablate_mapping.csv", csv);
  return kOk;
}

/// Trains the four heads under one budget and evaluates each at every
/// --sigma. With --train-per-sigma each sigma gets its own training run.
inline int cmd_ablate_heads(Context& c) {
  const Options& o = c.opt;
  const io::Dataset train_set = io::load_dataset(require(o.data, "--data"));
  const io::Dataset test = io::load_dataset(require(o.test_data, "--test-data"));
  std::string csv = "head,train_sigma,eval_sigma,det_l,top_ll,ols_lane_only\n";
  for (HeadMode head : kAllHeadModes) {
    const std::vector<double> train_sigmas = o.train_per_sigma ? o.sigma : std::vector<double>{o.sigma.front()};
    for (double ts : train_sigmas) {
      const TrainConfig tc = train_config(o, train_set.manifest.noise, ts);
      const fs::path dir = c.out / (std::string(to_string(head)) + "-train" + sigma_tag(ts));
      TrainState st = train_into(dir, model_config(o, head), tc, train_set.scenes, false, c.log);
      for (double es : o.sigma) {
        if (o.train_per_sigma && es != ts) continue;
        const MetricsReport r = evaluate(predict_all(st.model, candidates_at(test, es)), test.scenes);
        print_metrics(c.log, std::string(to_string(head)) + " sigma " + sigma_tag(es), r);
        csv += std::string(to_string(head)) + "," + sigma_tag(ts) + "," + sigma_tag(es) + "," +
               io::format_number(r.det_l) + "," + io::format_number(r.top_ll) + "," +
               io::format_number(r.ols_lane_only) + "\n";
      }
    }
  }
  io::write_text(c.out / "ablate_heads.csv", csv);
  return kOk;
}

inline int cmd_postprocess(Context& c) {
  const Options& o = c.opt;
  const io::Dataset d = io::load_dataset(require(o.data, "--data"));
  const auto before = load_predictions(require(o.predictions, "--predictions"), d.scenes);
  PostprocessConfig pc;
  pc.kind = parse_mapping_kind(o.mapping);
  pc.mapping = {o.alpha, o.lambda};
  pc.score_threshold = o.score_threshold;
  parse_fuse_rule(o.fuse_rule, pc);
  pc.validate();
  std::vector<Prediction> after;
  for (const auto& p : before) after.push_back(geodist_postprocess(p, pc));
  write_predictions(c.out / "predictions", after);
  MetricsReport rb = evaluate(before, d.scenes);
  MetricsReport ra = evaluate(after, d.scenes);
  add_config(rb, o, {{"stage", "before"}});
  add_config(ra, o, {{"stage", "after"}});
  io::write_json(c.out / "metrics_before.json", io::metrics_to_json(rb));
  io::write_json(c.out / "metrics_after.json", io::metrics_to_json(ra));
  io::write_text(c.out / "postprocess.csv",
                 std::string(io::kMetricsCsvHeader) + io::metrics_csv_row("before", rb) + io::metrics_csv_row("after", ra));
  print_metrics(c.log, "before", rb);
  print_metrics(c.log, "after", ra);
  return kOk;
}

inline int cmd_curves(Context& c) {
  const Options& o = c.opt;
  if (o.curve_count == 0) throw UsageError("--curve-count must be positive");
  if (!(o.curve_min >= 0.0) || !(o.curve_max >= o.curve_min)) throw UsageError("curve range must satisfy 0 <= min <= max");
  if (!(o.curve_std > 0.0)) throw UsageError("--curve-std must be positive");
  const MappingParams mp{o.alpha, o.lambda};
  mp.validate();
  std::ostringstream csv;
  csv.precision(10);
  csv << "x,ours,gaussian,sigmoid,tanh\n";
  for (const auto& r : mapping_curves(o.curve_min, o.curve_max, o.curve_count, mp, o.curve_std)) {
    csv << r.x << "," << r.ours << "," << r.gaussian << "," << r.sigmoid << "," << r.tanh << "\n";
  }
  io::write_text(c.out / "curves.csv", csv.str());
  c.log << "wrote " << o.curve_count << " rows to " << (c.out / "curves.csv").string() << "\n";
  return kOk;
}

inline void add_options(CLI::App& app, Options& o) {
  app.set_config("--config", "", "Flat key = value settings file; flags given on the command line win");
  app.add_option("--seed", o.seed, "Global seed")->capture_default_str();
  app.add_option("--out", o.out, "Output directory")->capture_default_str();
  app.add_option("--sigma", o.sigma, "Endpoint noise std in meters; several values form a sweep")
      ->delimiter(',')
      ->capture_default_str();
  app.add_option("--mapping", o.mapping, "Mapping function")
      ->check(CLI::IsMember({"ours", "gaussian", "sigmoid", "tanh"}))
      ->capture_default_str();
  app.add_option("--fuse-rule", o.fuse_rule, "Post-processing rule: max, mean or weighted:W")->capture_default_str();

  app.add_option("--layout", o.layout, "gen: all, straight_chain, fork, merge or grid_intersection")->capture_default_str();
  app.add_option("--scenes", o.scenes, "gen: number of scenes")->capture_default_str();
  app.add_option("--drop-prob", o.drop_prob, "gen: probability of dropping a true lane")->capture_default_str();
  app.add_option("--distractors", o.distractors, "gen: distractor lanes per scene")->capture_default_str();

  app.add_option("--data", o.data, "Dataset manifest (training set, or ground truth for eval)");
  app.add_option("--test-data", o.test_data, "Held-out dataset manifest for the ablations");
  app.add_option("--checkpoint", o.checkpoint, "Model checkpoint");
  app.add_option("--predictions", o.predictions, "Directory of prediction files");
  app.add_option("--head", o.head, "Topology head")
      ->check(CLI::IsMember({"mlp-pair", "similarity", "geodist", "fused"}))
      ->capture_default_str();

  app.add_option("--epochs", o.epochs, "Training epochs")->capture_default_str();
  app.add_option("--batch", o.batch, "Scenes per optimizer step")->capture_default_str();
  app.add_option("--lr", o.lr, "Initial learning rate (cosine annealed)")->capture_default_str();
  app.add_option("--weight-decay", o.weight_decay, "Decoupled weight decay")->capture_default_str();
  app.add_option("--topology-loss", o.topology_loss, "focal or bce")
      ->check(CLI::IsMember({"focal", "bce"}))
      ->capture_default_str();
  app.add_flag("--supervise-gdis", o.supervise_gdis, "Also put G_dis under the topology loss");
  app.add_option("--query-dim", o.query_dim, "Query width")->capture_default_str();
  app.add_option("--hidden-dim", o.hidden_dim, "Hidden width of encoder and lane head")->capture_default_str();
  app.add_option("--aggregation-layers", o.aggregation_layers, "Aggregation steps")->capture_default_str();
  app.add_flag("--train-per-sigma", o.train_per_sigma, "ablate-heads: train a separate model at every --sigma");

  app.add_option("--alpha", o.alpha, "Mapping exponent for postprocess and curves")->capture_default_str();
  app.add_option("--lambda", o.lambda, "Mapping scale for postprocess and curves")->capture_default_str();
  app.add_option("--score-threshold", o.score_threshold, "postprocess: leave lanes below this score untouched")
      ->capture_default_str();
  app.add_option("--curve-min", o.curve_min, "curves: first x")->capture_default_str();
  app.add_option("--curve-max", o.curve_max, "curves: last x")->capture_default_str();
  app.add_option("--curve-count", o.curve_count, "curves: number of samples")->capture_default_str();
  app.add_option("--curve-std", o.curve_std, "curves: sigma of the distance matrix")->capture_default_str();
}

/// Runs one command. `args` excludes the program name.
inline int run(const std::vector<std::string>& args, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Lane-topology reasoning on synthetic lane graphs", "topologic"};
  Options o;
  add_options(app, o);
  app.require_subcommand(1);
  app.fallthrough();
  for (const char* name : kCommands) app.add_subcommand(name, "")->fallthrough();
  app.get_subcommand("gen")->description("Generate scenes, candidate sets and a manifest");
  app.get_subcommand("train")->description("Train a model; writes checkpoints and a JSONL log");
  app.get_subcommand("eval")->description("Score a checkpoint or a directory of predictions");
  app.get_subcommand("ablate-mapping")->description("One evaluation per mapping function");
  app.get_subcommand("ablate-heads")->description("Compare the four topology heads, optionally over a sigma sweep");
  app.get_subcommand("postprocess")->description("Geometric post-processing of existing predictions");
  app.get_subcommand("curves")->description("Sample tables of the mapping functions");

  std::vector<std::string> argv{"topologic"};
  argv.insert(argv.end(), args.begin(), args.end());
  std::vector<const char*> raw;
  for (const auto& a : argv) raw.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(raw.size()), raw.data());
  } catch (const CLI::CallForHelp&) {
    log << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    log << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::FileError& e) {
    err << "error: " << e.what() << "\n";
    return kBadInput;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  }
  o.command = app.get_subcommands().front()->get_name();
  const bool sigma_given = app.get_option("--sigma")->count() > 0;

  Context ctx{o, fs::path(o.out), log};
  try {
    if (o.sigma.empty()) throw UsageError("--sigma needs at least one value");
    for (double s : o.sigma)
      if (!(s >= 0.0)) throw UsageError("--sigma values must be >= 0");
    fs::create_directories(ctx.out);
    io::write_text(ctx.out / "config.ini", "# topologic " + o.command + "\n" + app.config_to_str(true, false));
    if (o.command == "gen") return cmd_gen(ctx);
    if (o.command == "train") return cmd_train(ctx);
    if (o.command == "eval") return cmd_eval(ctx, sigma_given);
    if (o.command == "ablate-mapping") return cmd_ablate_mapping(ctx);
    if (o.command == "ablate-heads") return cmd_ablate_heads(ctx);
    if (o.command == "postprocess") return cmd_postprocess(ctx);
    if (o.command == "curves") return cmd_curves(ctx);
    throw UsageError("unknown command '" + o.command + "'");
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const InvalidInput& e) {
    err << "invalid input: " << e.what() << "\n";
    return kBadInput;
  } catch (const GenerationError& e) {
    err << "invalid input: " << e.what() << "\n";
    return kBadInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kBadInput;
  }
}

}  // namespace topologic::cli
