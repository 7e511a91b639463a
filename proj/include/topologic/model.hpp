#pragma once

// Full lane/topology model: surrogate encoder, one of four topology heads,
// residual aggregation, lane head.

#include <cstdint>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "topologic/fusion.hpp"
#include "topologic/geo_head.hpp"
#include "topologic/sim_head.hpp"
#include "topologic/surrogate.hpp"

namespace topologic {

/// mlp_pair is the plain-MLP baseline on concatenated query pairs.
enum class HeadMode { mlp_pair, similarity, geodist, fused };

inline constexpr HeadMode kAllHeadModes[] = {HeadMode::mlp_pair, HeadMode::similarity, HeadMode::geodist,
                                             HeadMode::fused};

inline const char* to_string(HeadMode m) {
  switch (m) {
    case HeadMode::mlp_pair: return "mlp-pair";
    case HeadMode::similarity: return "similarity";
    case HeadMode::geodist: return "geodist";
    case HeadMode::fused: return "fused";
  }
  return "?";
}

inline HeadMode parse_head_mode(const std::string& s) {
  if (s == "mlp-pair" || s == "mlp_pair" || s == "mlp") return HeadMode::mlp_pair;
  if (s == "similarity" || s == "sim") return HeadMode::similarity;
  if (s == "geodist" || s == "geo") return HeadMode::geodist;
  if (s == "fused") return HeadMode::fused;
  throw InvalidInput("unknown head mode '" + s + "'");
}

struct ModelConfig {
  HeadMode head = HeadMode::fused;
  MappingKind mapping = MappingKind::ours;
  MappingParams mapping_init{};
  StdMode std_mode = StdMode::population;
  std::size_t query_dim = 32;
  /// Hidden width of the encoder and lane-head MLPs.
  std::size_t hidden_dim = 64;
  /// Init of the encoder and lane-head MLPs. Topology-head MLPs always use fan_in.
  nn::InitScheme init_scheme = nn::InitScheme::he;
  std::size_t aggregation_layers = 1;
  bool zero_sim_diagonal = true;
  FeatureEncoding encoding = FeatureEncoding::segments;
  double coord_scale = 50.0;
  double segment_scale = 2.0;
  double reg_init_scale = 0.1;
  bool fixed_queries = false;
  std::size_t num_queries = 40;
  std::uint64_t init_seed = 0;

  void validate() const {
    mapping_init.validate();
    if (query_dim == 0 || hidden_dim == 0) throw InvalidInput("layer widths must be positive");
    if (!(coord_scale > 0.0) || !(segment_scale > 0.0)) throw InvalidInput("encoder scales must be positive");
    if (fixed_queries && num_queries == 0) throw InvalidInput("fixed-query mode needs num_queries > 0");
  }

  /// Canonical one-line rendering; the hash input for predictions.
  std::string describe() const {
    std::ostringstream os;
    os.precision(17);
    os << "head=" << to_string(head) << ";mapping=" << to_string(mapping) << ";alpha0=" << mapping_init.alpha
       << ";lambda0=" << mapping_init.lambda << ";std=" << (std_mode == StdMode::population ? "population" : "sample")
       << ";dim=" << query_dim << ";hidden=" << hidden_dim << ";init=" << (init_scheme == nn::InitScheme::he ? "he" : "fan_in") << ";agg=" << aggregation_layers << ";zero_sim_diag=" << zero_sim_diagonal
       << ";encoding=" << (encoding == FeatureEncoding::absolute ? "absolute" : "segments") << ";coord_scale=" << coord_scale << ";segment_scale=" << segment_scale << ";reg_init_scale=" << reg_init_scale << ";fixed_queries=" << fixed_queries
       << ";num_queries=" << num_queries << ";init_seed=" << init_seed;
    return os.str();
  }
};

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string config_hash(const ModelConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(c.describe())));
  return buf;
}

/// Three-layer MLP on [q_i, q_j] producing one topology logit per ordered pair.
struct PairParams {
  nn::MlpParams mlp;

  static PairParams init(std::size_t dim, Rng& rng, nn::InitScheme scheme = nn::InitScheme::fan_in) {
    return {nn::MlpParams::init("pair.mlp", {2 * dim, dim, dim, 1}, rng, 1.0, scheme)};
  }

  template <class F>
  void for_each_parameter(F&& f) {
    mlp.for_each_parameter(f);
  }
};

inline nn::Var pair_topology(const nn::Var& queries, PairParams& params) {
  const std::size_t n = queries.rows();
  std::vector<std::size_t> left, right;
  left.reserve(n * n);
  right.reserve(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      left.push_back(i);
      right.push_back(j);
    }
  const nn::Var x = nn::concat_cols(nn::gather_rows(queries, std::move(left)), nn::gather_rows(queries, std::move(right)));
  const nn::Var logits = nn::reshape(nn::mlp_forward(params.mlp, x), n, n);
  return nn::zero_diagonal(nn::sigmoid(logits));
}

/// Learned slots for the fixed-query mode.
struct SlotParams {
  nn::Parameter embed;  // N x C
  nn::Parameter refs;   // N x 33, used by slots with no candidate

  static SlotParams init(std::size_t slots, std::size_t dim, Rng& rng) {
    SlotParams s{{"query.embed", nn::Matrix(slots, dim)}, {"query.refs", nn::Matrix(slots, kLaneCoords)}};
    const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
    for (auto& v : s.embed.value.values()) v = rng.uniform(-bound, bound);
    return s;
  }

  template <class F>
  void for_each_parameter(F&& f) {
    f(embed);
    f(refs);
  }
};

/// Everything a loss needs from one forward pass.
struct ForwardPass {
  nn::Var queries;
  nn::Var scores;  // n x 1
  nn::Var lanes;   // n x 33
  /// G fed to the aggregation step (raw view).
  nn::Var topology;
  /// Topology under L_top: G_sim, or the pair head's output for the baseline.
  std::optional<nn::Var> supervised;
  /// G_dis over the reference lanes, when the head computes one.
  std::optional<nn::Var> g_dis;
  std::optional<nn::Var> g_sim;
  double sigma = 0.0;
};

struct Model {
  ModelConfig config;
  EncoderParams encoder;
  GeoHeadParams geo;
  SimilarityParams sim;
  PairParams pair;
  FusionParams fusion;
  std::vector<AggregatorParams> aggregators;
  LaneHeadParams head;
  SlotParams slots;

  static Model init(const ModelConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.init_seed);
    Model m;
    m.config = cfg;
    const std::size_t c = cfg.query_dim;
    m.encoder = EncoderParams::init(c, rng, cfg.hidden_dim, cfg.init_scheme);
    m.geo = GeoHeadParams::from(cfg.mapping_init);
    m.sim = SimilarityParams::init(c, c, rng);
    m.pair = PairParams::init(c, rng);
    for (std::size_t l = 0; l < cfg.aggregation_layers; ++l) {
      m.aggregators.push_back(AggregatorParams::init("agg" + std::to_string(l) + ".mix", c, rng));
    }
    m.head = LaneHeadParams::init(c, rng, cfg.reg_init_scale, cfg.hidden_dim, cfg.init_scheme);
    if (cfg.fixed_queries) m.slots = SlotParams::init(cfg.num_queries, c, rng);
    return m;
  }

  bool uses_geo() const { return config.head == HeadMode::geodist || config.head == HeadMode::fused; }
  bool uses_sim() const { return config.head == HeadMode::similarity || config.head == HeadMode::fused; }

  /// Parameters that take part in the configured head, in a fixed order.
  template <class F>
  void for_each_parameter(F&& f) {
    encoder.for_each_parameter(f);
    if (uses_geo()) geo.for_each_parameter(f);
    if (uses_sim()) sim.for_each_parameter(f);
    if (config.head == HeadMode::mlp_pair) pair.for_each_parameter(f);
    if (config.head == HeadMode::fused) fusion.for_each_parameter(f);
    for (auto& a : aggregators) a.for_each_parameter(f);
    head.for_each_parameter(f);
    if (config.fixed_queries) slots.for_each_parameter(f);
  }

  std::vector<nn::Parameter*> parameters() {
    std::vector<nn::Parameter*> out;
    for_each_parameter([&](nn::Parameter& p) { out.push_back(&p); });
    return out;
  }

  std::size_t output_count(std::size_t candidates) const {
    if (!config.fixed_queries) return candidates;
    if (candidates > config.num_queries) {
      throw InvalidInput(std::to_string(candidates) + " candidates exceed " + std::to_string(config.num_queries) +
                         " query slots");
    }
    return config.num_queries;
  }

  ForwardPass forward(nn::Tape& tape, const CandidateSet& candidates) {
    const std::size_t n = output_count(candidates.candidates.size());
    if (n == 0) throw InvalidInput("scene '" + candidates.scene_id + "' has no candidates");
    nn::Matrix cand = flatten_lanes(candidates.candidates);

    nn::Var refs;
    nn::Matrix ref_values;
    if (config.fixed_queries) {
      // Filled slots take the candidate, empty slots their learned reference.
      nn::Matrix filled(n, kLaneCoords), empty_mask(n, kLaneCoords, 1.0);
      for (std::size_t i = 0; i < cand.rows(); ++i)
        for (std::size_t k = 0; k < kLaneCoords; ++k) {
          filled(i, k) = cand(i, k);
          empty_mask(i, k) = 0.0;
        }
      refs = nn::add(tape.constant(std::move(filled)),
                     nn::mul(tape.parameter(slots.refs), tape.constant(std::move(empty_mask))));
      ref_values = refs.value();
    } else {
      ref_values = cand;
      refs = tape.constant(std::move(cand));
    }

    nn::Var q = nn::mlp_forward(
        encoder.mlp, tape.constant(encoder_features(ref_values, config.encoding, config.coord_scale, config.segment_scale)));
    if (config.fixed_queries) q = nn::add(q, tape.parameter(slots.embed));

    ForwardPass pass;
    pass.queries = q;
    const DistanceMatrix d = distance_matrix(ref_values);
    pass.sigma = matrix_std(d, config.std_mode);
    if (uses_geo()) pass.g_dis = map_distance(tape, d, geo, config.mapping, pass.sigma);
    if (uses_sim()) pass.g_sim = similarity_topology(q, sim, config.zero_sim_diagonal);

    switch (config.head) {
      case HeadMode::mlp_pair:
        pass.topology = pair_topology(q, pair);
        pass.supervised = pass.topology;
        break;
      case HeadMode::similarity:
        pass.topology = *pass.g_sim;
        pass.supervised = pass.g_sim;
        break;
      case HeadMode::geodist:
        pass.topology = *pass.g_dis;
        break;
      case HeadMode::fused:
        pass.topology = fuse_topology(*pass.g_dis, *pass.g_sim, fusion);
        pass.supervised = pass.g_sim;
        break;
    }

    nn::Var h = q;
    for (auto& agg : aggregators) h = aggregate_features(h, pass.topology, agg);
    const LaneHeadOutput out = lane_head(h, refs, head);
    pass.scores = out.scores;
    pass.lanes = out.lanes;
    return pass;
  }

  /// Reported topology. The geometric part is recomputed on the refined lanes.
  TopologyMatrix output_topology(const ForwardPass& pass) const {
    auto geometric = [&] {
      const DistanceMatrix d = distance_matrix(pass.lanes.value());
      return map_distance(d, geo.values(), config.mapping, matrix_std(d, config.std_mode));
    };
    auto from = [](const nn::Matrix& m) {
      TopologyMatrix g(m.rows(), 0.0, true);
      for (std::size_t k = 0; k < m.size(); ++k) g.values[k] = m[k];
      return g;
    };
    switch (config.head) {
      case HeadMode::mlp_pair:
      case HeadMode::similarity: return from(pass.supervised->value());
      case HeadMode::geodist: return geometric();
      case HeadMode::fused:
        return fuse_topology(geometric(), from(pass.g_sim->value()), fusion.lambda1.value.item(),
                             fusion.lambda2.value.item())
            .calibrated;
    }
    return {};
  }

  Prediction predict(const CandidateSet& candidates) {
    nn::Tape tape;
    const ForwardPass pass = forward(tape, candidates);
    Prediction p;
    p.scene_id = candidates.scene_id;
    p.lanes = unflatten_lanes(pass.lanes.value());
    p.scores.assign(pass.scores.value().values().begin(), pass.scores.value().values().end());
    p.topology = output_topology(pass);
    p.queries = pass.queries.value();
    p.meta["model_config_hash"] = config_hash(config);
    p.meta["head"] = to_string(config.head);
    p.meta["mapping"] = to_string(config.mapping);
    p.meta["seed"] = std::to_string(config.init_seed);
    p.validate();
    return p;
  }
};

}  // namespace topologic
