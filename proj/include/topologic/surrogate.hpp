#pragma once

// Desk-scale stand-in for the image/BEV decoder: candidates in, queries and
// refined, scored lanes out.

#include <map>
#include <string>
#include <vector>

#include "topologic/core.hpp"
#include "topologic/nn/mlp.hpp"
#include "topologic/scene_gen.hpp"

namespace topologic {

inline constexpr std::size_t kLaneCoords = 3 * kLanePoints;

/// n x 33 matrix, one flattened canonical lane per row.
inline nn::Matrix flatten_lanes(std::span<const LaneLine> lanes) {
  nn::Matrix m(lanes.size(), kLaneCoords);
  for (std::size_t i = 0; i < lanes.size(); ++i) {
    if (!lanes[i].canonical()) {
      throw InvalidInput("lane " + std::to_string(i) + " is not canonical (" + std::to_string(lanes[i].size()) + " points)");
    }
    for (std::size_t p = 0; p < kLanePoints; ++p) {
      m(i, 3 * p) = lanes[i][p].x;
      m(i, 3 * p + 1) = lanes[i][p].y;
      m(i, 3 * p + 2) = lanes[i][p].z;
    }
  }
  return m;
}

inline LaneLine lane_from_row(const nn::Matrix& m, std::size_t row) {
  if (m.cols() != kLaneCoords) throw InvalidInput("lane rows need 33 columns, got " + m.shape());
  std::vector<Point3> pts(kLanePoints);
  for (std::size_t p = 0; p < kLanePoints; ++p) pts[p] = {m(row, 3 * p), m(row, 3 * p + 1), m(row, 3 * p + 2)};
  return LaneLine(std::move(pts));
}

inline std::vector<LaneLine> unflatten_lanes(const nn::Matrix& m) {
  std::vector<LaneLine> lanes;
  lanes.reserve(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) lanes.push_back(lane_from_row(m, i));
  return lanes;
}

struct EncoderParams {
  nn::MlpParams mlp;  // 33 -> H -> H -> C

  static EncoderParams init(std::size_t dim, Rng& rng, std::size_t hidden = 0,
                            nn::InitScheme scheme = nn::InitScheme::fan_in) {
    const std::size_t h = hidden ? hidden : dim;
    return {nn::MlpParams::init("encoder", {kLaneCoords, h, h, dim}, rng, 1.0, scheme)};
  }

  template <class F>
  void for_each_parameter(F&& f) {
    mlp.for_each_parameter(f);
  }
};

/// How a flattened lane becomes encoder input. `absolute` divides every
/// coordinate by `coord_scale`; `segments` keeps the start point that way and
/// replaces the other ten points by successive segment vectors over
/// `segment_scale`. Both give 33 values per lane.
enum class FeatureEncoding { absolute, segments };

inline nn::Matrix encoder_features(const nn::Matrix& refs, FeatureEncoding enc, double coord_scale,
                                   double segment_scale = 1.0) {
  if (refs.cols() != kLaneCoords) throw InvalidInput("encoder features need 33 columns, got " + refs.shape());
  if (!(coord_scale > 0.0) || !(segment_scale > 0.0)) throw InvalidInput("encoder scales must be positive");
  nn::Matrix f(refs.rows(), kLaneCoords);
  for (std::size_t i = 0; i < refs.rows(); ++i) {
    for (std::size_t k = 0; k < kLaneCoords; ++k) {
      f(i, k) = enc == FeatureEncoding::absolute || k < 3 ? refs(i, k) / coord_scale
                                                          : (refs(i, k) - refs(i, k - 3)) / segment_scale;
    }
  }
  return f;
}

struct Encoded {
  nn::Var queries;
  /// Reference polylines: the raw candidates.
  nn::Matrix refs;
};

/// One query per candidate.
inline Encoded encode_candidates(nn::Tape& tape, const CandidateSet& candidates, EncoderParams& params,
                                 FeatureEncoding enc, double coord_scale, double segment_scale = 1.0) {
  nn::Matrix refs = flatten_lanes(candidates.candidates);
  nn::Var q = nn::mlp_forward(params.mlp, tape.constant(encoder_features(refs, enc, coord_scale, segment_scale)));
  return {q, std::move(refs)};
}

struct LaneHeadParams {
  nn::MlpParams cls;  // C -> H -> H -> 1
  nn::MlpParams reg;  // C -> H -> H -> 33

  static LaneHeadParams init(std::size_t dim, Rng& rng, double reg_last_scale = 1.0, std::size_t hidden = 0,
                             nn::InitScheme scheme = nn::InitScheme::fan_in) {
    const std::size_t h = hidden ? hidden : dim;
    return {nn::MlpParams::init("head.cls", {dim, h, h, 1}, rng, 1.0, scheme),
            nn::MlpParams::init("head.reg", {dim, h, h, kLaneCoords}, rng, reg_last_scale, scheme)};
  }

  template <class F>
  void for_each_parameter(F&& f) {
    cls.for_each_parameter(f);
    reg.for_each_parameter(f);
  }
};

struct LaneHeadOutput {
  nn::Var scores;  // n x 1, in (0, 1)
  nn::Var lanes;   // n x 33, reference + offset
};

inline LaneHeadOutput lane_head(const nn::Var& queries, const nn::Var& refs, LaneHeadParams& params) {
  if (refs.rows() != queries.rows() || refs.cols() != kLaneCoords) {
    throw InvalidInput("lane_head: refs " + refs.value().shape() + " vs " + std::to_string(queries.rows()) + " queries");
  }
  const nn::Var scores = nn::sigmoid(nn::mlp_forward(params.cls, queries));
  const nn::Var lanes = nn::add(refs, nn::mlp_forward(params.reg, queries));
  return {scores, lanes};
}

inline LaneHeadOutput lane_head(const nn::Var& queries, const nn::Matrix& refs, LaneHeadParams& params) {
  return lane_head(queries, queries.tape().constant(refs), params);
}

/// Scored lanes plus the calibrated topology among them.
struct Prediction {
  std::string scene_id;
  std::vector<LaneLine> lanes;
  std::vector<double> scores;
  TopologyMatrix topology;
  nn::Matrix queries;
  std::map<std::string, std::string> meta;

  void validate() const {
    if (scores.size() != lanes.size() || topology.n != lanes.size()) {
      throw InvalidInput("prediction lists disagree: " + std::to_string(lanes.size()) + " lanes, " +
                         std::to_string(scores.size()) + " scores, topology " + std::to_string(topology.n));
    }
    if (!queries.empty() && queries.rows() != lanes.size()) throw InvalidInput("prediction query rows disagree with lanes");
    for (double s : scores)
      if (!(s >= 0.0 && s <= 1.0)) throw InvalidInput("prediction score outside [0,1]");
    topology.validate();
  }
};

}  // namespace topologic
