#pragma once

// Lane detection and lane-lane topology metrics, and the train-free
// geometric post-processing of frozen predictions.

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "topologic/geo_head.hpp"
#include "topologic/matching.hpp"
#include "topologic/surrogate.hpp"

namespace topologic {

inline constexpr std::array<double, 3> kDetThresholds{1.0, 2.0, 3.0};
inline constexpr double kTopMatchThreshold = 1.5;

/// Discrete Frechet distance, dynamic program over the coupling grid.
inline double discrete_frechet(const LaneLine& a, const LaneLine& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<double> ca(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double d = distance(a[i], b[j]);
      double prev;
      if (i == 0 && j == 0) prev = d;
      else if (i == 0) prev = ca[j - 1];
      else if (j == 0) prev = ca[(i - 1) * m];
      else prev = std::min({ca[(i - 1) * m + j], ca[(i - 1) * m + j - 1], ca[i * m + j - 1]});
      ca[i * m + j] = std::max(d, prev);
    }
  }
  return ca.back();
}

inline CostMatrix frechet_matrix(std::span<const LaneLine> preds, std::span<const LaneLine> gts) {
  CostMatrix c(preds.size(), gts.size());
  for (std::size_t p = 0; p < preds.size(); ++p)
    for (std::size_t g = 0; g < gts.size(); ++g) c(p, g) = discrete_frechet(preds[p], gts[g]);
  return c;
}

/// Prediction indices by descending score, lower index first on ties.
inline std::vector<std::size_t> confidence_order(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

/// Greedy confidence-ordered matching at one threshold: each prediction takes
/// the nearest unmatched gt with distance < t. Entry p is the gt index or npos.
inline std::vector<std::size_t> greedy_match(const CostMatrix& frechet, std::span<const double> scores, double t) {
  std::vector<std::size_t> gt_of(frechet.rows, MatchResult::npos);
  std::vector<char> taken(frechet.cols, 0);
  for (std::size_t p : confidence_order(scores)) {
    std::size_t best = MatchResult::npos;
    for (std::size_t g = 0; g < frechet.cols; ++g) {
      if (taken[g] || !(frechet(p, g) < t)) continue;
      if (best == MatchResult::npos || frechet(p, g) < frechet(p, best)) best = g;
    }
    if (best != MatchResult::npos) {
      gt_of[p] = best;
      taken[best] = 1;
    }
  }
  return gt_of;
}

/// One scored decision in an AP ranking.
struct RankedHit {
  double score;
  bool tp;
};

/// Non-interpolated AP: sum of precision at each true positive over `positives`.
/// Hits must already be in rank order.
inline double average_precision(std::span<const RankedHit> ranked, std::size_t positives) {
  if (positives == 0) return 0.0;
  double sum = 0.0;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    if (!ranked[k].tp) continue;
    ++tp;
    sum += static_cast<double>(tp) / static_cast<double>(k + 1);
  }
  return sum / static_cast<double>(positives);
}

struct SceneDetection {
  std::vector<RankedHit> hits[kDetThresholds.size()];
  std::size_t gt_count = 0;
};

inline SceneDetection detect_scene(const Prediction& pred, const LaneGraph& gt) {
  SceneDetection out;
  out.gt_count = gt.lanes.size();
  const CostMatrix fr = frechet_matrix(pred.lanes, gt.lanes);
  const auto order = confidence_order(pred.scores);
  for (std::size_t t = 0; t < kDetThresholds.size(); ++t) {
    const auto gt_of = greedy_match(fr, pred.scores, kDetThresholds[t]);
    for (std::size_t p : order) out.hits[t].push_back({pred.scores[p], gt_of[p] != MatchResult::npos});
  }
  return out;
}

struct DetResult {
  double score = 0.0;
  std::array<double, kDetThresholds.size()> ap{};
};

/// DET_l over a set of scenes: hits pooled across scenes and ranked by score
/// (stable in scene order, then prediction order), AP per threshold, averaged.
inline DetResult det_l(std::span<const SceneDetection> scenes) {
  DetResult r;
  std::size_t positives = 0;
  for (const auto& s : scenes) positives += s.gt_count;
  for (std::size_t t = 0; t < kDetThresholds.size(); ++t) {
    std::vector<RankedHit> pooled;
    for (const auto& s : scenes) pooled.insert(pooled.end(), s.hits[t].begin(), s.hits[t].end());
    std::stable_sort(pooled.begin(), pooled.end(), [](const RankedHit& a, const RankedHit& b) { return a.score > b.score; });
    r.ap[t] = average_precision(pooled, positives);
    r.score += r.ap[t] / static_cast<double>(kDetThresholds.size());
  }
  return r;
}

inline DetResult det_l(const Prediction& pred, const LaneGraph& gt) {
  const SceneDetection s = detect_scene(pred, gt);
  return det_l(std::span<const SceneDetection>(&s, 1));
}

/// Pred<->gt matching used by TOP_ll: minimum total Frechet distance, pairs
/// farther than `threshold` discarded.
inline MatchResult topology_match(const Prediction& pred, const LaneGraph& gt, double threshold = kTopMatchThreshold) {
  const CostMatrix fr = frechet_matrix(pred.lanes, gt.lanes);
  // Infeasible pairs get a cost above any feasible assignment total.
  const double big = (threshold + 1.0) * static_cast<double>(std::max<std::size_t>(1, std::min(fr.rows, fr.cols)) + 1);
  CostMatrix c = fr;
  for (double& v : c.values)
    if (v > threshold) v = big;
  MatchResult m = hungarian(c);
  MatchResult kept;
  std::vector<char> p_used(fr.rows, 0), g_used(fr.cols, 0);
  for (auto [p, g] : m.assignment) {
    if (fr(p, g) > threshold) continue;
    kept.assignment.emplace_back(p, g);
    p_used[p] = g_used[g] = 1;
  }
  for (std::size_t p = 0; p < fr.rows; ++p)
    if (!p_used[p]) kept.unmatched_predictions.push_back(p);
  for (std::size_t g = 0; g < fr.cols; ++g)
    if (!g_used[g]) kept.unmatched_ground_truths.push_back(g);
  return kept;
}

/// Mean per-vertex AP of predicted successors against gt successors, or
/// nullopt for a scene without gt edges.
inline std::optional<double> top_ll(const Prediction& pred, const LaneGraph& gt, const MatchResult& match) {
  if (gt.edges.empty()) return std::nullopt;
  const std::size_t n = gt.lanes.size();
  const auto pred_of = match.pred_of(n);
  std::vector<std::size_t> successors(n, 0);
  for (auto [i, j] : gt.edges) successors[i] += 1;
  double sum = 0.0;
  std::size_t vertices = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (successors[i] == 0) continue;
    ++vertices;
    if (pred_of[i] == MatchResult::npos) continue;
    struct Cand {
      double conf;
      std::size_t j;
    };
    std::vector<Cand> cands;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || pred_of[j] == MatchResult::npos) continue;
      const double c = pred.topology(pred_of[i], pred_of[j]);
      if (c > 0.0) cands.push_back({c, j});
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.conf > b.conf; });
    std::vector<RankedHit> hits;
    for (const auto& c : cands) hits.push_back({c.conf, gt.edges.contains({i, c.j})});
    sum += average_precision(hits, successors[i]);
  }
  return sum / static_cast<double>(vertices);
}

inline std::optional<double> top_ll(const Prediction& pred, const LaneGraph& gt, double threshold = kTopMatchThreshold) {
  return top_ll(pred, gt, topology_match(pred, gt, threshold));
}

/// Lane-only overall score: (DET_l + sqrt(TOP_ll)) / 2.
inline double ols_lane_only(double det, double top) {
  if (!(det >= 0.0 && det <= 1.0) || !(top >= 0.0 && top <= 1.0)) throw InvalidInput("ols inputs must lie in [0,1]");
  return 0.5 * (det + std::sqrt(top));
}

struct SceneMetrics {
  std::string scene_id;
  double det_l = 0.0;
  std::optional<double> top_ll;
  std::size_t predictions = 0;
  std::size_t ground_truth = 0;
};

struct MetricsReport {
  double det_l = 0.0;
  double top_ll = 0.0;
  double ols_lane_only = 0.0;
  std::array<double, kDetThresholds.size()> det_ap{};
  std::size_t scored_topology_scenes = 0;
  std::vector<SceneMetrics> scenes;
  /// Resolved settings that produced the numbers.
  std::vector<std::pair<std::string, std::string>> config;
};

inline MetricsReport evaluate(std::span<const Prediction> preds, std::span<const Scene> scenes,
                              double match_threshold = kTopMatchThreshold) {
  if (preds.size() != scenes.size()) {
    throw InvalidInput(std::to_string(preds.size()) + " predictions for " + std::to_string(scenes.size()) + " scenes");
  }
  MetricsReport r;
  std::vector<SceneDetection> det;
  double top_sum = 0.0;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    preds[s].validate();
    det.push_back(detect_scene(preds[s], scenes[s].graph));
    SceneMetrics sm;
    sm.scene_id = scenes[s].id;
    sm.det_l = det_l(std::span<const SceneDetection>(&det.back(), 1)).score;
    sm.top_ll = top_ll(preds[s], scenes[s].graph, match_threshold);
    sm.predictions = preds[s].lanes.size();
    sm.ground_truth = scenes[s].graph.lanes.size();
    if (sm.top_ll) {
      top_sum += *sm.top_ll;
      r.scored_topology_scenes += 1;
    }
    r.scenes.push_back(std::move(sm));
  }
  const DetResult d = det_l(det);
  r.det_l = d.score;
  r.det_ap = d.ap;
  r.top_ll = r.scored_topology_scenes ? top_sum / static_cast<double>(r.scored_topology_scenes) : 0.0;
  r.ols_lane_only = ols_lane_only(r.det_l, r.top_ll);
  r.config = {{"det_thresholds", "1.0,2.0,3.0"},
              {"top_match_threshold", std::to_string(match_threshold)},
              {"ols_variant", "lane-only"}};
  return r;
}

enum class FuseRule { max, mean, weighted };

struct PostprocessConfig {
  MappingKind kind = MappingKind::ours;
  MappingParams mapping{};
  StdMode std_mode = StdMode::population;
  FuseRule rule = FuseRule::max;
  /// Weight of the geometric term under FuseRule::weighted.
  double weight = 0.5;
  /// Lanes scoring below this keep their existing topology rows and columns.
  double score_threshold = 0.0;

  void validate() const {
    mapping.validate();
    if (rule == FuseRule::weighted && !(weight >= 0.0 && weight <= 1.0)) throw InvalidInput("fuse weight must lie in [0,1]");
  }
};

inline std::string to_string(const PostprocessConfig& c) {
  switch (c.rule) {
    case FuseRule::max: return "max";
    case FuseRule::mean: return "mean";
    case FuseRule::weighted: return "weighted:" + std::to_string(c.weight);
  }
  return "?";
}

/// "max", "mean" or "weighted:W".
inline void parse_fuse_rule(const std::string& s, PostprocessConfig& c) {
  if (s == "max") {
    c.rule = FuseRule::max;
  } else if (s == "mean") {
    c.rule = FuseRule::mean;
  } else if (s.rfind("weighted:", 0) == 0) {
    const std::string w = s.substr(9);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(w, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != w.size() || !(v >= 0.0 && v <= 1.0)) throw InvalidInput("bad fuse weight in '" + s + "'");
    c.rule = FuseRule::weighted;
    c.weight = v;
  } else {
    throw InvalidInput("unknown fuse rule '" + s + "'");
  }
}

/// Rebuilds the topology from predicted geometry alone and merges it with the
/// existing matrix entrywise. Lanes, scores and queries pass through untouched.
inline Prediction geodist_postprocess(const Prediction& pred, const PostprocessConfig& cfg) {
  cfg.validate();
  pred.validate();
  Prediction out = pred;
  const std::size_t n = pred.lanes.size();
  if (n == 0) return out;
  const DistanceMatrix d = distance_matrix(pred.lanes);
  const TopologyMatrix geo = map_distance(d, cfg.mapping, cfg.kind, matrix_std(d, cfg.std_mode));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j || pred.scores[i] < cfg.score_threshold || pred.scores[j] < cfg.score_threshold) continue;
      const double e = pred.topology(i, j);
      const double g = geo(i, j);
      double v = e;
      switch (cfg.rule) {
        case FuseRule::max: v = std::max(e, g); break;
        case FuseRule::mean: v = 0.5 * (e + g); break;
        case FuseRule::weighted: v = cfg.weight * g + (1.0 - cfg.weight) * e; break;
      }
      out.topology(i, j) = v;
    }
  }
  out.topology.calibrated = true;
  out.meta["postprocess"] = std::string(to_string(cfg.kind)) + "/" + to_string(cfg);
  return out;
}

}  // namespace topologic
