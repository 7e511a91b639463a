#pragma once

// Set-prediction matching, the detection and topology losses, and the
// AdamW training loop.

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "topologic/matching.hpp"
#include "topologic/model.hpp"
#include "topologic/nn/adam.hpp"

namespace topologic {

struct LossWeights {
  double cls = 1.5;
  double reg = 0.025;
  double top = 1.0;

  void validate() const {
    if (!(cls >= 0.0) || !(reg >= 0.0) || !(top >= 0.0)) throw InvalidInput("loss weights must be nonnegative");
  }
};

/// Mean absolute coordinate difference over the 33 coordinates.
inline double l1_lane_loss(const LaneLine& a, const LaneLine& b) {
  if (!a.canonical() || !b.canonical()) throw InvalidInput("l1_lane_loss needs canonical lanes");
  double s = 0.0;
  for (std::size_t p = 0; p < kLanePoints; ++p) {
    s += std::abs(a[p].x - b[p].x) + std::abs(a[p].y - b[p].y) + std::abs(a[p].z - b[p].z);
  }
  return s / static_cast<double>(kLaneCoords);
}

/// cost(p, g) = w_cls (1 - score_p) + w_reg L1(lane_p, lane_g).
inline CostMatrix matching_cost(std::span<const double> scores, std::span<const LaneLine> lanes, const LaneGraph& gt,
                                const LossWeights& w) {
  if (scores.size() != lanes.size()) throw InvalidInput("matching_cost: score and lane counts differ");
  CostMatrix c(lanes.size(), gt.lanes.size());
  for (std::size_t p = 0; p < lanes.size(); ++p)
    for (std::size_t g = 0; g < gt.lanes.size(); ++g)
      c(p, g) = w.cls * (1.0 - scores[p]) + w.reg * l1_lane_loss(lanes[p], gt.lanes[g]);
  return c;
}

inline MatchResult hungarian_match(const Prediction& pred, const LaneGraph& gt, const LossWeights& w) {
  if (pred.lanes.empty() || gt.lanes.empty()) {
    MatchResult m;
    for (std::size_t p = 0; p < pred.lanes.size(); ++p) m.unmatched_predictions.push_back(p);
    for (std::size_t g = 0; g < gt.lanes.size(); ++g) m.unmatched_ground_truths.push_back(g);
    return m;
  }
  return hungarian(matching_cost(pred.scores, pred.lanes, gt, w));
}

/// Topology targets in prediction index space: 1 where both ends are matched
/// and their gt images form an edge. The mask drops the diagonal.
struct TopologyTargets {
  nn::Matrix labels;
  nn::Matrix mask;
};

inline TopologyTargets topology_targets(std::size_t n_pred, const LaneGraph& gt, const MatchResult& match) {
  TopologyTargets t{nn::Matrix(n_pred, n_pred), nn::Matrix(n_pred, n_pred, 1.0)};
  const auto gt_of = match.gt_of(n_pred);
  for (std::size_t i = 0; i < n_pred; ++i) {
    t.mask(i, i) = 0.0;
    for (std::size_t j = 0; j < n_pred; ++j) {
      if (i == j || gt_of[i] == MatchResult::npos || gt_of[j] == MatchResult::npos) continue;
      if (gt.edges.contains({gt_of[i], gt_of[j]})) t.labels(i, j) = 1.0;
    }
  }
  return t;
}

enum class TopologyLossKind { focal, bce };

inline nn::FocalOptions topology_focal_options(TopologyLossKind kind) {
  nn::FocalOptions o;
  if (kind == TopologyLossKind::bce) {
    o.gamma = 0.0;
    o.alpha = -1.0;
  }
  return o;
}

/// Focal (or plain BCE) loss of a topology matrix against the matched gt adjacency.
inline nn::Var topology_loss(const nn::Var& g, const LaneGraph& gt, const MatchResult& match,
                             TopologyLossKind kind = TopologyLossKind::focal) {
  const TopologyTargets t = topology_targets(g.rows(), gt, match);
  return nn::focal_loss(g, t.labels, t.mask, topology_focal_options(kind));
}

/// w_cls * focal(scores) + w_reg * mean L1 over matched pairs.
inline nn::Var detection_loss(const ForwardPass& pass, const LaneGraph& gt, const MatchResult& match,
                              const LossWeights& w) {
  nn::Tape& tape = pass.scores.tape();
  const std::size_t n = pass.scores.rows();
  nn::Matrix labels(n, 1);
  for (auto [p, g] : match.assignment) labels(p, 0) = 1.0;
  nn::Var loss = nn::scale(nn::focal_loss(pass.scores, labels), w.cls);
  if (!match.assignment.empty()) {
    std::vector<std::size_t> rows;
    nn::Matrix target(match.assignment.size(), kLaneCoords);
    const nn::Matrix gt_flat = flatten_lanes(gt.lanes);
    for (std::size_t k = 0; k < match.assignment.size(); ++k) {
      rows.push_back(match.assignment[k].first);
      for (std::size_t c = 0; c < kLaneCoords; ++c) target(k, c) = gt_flat(match.assignment[k].second, c);
    }
    const nn::Var diff = nn::sub(nn::gather_rows(pass.lanes, std::move(rows)), tape.constant(std::move(target)));
    loss = nn::add(loss, nn::scale(nn::mean(nn::abs(diff)), w.reg));
  }
  return loss;
}

struct TrainConfig {
  std::size_t epochs = 24;
  std::size_t batch_size = 2;
  std::uint64_t seed = 0;
  nn::AdamConfig adam{};
  bool cosine = true;
  LossWeights weights{};
  TopologyLossKind topology_loss = TopologyLossKind::focal;
  /// Ablation: also put G_dis under the topology loss.
  bool supervise_gdis_directly = false;
  NoiseConfig noise{};

  void validate() const {
    if (epochs < 1) throw InvalidInput("epochs must be >= 1");
    if (batch_size < 1) throw InvalidInput("batch_size must be >= 1");
    weights.validate();
    noise.validate();
  }
};

struct SceneLosses {
  nn::Var total;
  double det = 0.0;
  double top = 0.0;
  MatchResult match;
};

/// Builds L = L_det + w_top L_top for one forward pass.
inline SceneLosses scene_losses(const ForwardPass& pass, const LaneGraph& gt, const TrainConfig& cfg) {
  const auto lanes = unflatten_lanes(pass.lanes.value());
  const auto& sv = pass.scores.value().values();
  const std::vector<double> scores(sv.begin(), sv.end());
  SceneLosses out;
  out.match = gt.lanes.empty() ? MatchResult{} : hungarian(matching_cost(scores, lanes, gt, cfg.weights));
  const nn::Var det = detection_loss(pass, gt, out.match, cfg.weights);
  out.det = det.value().item();
  nn::Var total = det;
  std::optional<nn::Var> top;
  if (pass.supervised) top = topology_loss(*pass.supervised, gt, out.match, cfg.topology_loss);
  if (cfg.supervise_gdis_directly && pass.g_dis) {
    const nn::Var extra = topology_loss(*pass.g_dis, gt, out.match, cfg.topology_loss);
    top = top ? nn::add(*top, extra) : extra;
  }
  if (top) {
    out.top = top->value().item();
    total = nn::add(total, nn::scale(*top, cfg.weights.top));
  }
  out.total = total;
  return out;
}

struct LogRecord {
  std::size_t step = 0;
  double l_det = 0.0;
  double l_top = 0.0;
  double alpha = 0.0;
  double lambda = 0.0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double mean_det = 0.0;
  double mean_top = 0.0;
  std::size_t steps = 0;
};

struct TrainState {
  Model model;
  nn::AdamState optimizer;
  std::size_t epoch = 0;
};

inline TrainState make_train_state(const ModelConfig& mc, const TrainConfig& tc) {
  return {Model::init(mc), nn::AdamState{tc.adam, 0, {}}, 0};
}

using LogSink = std::function<void(const LogRecord&)>;

/// Noise seed for scene `index` in epoch `epoch`.
inline std::uint64_t epoch_noise_seed(std::uint64_t base, std::size_t epoch, std::size_t index) {
  return mix_seed(mix_seed(base, epoch), index);
}

/// One pass over `scenes` in order. Fresh candidate noise is drawn per epoch.
inline EpochMetrics train_epoch(TrainState& state, std::span<const Scene> scenes, const TrainConfig& cfg,
                                const LogSink& log = {}) {
  cfg.validate();
  if (scenes.empty()) throw InvalidInput("training set is empty");
  Model& model = state.model;
  const auto params = model.parameters();
  const std::size_t steps_per_epoch = (scenes.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = steps_per_epoch * cfg.epochs;
  EpochMetrics em;
  em.epoch = state.epoch;
  for (std::size_t start = 0; start < scenes.size(); start += cfg.batch_size) {
    const std::size_t end = std::min(scenes.size(), start + cfg.batch_size);
    nn::Gradients grads;
    double det = 0.0, top = 0.0;
    for (std::size_t s = start; s < end; ++s) {
      NoiseConfig noise = cfg.noise;
      noise.seed = epoch_noise_seed(cfg.seed, state.epoch, s);
      const CandidateSet cands = perturb_scene(scenes[s], noise);
      if (cands.candidates.empty()) continue;
      nn::Tape tape;
      SceneLosses l;
      nn::Gradients g;
      try {
        l = scene_losses(model.forward(tape, cands), scenes[s].graph, cfg);
        if (!std::isfinite(l.total.value().item())) throw NumericalError("non-finite loss");
        g = tape.backward(l.total);
      } catch (const NumericalError& e) {
        throw NumericalError("scene '" + scenes[s].id + "' at step " + std::to_string(state.optimizer.step) + ": " +
                             e.what());
      }
      for (nn::Parameter* p : params)
        if (const nn::Matrix* gp = g.find(*p)) grads.accumulate(*p, *gp);
      det += l.det;
      top += l.top;
    }
    const double count = static_cast<double>(end - start);
    grads.scale(1.0 / count);
    const double lr = cfg.cosine ? nn::cosine_lr(cfg.adam.lr, state.optimizer.step, total_steps) : cfg.adam.lr;
    nn::adam_step(state.optimizer, params, grads, lr);
    em.mean_det += det;
    em.mean_top += top;
    em.steps += 1;
    if (log) {
      const MappingParams mp = model.geo.values();
      log({state.optimizer.step, det / count, top / count, mp.alpha, mp.lambda, model.fusion.lambda1.value.item(),
           model.fusion.lambda2.value.item()});
    }
  }
  em.mean_det /= static_cast<double>(scenes.size());
  em.mean_top /= static_cast<double>(scenes.size());
  state.epoch += 1;
  return em;
}

/// Runs cfg.epochs epochs; `on_epoch` sees the state after each one.
inline std::vector<EpochMetrics> train(TrainState& state, std::span<const Scene> scenes, const TrainConfig& cfg,
                                       const LogSink& log = {},
                                       const std::function<void(TrainState&, const EpochMetrics&)>& on_epoch = {}) {
  std::vector<EpochMetrics> out;
  while (state.epoch < cfg.epochs) {
    out.push_back(train_epoch(state, scenes, cfg, log));
    if (on_epoch) on_epoch(state, out.back());
  }
  return out;
}

}  // namespace topologic
