#pragma once

// Brute-force reference implementations used by the unit tests and the
// acceptance runner. They follow the definitions directly. The only library
// routine they lean on is the Frechet DP, which has its own oracle here.

#include <algorithm>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "topologic/experiment.hpp"

namespace topologic::oracle {

/// Minimum assignment cost over every injective map from the smaller side
/// into the larger one, summed in row order.
inline double brute_force_assignment(const CostMatrix& c) {
  const bool flip = c.rows > c.cols;
  const std::size_t small = flip ? c.cols : c.rows;
  const std::size_t large = flip ? c.rows : c.cols;
  std::vector<std::size_t> perm(large);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    // Row-order summation: map back to (row, col) pairs sorted by row.
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t k = 0; k < small; ++k) pairs.emplace_back(flip ? perm[k] : k, flip ? k : perm[k]);
    std::sort(pairs.begin(), pairs.end());
    double total = 0.0;
    for (auto [r, col] : pairs) total += c(r, col);
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

/// Minimum over every monotone coupling walk of the largest pair distance.
inline double recursive_frechet(const LaneLine& a, const LaneLine& b) {
  const std::size_t n = a.size(), m = b.size();
  double best = std::numeric_limits<double>::infinity();
  std::function<void(std::size_t, std::size_t, double)> walk = [&](std::size_t i, std::size_t j, double worst) {
    worst = std::max(worst, distance(a[i], b[j]));
    if (worst >= best) return;
    if (i + 1 == n && j + 1 == m) {
      best = worst;
      return;
    }
    if (i + 1 < n) walk(i + 1, j, worst);
    if (j + 1 < m) walk(i, j + 1, worst);
    if (i + 1 < n && j + 1 < m) walk(i + 1, j + 1, worst);
  };
  walk(0, 0, 0.0);
  return best;
}

/// Maximum-cardinality matching among pairs within `threshold`, ties broken by
/// minimum total distance. Returns pred index per gt (npos when unmatched).
/// Pair distances come from the dynamic program, which is checked against
/// recursive_frechet separately; the recursion is too slow for 11 points.
inline std::vector<std::size_t> brute_force_topology_match(const Prediction& pred, const LaneGraph& gt,
                                                           double threshold) {
  const std::size_t n = gt.lanes.size(), m = pred.lanes.size();
  std::vector<std::vector<double>> d(n, std::vector<double>(m));
  for (std::size_t g = 0; g < n; ++g)
    for (std::size_t p = 0; p < m; ++p) d[g][p] = discrete_frechet(pred.lanes[p], gt.lanes[g]);
  std::vector<std::size_t> cur(n, MatchResult::npos), best = cur;
  std::vector<char> used(m, 0);
  std::size_t best_count = 0;
  double best_cost = std::numeric_limits<double>::infinity();
  std::function<void(std::size_t, std::size_t, double)> rec = [&](std::size_t g, std::size_t count, double cost) {
    if (g == n) {
      if (count > best_count || (count == best_count && cost < best_cost)) {
        best_count = count;
        best_cost = cost;
        best = cur;
      }
      return;
    }
    rec(g + 1, count, cost);
    for (std::size_t p = 0; p < m; ++p) {
      if (used[p] || d[g][p] > threshold) continue;
      used[p] = 1;
      cur[g] = p;
      rec(g + 1, count + 1, cost + d[g][p]);
      cur[g] = MatchResult::npos;
      used[p] = 0;
    }
  };
  rec(0, 0, 0.0);
  return best;
}

/// Per-vertex AP from explicit ranks: rank of a candidate is one plus the
/// number of candidates ahead of it (higher confidence, or equal confidence and
/// lower gt index). Candidates with zero confidence are not predictions.
inline std::optional<double> brute_force_top_ll(const Prediction& pred, const LaneGraph& gt,
                                                double threshold = kTopMatchThreshold) {
  if (gt.edges.empty()) return std::nullopt;
  const std::size_t n = gt.lanes.size();
  const auto pred_of = brute_force_topology_match(pred, gt, threshold);
  double sum = 0.0;
  std::size_t vertices = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t successors = 0;
    for (std::size_t j = 0; j < n; ++j) successors += gt.edges.contains({i, j});
    if (successors == 0) continue;
    ++vertices;
    if (pred_of[i] == MatchResult::npos) continue;
    std::vector<double> conf(n, 0.0);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && pred_of[j] != MatchResult::npos) conf[j] = pred.topology(pred_of[i], pred_of[j]);
    auto ahead = [&](std::size_t k, std::size_t j) { return conf[k] > conf[j] || (conf[k] == conf[j] && k < j); };
    // (rank, precision at that rank) for each true positive.
    std::vector<std::pair<std::size_t, double>> terms;
    for (std::size_t j = 0; j < n; ++j) {
      if (conf[j] <= 0.0 || !gt.edges.contains({i, j})) continue;
      std::size_t rank = 1, tp_at = 1;
      for (std::size_t k = 0; k < n; ++k) {
        if (k == j || conf[k] <= 0.0 || !ahead(k, j)) continue;
        ++rank;
        if (gt.edges.contains({i, k})) ++tp_at;
      }
      terms.emplace_back(rank, static_cast<double>(tp_at) / static_cast<double>(rank));
    }
    std::sort(terms.begin(), terms.end());
    double ap = 0.0;
    for (const auto& t : terms) ap += t.second;
    sum += ap / static_cast<double>(successors);
  }
  return sum / static_cast<double>(vertices);
}

/// Ground truth restated as a prediction: every lane at score 1 with the
/// exact adjacency as topology.
inline Prediction perfect_prediction(const Scene& s) {
  Prediction p;
  p.scene_id = s.id;
  p.lanes = s.graph.lanes;
  p.scores.assign(p.lanes.size(), 1.0);
  p.topology = TopologyMatrix(p.lanes.size(), 0.0, true);
  for (auto [i, j] : s.graph.edges) p.topology(i, j) = 1.0;
  return p;
}

inline Prediction empty_prediction(const Scene& s) {
  Prediction p;
  p.scene_id = s.id;
  p.topology = TopologyMatrix(0, 0.0, true);
  return p;
}

inline LaneLine shifted(const LaneLine& l, double dx, double dy) {
  std::vector<Point3> pts;
  for (const auto& p : l.points()) pts.push_back({p.x + dx, p.y + dy, p.z});
  return LaneLine(std::move(pts));
}

inline LaneLine jittered(Rng& rng, const LaneLine& l, double sigma) {
  std::vector<Point3> pts;
  for (const auto& p : l.points()) pts.push_back({p.x + sigma * rng.normal(), p.y + sigma * rng.normal(), p.z});
  return LaneLine(std::move(pts));
}

/// A scene with at most `max_lanes` lanes and a noisy, shuffled prediction
/// with quantized confidences (to exercise ties) and an optional near-duplicate.
inline std::pair<Scene, Prediction> random_top_case(Rng& rng, std::size_t max_lanes) {
  static constexpr Layout kLayouts[] = {Layout::straight_chain, Layout::fork, Layout::merge};
  SceneConfig sc = preset_config(kLayouts[rng.integer(0, 2)], rng.next());
  sc.max_lanes = std::min(sc.max_lanes, max_lanes);
  const Scene s = generate_scene(sc);
  std::vector<LaneLine> lanes;
  const double sigma = rng.uniform(0.0, 0.8);
  for (const auto& l : s.graph.lanes)
    if (rng.uniform() < 0.9) lanes.push_back(jittered(rng, l, sigma));
  if (!s.graph.lanes.empty() && rng.uniform() < 0.5)
    lanes.push_back(shifted(s.graph.lanes[rng.integer(0, s.graph.lanes.size() - 1)], 0.0, rng.uniform(0.3, 1.4)));
  for (std::size_t i = lanes.size(); i > 1; --i) std::swap(lanes[i - 1], lanes[rng.integer(0, i - 1)]);
  std::vector<double> scores;
  for (std::size_t i = 0; i < lanes.size(); ++i) scores.push_back(rng.uniform());
  Prediction p;
  p.scene_id = s.id;
  p.topology = TopologyMatrix(lanes.size(), 0.0, true);
  p.lanes = std::move(lanes);
  p.scores = std::move(scores);
  for (std::size_t i = 0; i < p.topology.n; ++i)
    for (std::size_t j = 0; j < p.topology.n; ++j)
      if (i != j) p.topology(i, j) = static_cast<double>(rng.integer(0, 5)) / 5.0;
  return {s, p};
}

}  // namespace topologic::oracle
