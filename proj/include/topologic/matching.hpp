#pragma once

// Minimum-cost one-to-one assignment on a rectangular cost matrix.

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "topologic/core.hpp"

namespace topologic {

struct CostMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  CostMatrix() = default;
  CostMatrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}
  double& operator()(std::size_t i, std::size_t j) { return values[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
};

struct MatchResult {
  /// (prediction, ground truth) pairs sorted by prediction index.
  std::vector<std::pair<std::size_t, std::size_t>> assignment;
  std::vector<std::size_t> unmatched_predictions;
  std::vector<std::size_t> unmatched_ground_truths;

  /// gt index per prediction, or npos.
  std::vector<std::size_t> gt_of(std::size_t n_pred) const {
    std::vector<std::size_t> out(n_pred, npos);
    for (auto [p, g] : assignment) out[p] = g;
    return out;
  }
  std::vector<std::size_t> pred_of(std::size_t n_gt) const {
    std::vector<std::size_t> out(n_gt, npos);
    for (auto [p, g] : assignment) out[g] = p;
    return out;
  }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

/// Sum of the assigned costs in row order.
inline double assignment_cost(const CostMatrix& cost, const MatchResult& m) {
  double total = 0.0;
  for (auto [p, g] : m.assignment) total += cost(p, g);
  return total;
}

/// Shortest-augmenting-path Hungarian algorithm (potentials form), O(n^2 m).
/// Assigns min(rows, cols) pairs.
inline MatchResult hungarian(const CostMatrix& cost) {
  for (double v : cost.values)
    if (!std::isfinite(v)) throw InvalidInput("assignment cost matrix has a non-finite entry");
  const bool flip = cost.rows > cost.cols;
  const std::size_t n = flip ? cost.cols : cost.rows;
  const std::size_t m = flip ? cost.rows : cost.cols;
  auto a = [&](std::size_t i, std::size_t j) { return flip ? cost(j - 1, i - 1) : cost(i - 1, j - 1); };

  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a(i0, j) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  MatchResult out;
  std::vector<char> row_used(cost.rows, 0), col_used(cost.cols, 0);
  for (std::size_t j = 1; j <= m; ++j) {
    if (p[j] == 0) continue;
    const std::size_t r = flip ? j - 1 : p[j] - 1;
    const std::size_t c = flip ? p[j] - 1 : j - 1;
    out.assignment.emplace_back(r, c);
    row_used[r] = 1;
    col_used[c] = 1;
  }
  std::sort(out.assignment.begin(), out.assignment.end());
  for (std::size_t r = 0; r < cost.rows; ++r)
    if (!row_used[r]) out.unmatched_predictions.push_back(r);
  for (std::size_t c = 0; c < cost.cols; ++c)
    if (!col_used[c]) out.unmatched_ground_truths.push_back(c);
  return out;
}

}  // namespace topologic
