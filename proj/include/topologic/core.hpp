#pragma once

// Geometry and graph types shared by every topologic module.

#include <cmath>
#include <cstddef>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace topologic {

/// Malformed input: bad shapes, out-of-range indices, invalid geometry.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A computation produced NaN/Inf or another non-recoverable numeric state.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Number of points in a canonically resampled lane.
inline constexpr std::size_t kLanePoints = 11;

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }

  friend bool operator==(const Point3&, const Point3&) = default;
};

inline Point3 operator+(const Point3& a, const Point3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Point3 operator-(const Point3& a, const Point3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Point3 operator*(const Point3& a, double s) { return {a.x * s, a.y * s, a.z * s}; }
inline Point3 operator*(double s, const Point3& a) { return a * s; }

inline double norm(const Point3& p) { return std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z); }
inline double distance(const Point3& a, const Point3& b) { return norm(a - b); }

/// Directed 3-D polyline. Index 0 is the start, the last index the end.
class LaneLine {
 public:
  explicit LaneLine(std::vector<Point3> points) : points_(std::move(points)) {
    if (points_.size() < 2) {
      throw InvalidInput("lane needs at least 2 points, got " + std::to_string(points_.size()));
    }
    for (std::size_t i = 0; i < points_.size(); ++i) {
      if (!points_[i].finite()) {
        throw InvalidInput("lane point " + std::to_string(i) + " is not finite");
      }
    }
  }

  const std::vector<Point3>& points() const { return points_; }
  std::size_t size() const { return points_.size(); }
  const Point3& operator[](std::size_t i) const { return points_[i]; }
  const Point3& start() const { return points_.front(); }
  const Point3& end() const { return points_.back(); }
  bool canonical() const { return points_.size() == kLanePoints; }

  double arc_length() const {
    double total = 0.0;
    for (std::size_t i = 1; i < points_.size(); ++i) total += distance(points_[i - 1], points_[i]);
    return total;
  }

  LaneLine reversed() const { return LaneLine(std::vector<Point3>(points_.rbegin(), points_.rend())); }

  friend bool operator==(const LaneLine&, const LaneLine&) = default;

 private:
  std::vector<Point3> points_;
};

inline std::pair<Point3, Point3> endpoints(const LaneLine& lane) { return {lane.start(), lane.end()}; }

using Edge = std::pair<std::size_t, std::size_t>;
using EdgeSet = std::set<Edge>;

struct LaneGraph {
  std::vector<LaneLine> lanes;
  EdgeSet edges;
};

/// Dense n x n row-major matrix of connectivity scores.
struct TopologyMatrix {
  std::size_t n = 0;
  std::vector<double> values;
  /// Set when every entry is a probability in [0, 1].
  bool calibrated = false;

  TopologyMatrix() = default;
  explicit TopologyMatrix(std::size_t size, double fill = 0.0, bool is_calibrated = true)
      : n(size), values(size * size, fill), calibrated(is_calibrated) {}

  double& operator()(std::size_t i, std::size_t j) { return values[i * n + j]; }
  double operator()(std::size_t i, std::size_t j) const { return values[i * n + j]; }

  /// Checks finiteness always and [0,1] when calibrated.
  void validate() const {
    if (values.size() != n * n) throw InvalidInput("topology matrix storage does not match n*n");
    for (std::size_t k = 0; k < values.size(); ++k) {
      if (!std::isfinite(values[k])) {
        throw NumericalError("topology entry (" + std::to_string(k / n) + "," + std::to_string(k % n) +
                             ") is not finite");
      }
      if (calibrated && (values[k] < 0.0 || values[k] > 1.0)) {
        throw InvalidInput("calibrated topology entry (" + std::to_string(k / n) + "," +
                           std::to_string(k % n) + ") outside [0,1]");
      }
    }
  }
};

/// Dense n x n matrix of end-to-start gaps in meters.
struct DistanceMatrix {
  std::size_t n = 0;
  std::vector<double> values;

  DistanceMatrix() = default;
  explicit DistanceMatrix(std::size_t size) : n(size), values(size * size, 0.0) {}

  double& operator()(std::size_t i, std::size_t j) { return values[i * n + j]; }
  double operator()(std::size_t i, std::size_t j) const { return values[i * n + j]; }
};

/// Binary adjacency: entry (i,j) is 1 iff (i,j) is in `edges`.
inline TopologyMatrix adjacency_from_edges(const EdgeSet& edges, std::size_t n) {
  TopologyMatrix adj(n, 0.0, true);
  for (const auto& [i, j] : edges) {
    if (i >= n || j >= n) {
      throw InvalidInput("edge (" + std::to_string(i) + "," + std::to_string(j) + ") out of range for " +
                         std::to_string(n) + " lanes");
    }
    adj(i, j) = 1.0;
  }
  return adj;
}

inline EdgeSet edges_from_adjacency(const TopologyMatrix& adj) {
  EdgeSet edges;
  for (std::size_t i = 0; i < adj.n; ++i)
    for (std::size_t j = 0; j < adj.n; ++j)
      if (adj(i, j) != 0.0) edges.emplace(i, j);
  return edges;
}

struct Scene {
  std::string id;
  LaneGraph graph;
  std::map<std::string, std::string> metadata;
};

enum class ViolationKind { edge_out_of_range, self_edge, endpoint_gap, non_canonical_lane, zero_length_lane };

struct Violation {
  ViolationKind kind;
  std::string message;
  Edge edge{0, 0};
  /// Measured end-to-start gap for endpoint_gap violations.
  double gap = 0.0;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

inline ValidationReport validate_scene(const Scene& scene, bool exact_endpoints) {
  ValidationReport report;
  const auto& lanes = scene.graph.lanes;
  const std::size_t n = lanes.size();

  for (std::size_t i = 0; i < n; ++i) {
    if (!lanes[i].canonical()) {
      report.violations.push_back({ViolationKind::non_canonical_lane,
                                   "lane " + std::to_string(i) + " has " + std::to_string(lanes[i].size()) +
                                       " points, expected " + std::to_string(kLanePoints),
                                   {i, i}, 0.0});
    }
    if (lanes[i].arc_length() <= 0.0) {
      report.violations.push_back(
          {ViolationKind::zero_length_lane, "lane " + std::to_string(i) + " has zero arc length", {i, i}, 0.0});
    }
  }

  for (const auto& edge : scene.graph.edges) {
    const auto [i, j] = edge;
    if (i >= n || j >= n) {
      report.violations.push_back({ViolationKind::edge_out_of_range,
                                   "edge (" + std::to_string(i) + "," + std::to_string(j) + ") out of range",
                                   edge, 0.0});
      continue;
    }
    if (i == j) {
      report.violations.push_back(
          {ViolationKind::self_edge, "self edge (" + std::to_string(i) + "," + std::to_string(i) + ")", edge, 0.0});
      continue;
    }
    if (exact_endpoints) {
      const double gap = distance(lanes[i].end(), lanes[j].start());
      if (gap != 0.0) {
        std::ostringstream msg;
        msg << "edge (" << i << "," << j << ") has endpoint gap " << gap << " m";
        report.violations.push_back({ViolationKind::endpoint_gap, msg.str(), edge, gap});
      }
    }
  }
  return report;
}

}  // namespace topologic
