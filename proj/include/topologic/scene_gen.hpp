#pragma once

// Synthetic lane-graph scenes and the endpoint-shift noise model that stands
// in for a learned perception front-end.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "topologic/core.hpp"
#include "topologic/random.hpp"

namespace topologic {

/// Generation failed: the layout cannot be realized within the configured ranges.
class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Layout { straight_chain, fork, merge, grid_intersection };

inline constexpr Layout kAllLayouts[] = {Layout::straight_chain, Layout::fork, Layout::merge, Layout::grid_intersection};

inline const char* to_string(Layout layout) {
  switch (layout) {
    case Layout::straight_chain: return "straight_chain";
    case Layout::fork: return "fork";
    case Layout::merge: return "merge";
    case Layout::grid_intersection: return "grid_intersection";
  }
  return "?";
}

inline Layout parse_layout(const std::string& s) {
  if (s == "straight_chain" || s == "chain") return Layout::straight_chain;
  if (s == "fork") return Layout::fork;
  if (s == "merge") return Layout::merge;
  if (s == "grid_intersection" || s == "grid") return Layout::grid_intersection;
  throw InvalidInput("unknown layout '" + s + "'");
}

struct Interval {
  double min = 0.0;
  double max = 0.0;
};

struct SceneConfig {
  Layout layout = Layout::straight_chain;
  std::size_t min_lanes = 3;
  std::size_t max_lanes = 3;
  Interval lane_length{15.0, 30.0};
  /// Signed curvature of arm lanes, 1/m.
  Interval curvature{-0.01, 0.01};
  std::uint64_t seed = 0;
  /// Scene id; empty means "scene-<seed>".
  std::string id;

  void validate() const {
    if (min_lanes > max_lanes) throw InvalidInput("lane count range is empty (min > max)");
    if (max_lanes == 0) throw InvalidInput("lane count range must allow at least one lane");
    if (lane_length.min > lane_length.max) throw InvalidInput("lane length range is empty");
    if (lane_length.min <= 0.0) throw InvalidInput("lane lengths must be positive");
    if (curvature.min > curvature.max) throw InvalidInput("curvature range is empty");
  }
};

struct NoiseConfig {
  /// Isotropic Gaussian std added to every point coordinate, meters.
  double endpoint_sigma = 0.3;
  double drop_prob = 0.0;
  std::size_t distractor_count = 0;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(endpoint_sigma >= 0.0)) throw InvalidInput("endpoint_sigma must be >= 0");
    if (!(drop_prob >= 0.0 && drop_prob <= 1.0)) throw InvalidInput("drop_prob must lie in [0,1]");
  }
};

struct CandidateOrigin {
  /// Index of the ground-truth lane, or nullopt for a distractor.
  std::optional<std::size_t> true_lane;
  bool distractor() const { return !true_lane.has_value(); }
  friend bool operator==(const CandidateOrigin&, const CandidateOrigin&) = default;
};

struct CandidateSet {
  std::string scene_id;
  std::vector<LaneLine> candidates;
  std::vector<CandidateOrigin> origins;
};

/// Uniform arc-length resampling to `k` points; the first and last input
/// points are copied exactly.
inline LaneLine resample_polyline(const LaneLine& lane, std::size_t k = kLanePoints) {
  if (k < 2) throw InvalidInput("resample_polyline needs k >= 2");
  const auto& pts = lane.points();
  std::vector<double> cumulative(pts.size(), 0.0);
  for (std::size_t i = 1; i < pts.size(); ++i) cumulative[i] = cumulative[i - 1] + distance(pts[i - 1], pts[i]);
  const double total = cumulative.back();
  if (!(total > 0.0)) throw InvalidInput("cannot resample a polyline with zero arc length");

  std::vector<Point3> out;
  out.reserve(k);
  out.push_back(pts.front());
  std::size_t seg = 0;
  for (std::size_t m = 1; m + 1 < k; ++m) {
    const double target = total * static_cast<double>(m) / static_cast<double>(k - 1);
    while (seg + 2 < pts.size() && cumulative[seg + 1] < target) ++seg;
    const double seg_len = cumulative[seg + 1] - cumulative[seg];
    const double t = seg_len > 0.0 ? std::clamp((target - cumulative[seg]) / seg_len, 0.0, 1.0) : 0.0;
    out.push_back(pts[seg] + (pts[seg + 1] - pts[seg]) * t);
  }
  out.push_back(pts.back());
  return LaneLine(std::move(out));
}

namespace detail {

/// Constant-curvature arc sampled densely; the first point is `start` exactly.
inline std::vector<Point3> arc_points(const Point3& start, double heading, double length, double curvature) {
  const std::size_t segments = std::max<std::size_t>(20, static_cast<std::size_t>(length / 0.5));
  std::vector<Point3> pts;
  pts.reserve(segments + 1);
  pts.push_back(start);
  for (std::size_t i = 1; i <= segments; ++i) {
    const double s = length * static_cast<double>(i) / static_cast<double>(segments);
    Point3 p = start;
    if (std::abs(curvature) < 1e-9) {
      p.x += s * std::cos(heading);
      p.y += s * std::sin(heading);
    } else {
      p.x += (std::sin(heading + curvature * s) - std::sin(heading)) / curvature;
      p.y -= (std::cos(heading + curvature * s) - std::cos(heading)) / curvature;
    }
    pts.push_back(p);
  }
  return pts;
}

inline double end_heading(double heading, double length, double curvature) { return heading + curvature * length; }

/// Cubic Bezier from p0 to p3; endpoints copied exactly.
inline std::vector<Point3> bezier_points(const Point3& p0, const Point3& p1, const Point3& p2, const Point3& p3,
                                         std::size_t segments = 40) {
  std::vector<Point3> pts;
  pts.reserve(segments + 1);
  pts.push_back(p0);
  for (std::size_t i = 1; i < segments; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(segments);
    const double u = 1.0 - t;
    pts.push_back(p0 * (u * u * u) + p1 * (3.0 * u * u * t) + p2 * (3.0 * u * t * t) + p3 * (t * t * t));
  }
  pts.push_back(p3);
  return pts;
}

inline LaneLine canonical(std::vector<Point3> raw) { return resample_polyline(LaneLine(std::move(raw))); }

/// Lane that ends exactly at `end`, arriving with `heading`.
inline LaneLine lane_ending_at(const Point3& end, double heading, double length, double curvature) {
  auto pts = arc_points(end, heading + std::numbers::pi, length, curvature);
  std::reverse(pts.begin(), pts.end());
  return canonical(std::move(pts));
}

/// Tilt and rigid placement. Identical input points map to identical
/// outputs, so zero endpoint gaps survive.
struct Placement {
  double yaw = 0.0;
  double tx = 0.0;
  double ty = 0.0;
  double grade_x = 0.0;
  double grade_y = 0.0;

  Point3 apply(const Point3& p) const {
    const double z = p.z + grade_x * p.x + grade_y * p.y;
    const double c = std::cos(yaw);
    const double s = std::sin(yaw);
    return {c * p.x - s * p.y + tx, s * p.x + c * p.y + ty, z};
  }
};

inline std::size_t draw_count(Rng& rng, std::size_t lo, std::size_t hi) {
  return static_cast<std::size_t>(rng.integer(lo, hi));
}

}  // namespace detail

/// Builds a ground-truth scene whose edges all have an exactly zero
/// end-to-start gap. Deterministic in `config.seed`.
inline Scene generate_scene(const SceneConfig& config) {
  config.validate();
  Rng rng(config.seed);
  auto length = [&] { return rng.uniform(config.lane_length.min, config.lane_length.max); };
  auto curvature = [&] { return rng.uniform(config.curvature.min, config.curvature.max); };

  LaneGraph graph;
  auto& lanes = graph.lanes;

  switch (config.layout) {
    case Layout::straight_chain: {
      const std::size_t n = detail::draw_count(rng, std::max<std::size_t>(1, config.min_lanes), config.max_lanes);
      Point3 start{0.0, 0.0, 0.0};
      double heading = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double len = length();
        const double k = curvature();
        lanes.push_back(detail::canonical(detail::arc_points(start, heading, len, k)));
        start = lanes.back().end();
        heading = detail::end_heading(heading, len, k);
        if (i > 0) graph.edges.emplace(i - 1, i);
      }
      break;
    }
    case Layout::fork:
    case Layout::merge: {
      if (config.max_lanes < 3) {
        throw GenerationError(std::string(to_string(config.layout)) + " needs at least 3 lanes, max is " +
                              std::to_string(config.max_lanes));
      }
      const std::size_t n = detail::draw_count(rng, std::max<std::size_t>(3, config.min_lanes), config.max_lanes);
      const std::size_t branches = n - 1;
      const double spread = 0.35;
      auto offset = [&](std::size_t c) {
        if (branches == 1) return 0.0;
        return spread * (2.0 * static_cast<double>(c) / static_cast<double>(branches - 1) - 1.0);
      };
      if (config.layout == Layout::fork) {
        const double len = length();
        const double k = curvature();
        lanes.push_back(detail::canonical(detail::arc_points({0.0, 0.0, 0.0}, 0.0, len, k)));
        const Point3 junction = lanes.front().end();
        const double heading = detail::end_heading(0.0, len, k);
        for (std::size_t c = 0; c < branches; ++c) {
          const double off = offset(c);
          const double bend = curvature() + 0.02 * (off > 0 ? 1.0 : off < 0 ? -1.0 : 0.0);
          lanes.push_back(detail::canonical(detail::arc_points(junction, heading + off, length(), bend)));
          graph.edges.emplace(0, c + 1);
        }
      } else {
        const Point3 junction{0.0, 0.0, 0.0};
        for (std::size_t c = 0; c < branches; ++c) {
          const double off = offset(c);
          const double bend = curvature() - 0.02 * (off > 0 ? 1.0 : off < 0 ? -1.0 : 0.0);
          lanes.push_back(detail::lane_ending_at(junction, off, length(), bend));
          graph.edges.emplace(c, branches);
        }
        lanes.push_back(detail::canonical(detail::arc_points(junction, 0.0, length(), curvature())));
      }
      break;
    }
    case Layout::grid_intersection: {
      // Arm count A gives 2A arm lanes plus A(A-1) turning connectors.
      std::vector<std::size_t> arm_options;
      for (std::size_t arms : {3u, 4u}) {
        const std::size_t total = 2 * arms + arms * (arms - 1);
        if (total >= config.min_lanes && total <= config.max_lanes) arm_options.push_back(arms);
      }
      if (arm_options.empty()) {
        throw GenerationError("grid_intersection needs 12 (3 arms) or 20 (4 arms) lanes within [" +
                              std::to_string(config.min_lanes) + "," + std::to_string(config.max_lanes) + "]");
      }
      const std::size_t arms = arm_options[detail::draw_count(rng, 0, arm_options.size() - 1)];
      const double half = rng.uniform(7.0, 10.0);
      const double lane_offset = 1.75;
      std::vector<Point3> in_end(arms);
      std::vector<Point3> out_start(arms);
      std::vector<Point3> dir(arms);
      for (std::size_t a = 0; a < arms; ++a) {
        const double phi = std::numbers::pi * 0.5 * static_cast<double>(a);
        dir[a] = {std::cos(phi), std::sin(phi), 0.0};
        const Point3 normal{-dir[a].y, dir[a].x, 0.0};
        in_end[a] = dir[a] * half + normal * (-lane_offset);
        out_start[a] = dir[a] * half + normal * lane_offset;
      }
      for (std::size_t a = 0; a < arms; ++a) {
        const double phi = std::numbers::pi * 0.5 * static_cast<double>(a);
        lanes.push_back(detail::lane_ending_at(in_end[a], phi + std::numbers::pi, length(), curvature()));
      }
      for (std::size_t a = 0; a < arms; ++a) {
        const double phi = std::numbers::pi * 0.5 * static_cast<double>(a);
        lanes.push_back(detail::canonical(detail::arc_points(out_start[a], phi, length(), curvature())));
      }
      for (std::size_t a = 0; a < arms; ++a) {
        for (std::size_t b = 0; b < arms; ++b) {
          if (a == b) continue;
          const Point3 p0 = lanes[a].end();
          const Point3 p3 = lanes[arms + b].start();
          const double reach = 0.4 * distance(p0, p3);
          const std::size_t idx = lanes.size();
          lanes.push_back(detail::canonical(detail::bezier_points(p0, p0 - dir[a] * reach, p3 - dir[b] * reach, p3)));
          graph.edges.emplace(a, idx);
          graph.edges.emplace(idx, arms + b);
        }
      }
      break;
    }
  }

  detail::Placement place;
  place.yaw = rng.uniform(-std::numbers::pi, std::numbers::pi);
  place.tx = rng.uniform(-10.0, 10.0);
  place.ty = rng.uniform(-10.0, 10.0);
  place.grade_x = rng.uniform(-0.02, 0.02);
  place.grade_y = rng.uniform(-0.02, 0.02);
  for (auto& lane : lanes) {
    std::vector<Point3> pts;
    pts.reserve(lane.size());
    for (const auto& p : lane.points()) pts.push_back(place.apply(p));
    lane = LaneLine(std::move(pts));
  }

  Scene scene;
  scene.id = config.id.empty() ? "scene-" + std::to_string(config.seed) : config.id;
  scene.graph = std::move(graph);
  scene.metadata["layout"] = to_string(config.layout);
  scene.metadata["seed"] = std::to_string(config.seed);
  return scene;
}

namespace detail {

struct Bounds {
  Point3 lo;
  Point3 hi;
};

inline Bounds bounds_of(const std::vector<LaneLine>& lanes) {
  Bounds b{{0, 0, 0}, {0, 0, 0}};
  bool first = true;
  for (const auto& lane : lanes) {
    for (const auto& p : lane.points()) {
      if (first) {
        b.lo = b.hi = p;
        first = false;
        continue;
      }
      b.lo = {std::min(b.lo.x, p.x), std::min(b.lo.y, p.y), std::min(b.lo.z, p.z)};
      b.hi = {std::max(b.hi.x, p.x), std::max(b.hi.y, p.y), std::max(b.hi.z, p.z)};
    }
  }
  return b;
}

/// Smooth false-positive lane: a cubic Bezier with a random gentle bend.
inline LaneLine distractor_lane(Rng& rng, const Bounds& box, Interval length_range) {
  const Point3 p0{rng.uniform(box.lo.x, box.hi.x), rng.uniform(box.lo.y, box.hi.y),
                  rng.uniform(box.lo.z, box.hi.z)};
  const double heading = rng.uniform(-std::numbers::pi, std::numbers::pi);
  const double len = rng.uniform(length_range.min, length_range.max);
  const double turn = rng.uniform(-0.6, 0.6);
  const Point3 d0{std::cos(heading), std::sin(heading), 0.0};
  const Point3 d1{std::cos(heading + turn), std::sin(heading + turn), 0.0};
  const Point3 p3 = p0 + (d0 + d1) * (0.5 * len);
  return canonical(bezier_points(p0, p0 + d0 * (len / 3.0), p3 - d1 * (len / 3.0), p3));
}

}  // namespace detail

/// Simulated detector output: noisy surviving lanes followed by distractors.
inline CandidateSet perturb_scene(const Scene& scene, const NoiseConfig& noise, Interval distractor_length = {15.0, 30.0}) {
  noise.validate();
  Rng rng(noise.seed);
  CandidateSet out;
  out.scene_id = scene.id;
  const auto& lanes = scene.graph.lanes;
  for (std::size_t i = 0; i < lanes.size(); ++i) {
    const bool dropped = noise.drop_prob > 0.0 && rng.uniform() < noise.drop_prob;
    if (dropped) continue;
    if (noise.endpoint_sigma == 0.0) {
      out.candidates.push_back(lanes[i]);
    } else {
      std::vector<Point3> pts;
      pts.reserve(lanes[i].size());
      for (const auto& p : lanes[i].points()) {
        const double dx = rng.normal() * noise.endpoint_sigma;
        const double dy = rng.normal() * noise.endpoint_sigma;
        const double dz = rng.normal() * noise.endpoint_sigma;
        pts.push_back({p.x + dx, p.y + dy, p.z + dz});
      }
      out.candidates.emplace_back(std::move(pts));
    }
    out.origins.push_back({i});
  }
  if (noise.distractor_count > 0) {
    const auto box = detail::bounds_of(lanes);
    for (std::size_t d = 0; d < noise.distractor_count; ++d) {
      out.candidates.push_back(detail::distractor_lane(rng, box, distractor_length));
      out.origins.push_back({std::nullopt});
    }
  }
  return out;
}

/// Per-layout lane-count presets used by mixed datasets.
inline SceneConfig preset_config(Layout layout, std::uint64_t seed) {
  SceneConfig cfg;
  cfg.layout = layout;
  cfg.seed = seed;
  switch (layout) {
    case Layout::straight_chain: cfg.min_lanes = 2; cfg.max_lanes = 5; break;
    case Layout::fork:
    case Layout::merge: cfg.min_lanes = 3; cfg.max_lanes = 4; break;
    case Layout::grid_intersection: cfg.min_lanes = 12; cfg.max_lanes = 20; break;
  }
  return cfg;
}

}  // namespace topologic
