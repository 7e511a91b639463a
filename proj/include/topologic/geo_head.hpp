#pragma once

// Geometric-distance topology: end-to-start gap matrix and the family of
// monotone maps from gap to connection probability.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "topologic/core.hpp"
#include "topologic/nn/ops.hpp"

namespace topologic {

enum class MappingKind { ours, gaussian, sigmoid_based, tanh_based };

inline constexpr MappingKind kAllMappingKinds[] = {MappingKind::ours, MappingKind::gaussian, MappingKind::sigmoid_based,
                                                   MappingKind::tanh_based};

inline const char* to_string(MappingKind k) {
  switch (k) {
    case MappingKind::ours: return "ours";
    case MappingKind::gaussian: return "gaussian";
    case MappingKind::sigmoid_based: return "sigmoid";
    case MappingKind::tanh_based: return "tanh";
  }
  return "?";
}

inline MappingKind parse_mapping_kind(const std::string& s) {
  if (s == "ours") return MappingKind::ours;
  if (s == "gaussian" || s == "gau") return MappingKind::gaussian;
  if (s == "sigmoid" || s == "sigmoid_based" || s == "sig") return MappingKind::sigmoid_based;
  if (s == "tanh" || s == "tanh_based" || s == "tan") return MappingKind::tanh_based;
  throw InvalidInput("unknown mapping kind '" + s + "'");
}

/// Exponent and scale of the learnable map exp(-x^alpha / (lambda * sigma)).
struct MappingParams {
  double alpha = 0.2;
  double lambda = 2.0;

  void validate() const {
    if (!(alpha > 0.0) || !(lambda > 0.0) || !std::isfinite(alpha) || !std::isfinite(lambda)) {
      throw InvalidInput("mapping parameters must be positive and finite");
    }
  }
};

enum class StdMode { population, sample };

/// Floor applied when the distance spread is degenerate.
inline constexpr double kSigmaFloor = 1e-6;

inline DistanceMatrix distance_matrix(std::span<const LaneLine> lanes) {
  DistanceMatrix d(lanes.size());
  for (std::size_t i = 0; i < lanes.size(); ++i)
    for (std::size_t j = 0; j < lanes.size(); ++j) d(i, j) = distance(lanes[i].end(), lanes[j].start());
  return d;
}

/// Same as above for lanes stored as rows of 3k flattened coordinates.
inline DistanceMatrix distance_matrix(const nn::Matrix& flat_lanes) {
  if (flat_lanes.cols() < 6 || flat_lanes.cols() % 3 != 0) throw InvalidInput("flattened lanes need 3k columns, k >= 2");
  const std::size_t n = flat_lanes.rows();
  const std::size_t last = flat_lanes.cols() - 3;
  DistanceMatrix d(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Point3 end{flat_lanes(i, last), flat_lanes(i, last + 1), flat_lanes(i, last + 2)};
    for (std::size_t j = 0; j < n; ++j) d(i, j) = distance(end, {flat_lanes(j, 0), flat_lanes(j, 1), flat_lanes(j, 2)});
  }
  return d;
}

/// Standard deviation over all n^2 entries, floored at kSigmaFloor.
inline double matrix_std(const DistanceMatrix& d, StdMode mode = StdMode::population) {
  if (d.n == 0) throw InvalidInput("matrix_std of an empty distance matrix");
  const double count = static_cast<double>(d.values.size());
  double mu = 0.0;
  for (double v : d.values) mu += v;
  mu /= count;
  double ss = 0.0;
  for (double v : d.values) ss += (v - mu) * (v - mu);
  const double denom = mode == StdMode::population ? count : std::max(count - 1.0, 1.0);
  return std::max(std::sqrt(ss / denom), kSigmaFloor);
}

/// f_kind(x). The fixed kinds ignore `params` and `sigma`.
inline double mapping_value(MappingKind kind, double x, const MappingParams& params = {}, double sigma = 1.0) {
  switch (kind) {
    case MappingKind::ours: return std::exp(-std::pow(x, params.alpha) / (params.lambda * sigma));
    case MappingKind::gaussian: return std::exp(-x * x / 2.0);
    case MappingKind::sigmoid_based: return 2.0 / (1.0 + std::exp(x));
    // (e^-x - e^x)/(e^-x + e^x) + 1 == 2 / (1 + e^{2x}); this form keeps precision for large x.
    case MappingKind::tanh_based: return 2.0 / (1.0 + std::exp(2.0 * x));
  }
  return 0.0;
}

/// log f_kind(x), finite where f itself underflows.
inline double log_mapping_value(MappingKind kind, double x, const MappingParams& params = {}, double sigma = 1.0) {
  auto softplus = [](double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); };
  switch (kind) {
    case MappingKind::ours: return -std::pow(x, params.alpha) / (params.lambda * sigma);
    case MappingKind::gaussian: return -x * x / 2.0;
    case MappingKind::sigmoid_based: return std::log(2.0) - softplus(x);
    case MappingKind::tanh_based: return std::log(2.0) - softplus(2.0 * x);
  }
  return 0.0;
}

struct MappingGradients {
  double d_alpha = 0.0;
  double d_lambda = 0.0;
};

/// Closed-form partials of f_ours; d/d alpha is taken as 0 at x = 0.
inline MappingGradients mapping_gradients(double x, const MappingParams& params, double sigma) {
  if (x < 0.0) throw InvalidInput("mapping_gradients needs x >= 0");
  const double f = mapping_value(MappingKind::ours, x, params, sigma);
  if (x == 0.0) return {0.0, 0.0};
  const double xa = std::pow(x, params.alpha);
  return {-f * xa * std::log(x) / (params.lambda * sigma), f * xa / (params.lambda * params.lambda * sigma)};
}

/// G_dis without a tape: entrywise map, then a zeroed diagonal.
inline TopologyMatrix map_distance(const DistanceMatrix& d, const MappingParams& params, MappingKind kind, double sigma) {
  if (!(sigma > 0.0)) throw InvalidInput("map_distance needs sigma > 0");
  params.validate();
  TopologyMatrix g(d.n, 0.0, true);
  for (std::size_t i = 0; i < d.n; ++i) {
    for (std::size_t j = 0; j < d.n; ++j) {
      const double x = d(i, j);
      if (!(x >= 0.0)) throw InvalidInput("distance entry (" + std::to_string(i) + "," + std::to_string(j) + ") is negative");
      const double v = mapping_value(kind, x, params, sigma);
      if (!std::isfinite(v)) {
        throw NumericalError("mapping produced a non-finite value at (" + std::to_string(i) + "," + std::to_string(j) + ")");
      }
      g(i, j) = i == j ? 0.0 : v;
    }
  }
  return g;
}

/// Learnable alpha and lambda, stored as logarithms so both stay positive.
struct GeoHeadParams {
  nn::Parameter log_alpha{"geo.log_alpha", nn::Matrix::scalar(std::log(0.2))};
  nn::Parameter log_lambda{"geo.log_lambda", nn::Matrix::scalar(std::log(2.0))};

  static GeoHeadParams from(const MappingParams& p) {
    p.validate();
    GeoHeadParams g;
    g.log_alpha.value = nn::Matrix::scalar(std::log(p.alpha));
    g.log_lambda.value = nn::Matrix::scalar(std::log(p.lambda));
    return g;
  }

  MappingParams values() const { return {std::exp(log_alpha.value.item()), std::exp(log_lambda.value.item())}; }

  template <class F>
  void for_each_parameter(F&& f) {
    f(log_alpha);
    f(log_lambda);
  }
};

inline nn::Matrix to_matrix(const DistanceMatrix& d) { return nn::Matrix(d.n, d.n, d.values); }
inline nn::Matrix to_matrix(const TopologyMatrix& g) { return nn::Matrix(g.n, g.n, g.values); }

/// Differentiable G_dis. `sigma` is a constant of the forward pass; only
/// the ours kind depends on the learnable parameters.
inline nn::Var map_distance(nn::Tape& tape, const DistanceMatrix& d, GeoHeadParams& params, MappingKind kind, double sigma) {
  if (!(sigma > 0.0)) throw InvalidInput("map_distance needs sigma > 0");
  if (kind != MappingKind::ours) return tape.constant(to_matrix(map_distance(d, params.values(), kind, sigma)));
  for (double v : d.values)
    if (!(v >= 0.0)) throw InvalidInput("distance matrix has a negative entry");
  const nn::Var alpha = nn::exp(tape.parameter(params.log_alpha));
  const nn::Var lambda = nn::exp(tape.parameter(params.log_lambda));
  const nn::Var coef = nn::scale(nn::power(lambda, -1.0), -1.0 / sigma);
  const nn::Var g = nn::exp(nn::scale_by(nn::power(tape.constant(to_matrix(d)), alpha), coef));
  return nn::zero_diagonal(g);
}

struct CurveRow {
  double x;
  double ours;
  double gaussian;
  double sigmoid;
  double tanh;
};

/// Sample table of every mapping kind over [lo, hi] with `count` points.
inline std::vector<CurveRow> mapping_curves(double lo, double hi, std::size_t count, const MappingParams& params,
                                            double sigma) {
  std::vector<CurveRow> rows;
  rows.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double x = count == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
    rows.push_back({x, mapping_value(MappingKind::ours, x, params, sigma), mapping_value(MappingKind::gaussian, x),
                    mapping_value(MappingKind::sigmoid_based, x), mapping_value(MappingKind::tanh_based, x)});
  }
  return rows;
}

}  // namespace topologic
