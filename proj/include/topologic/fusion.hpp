#pragma once

// Learnable fusion of the geometric and similarity topologies, and the
// residual neighbour aggregation that feeds lane refinement.

#include <algorithm>

#include "topologic/core.hpp"
#include "topologic/nn/mlp.hpp"

namespace topologic {

struct FusionParams {
  nn::Parameter lambda1{"fusion.lambda1", nn::Matrix::scalar(1.0)};
  nn::Parameter lambda2{"fusion.lambda2", nn::Matrix::scalar(1.0)};

  template <class F>
  void for_each_parameter(F&& f) {
    f(lambda1);
    f(lambda2);
  }
};

/// Raw G = lambda1 * G_dis + lambda2 * G_sim (may leave [0, 1]).
inline nn::Var fuse_topology(const nn::Var& g_dis, const nn::Var& g_sim, FusionParams& params) {
  if (!g_dis.value().same_shape(g_sim.value())) {
    throw InvalidInput("fuse_topology shape mismatch: " + g_dis.value().shape() + " vs " + g_sim.value().shape());
  }
  nn::Tape& tape = g_dis.tape();
  return nn::add(nn::scale_by(g_dis, tape.parameter(params.lambda1)), nn::scale_by(g_sim, tape.parameter(params.lambda2)));
}

/// Reporting view: every entry clamped to [0, 1].
inline TopologyMatrix calibrate(const nn::Matrix& raw) {
  if (raw.rows() != raw.cols()) throw InvalidInput("topology must be square, got " + raw.shape());
  TopologyMatrix g(raw.rows(), 0.0, true);
  for (std::size_t k = 0; k < raw.size(); ++k) {
    if (!std::isfinite(raw[k])) throw NumericalError("non-finite fused topology entry");
    g.values[k] = std::min(1.0, std::max(0.0, raw[k]));
  }
  return g;
}

struct FusedTopology {
  TopologyMatrix raw;
  TopologyMatrix calibrated;
};

/// Tape-free fusion for fixed coefficients.
inline FusedTopology fuse_topology(const TopologyMatrix& g_dis, const TopologyMatrix& g_sim, double lambda1, double lambda2) {
  if (g_dis.n != g_sim.n) throw InvalidInput("fuse_topology size mismatch");
  FusedTopology out{TopologyMatrix(g_dis.n, 0.0, false), TopologyMatrix()};
  for (std::size_t k = 0; k < g_dis.values.size(); ++k) out.raw.values[k] = lambda1 * g_dis.values[k] + lambda2 * g_sim.values[k];
  out.calibrated = calibrate(nn::Matrix(out.raw.n, out.raw.n, out.raw.values));
  return out;
}

struct AggregatorParams {
  nn::Parameter mix;

  static AggregatorParams init(const std::string& name, std::size_t dim, Rng& rng, double scale = 1.0) {
    AggregatorParams p{{name, nn::Matrix(dim, dim)}};
    const double bound = scale / std::sqrt(static_cast<double>(dim));
    for (auto& v : p.mix.value.values()) v = rng.uniform(-bound, bound);
    return p;
  }

  template <class F>
  void for_each_parameter(F&& f) {
    f(mix);
  }
};

/// Q' = Q + rownorm(G) Q W, with rownorm dividing each row by max(row sum, 1).
inline nn::Var aggregate_features(const nn::Var& queries, const nn::Var& topology, AggregatorParams& params) {
  const std::size_t n = queries.rows();
  if (topology.rows() != n || topology.cols() != n) {
    throw InvalidInput("aggregate_features: topology " + topology.value().shape() + " vs " + std::to_string(n) + " queries");
  }
  if (params.mix.value.rows() != queries.cols() || params.mix.value.cols() != queries.cols()) {
    throw InvalidInput("aggregate_features: mix weight " + params.mix.value.shape() + " vs query dim " +
                       std::to_string(queries.cols()));
  }
  nn::Tape& tape = queries.tape();
  const nn::Var messages = nn::matmul(nn::matmul(nn::row_normalize(topology), queries), tape.parameter(params.mix));
  return nn::add(queries, messages);
}

}  // namespace topologic
