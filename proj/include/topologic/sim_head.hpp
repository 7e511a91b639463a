#pragma once

// Query-similarity topology: two independent MLP embeddings, their inner
// products, and a sigmoid.

#include "topologic/nn/mlp.hpp"

namespace topologic {

struct SimilarityParams {
  nn::MlpParams mlp1;
  nn::MlpParams mlp2;

  /// Three layers each, dim -> dim -> dim -> embed_dim.
  static SimilarityParams init(std::size_t dim, std::size_t embed_dim, Rng& rng,
                               nn::InitScheme scheme = nn::InitScheme::fan_in) {
    return {nn::MlpParams::init("sim.mlp1", {dim, dim, dim, embed_dim}, rng, 1.0, scheme),
            nn::MlpParams::init("sim.mlp2", {dim, dim, dim, embed_dim}, rng, 1.0, scheme)};
  }

  template <class F>
  void for_each_parameter(F&& f) {
    mlp1.for_each_parameter(f);
    mlp2.for_each_parameter(f);
  }
};

/// G_sim = sigmoid(MLP1(Q) MLP2(Q)^T), diagonal zeroed when `zero_diagonal` is set.
/// Not symmetric in general.
inline nn::Var similarity_topology(const nn::Var& queries, SimilarityParams& params, bool zero_diagonal = true) {
  if (queries.cols() != params.mlp1.in_dim() || queries.cols() != params.mlp2.in_dim()) {
    throw InvalidInput("query matrix " + queries.value().shape() + " does not match similarity MLP input dim " +
                       std::to_string(params.mlp1.in_dim()));
  }
  const nn::Var e1 = nn::mlp_forward(params.mlp1, queries);
  const nn::Var e2 = nn::mlp_forward(params.mlp2, queries);
  nn::Var g = nn::sigmoid(nn::matmul(e1, nn::transpose(e2)));
  return zero_diagonal ? nn::zero_diagonal(g) : g;
}

}  // namespace topologic
