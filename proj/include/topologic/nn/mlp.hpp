#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "topologic/nn/ops.hpp"
#include "topologic/random.hpp"

namespace topologic::nn {

struct Linear {
  Parameter weight;  // in x out
  Parameter bias;    // 1 x out
};

/// Weight init: `fan_in` draws U(+-1/sqrt(fan_in)) for weights and biases;
/// `he` draws U(+-sqrt(6/fan_in)) weights and zero biases, which keeps
/// activation scale through deep ReLU stacks.
enum class InitScheme { fan_in, he };

/// Stack of affine layers with ReLU between consecutive layers (none after the last).
struct MlpParams {
  std::vector<Linear> layers;

  /// `last_scale` shrinks the final layer.
  static MlpParams init(const std::string& prefix, const std::vector<std::size_t>& dims, Rng& rng,
                        double last_scale = 1.0, InitScheme scheme = InitScheme::fan_in) {
    if (dims.size() < 2) throw InvalidInput("mlp needs at least input and output dims");
    MlpParams mlp;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      const double fan_in = static_cast<double>(dims[l]);
      const double base = scheme == InitScheme::he ? std::sqrt(6.0 / fan_in) : 1.0 / std::sqrt(fan_in);
      const double bound = (l + 2 == dims.size() ? last_scale : 1.0) * base;
      Linear layer{{prefix + ".l" + std::to_string(l) + ".weight", Matrix(dims[l], dims[l + 1])},
                   {prefix + ".l" + std::to_string(l) + ".bias", Matrix(1, dims[l + 1])}};
      for (auto& v : layer.weight.value.values()) v = rng.uniform(-bound, bound);
      if (scheme == InitScheme::fan_in)
        for (auto& v : layer.bias.value.values()) v = rng.uniform(-bound, bound);
      mlp.layers.push_back(std::move(layer));
    }
    return mlp;
  }

  std::size_t in_dim() const { return layers.empty() ? 0 : layers.front().weight.value.rows(); }
  std::size_t out_dim() const { return layers.empty() ? 0 : layers.back().weight.value.cols(); }

  template <class F>
  void for_each_parameter(F&& f) {
    for (auto& l : layers) {
      f(l.weight);
      f(l.bias);
    }
  }

  void validate() const {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& w = layers[l].weight.value;
      const auto& b = layers[l].bias.value;
      if (b.rows() != 1 || b.cols() != w.cols()) throw InvalidInput("mlp layer " + std::to_string(l) + " bias shape " + b.shape());
      if (l > 0 && layers[l - 1].weight.value.cols() != w.rows()) {
        throw InvalidInput("mlp layer " + std::to_string(l) + " input " + w.shape() + " does not chain from " +
                           layers[l - 1].weight.value.shape());
      }
    }
  }
};

inline Var mlp_forward(MlpParams& params, const Var& input) {
  if (params.layers.empty()) throw InvalidInput("mlp has no layers");
  if (input.cols() != params.in_dim()) {
    throw InvalidInput("mlp input " + input.value().shape() + " does not match first layer " +
                       params.layers.front().weight.value.shape());
  }
  Tape& tape = input.tape();
  Var h = input;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto& layer = params.layers[l];
    h = add_bias(matmul(h, tape.parameter(layer.weight)), tape.parameter(layer.bias));
    if (l + 1 < params.layers.size()) h = relu(h);
  }
  return h;
}

}  // namespace topologic::nn
