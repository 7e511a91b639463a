#pragma once

// Adam with decoupled weight decay, plus the cosine learning-rate schedule.

#include <cmath>
#include <map>
#include <numbers>
#include <span>
#include <string>

#include "topologic/nn/tape.hpp"

namespace topologic::nn {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct AdamState {
  AdamConfig config;
  std::size_t step = 0;
  struct Moments {
    Matrix first;
    Matrix second;
  };
  std::map<std::string, Moments> moments;
};

/// Learning rate at `step` of `total` under cosine annealing to zero.
inline double cosine_lr(double base, std::size_t step, std::size_t total) {
  if (total == 0) return base;
  const double t = std::min(1.0, static_cast<double>(step) / static_cast<double>(total));
  return 0.5 * base * (1.0 + std::cos(std::numbers::pi * t));
}

/// One update of every parameter in `params`. Missing gradients count as zero.
inline void adam_step(AdamState& state, std::span<Parameter* const> params, const Gradients& grads, double lr) {
  const AdamConfig& c = state.config;
  state.step += 1;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (Parameter* p : params) {
    const Matrix* g = grads.find(*p);
    if (g && !g->same_shape(p->value)) {
      throw InvalidInput("gradient shape " + g->shape() + " does not match parameter " + p->name + " " + p->value.shape());
    }
    auto [it, inserted] = state.moments.try_emplace(p->name);
    auto& m = it->second;
    if (inserted) {
      m.first = Matrix(p->value.rows(), p->value.cols());
      m.second = Matrix(p->value.rows(), p->value.cols());
    } else if (!m.first.same_shape(p->value)) {
      throw InvalidInput("optimizer moments for " + p->name + " have shape " + m.first.shape());
    }
    auto values = p->value.values();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double gk = g ? (*g)[k] : 0.0;
      values[k] -= lr * c.weight_decay * values[k];
      m.first[k] = c.beta1 * m.first[k] + (1.0 - c.beta1) * gk;
      m.second[k] = c.beta2 * m.second[k] + (1.0 - c.beta2) * gk * gk;
      const double mh = m.first[k] / bc1;
      const double vh = m.second[k] / bc2;
      values[k] -= lr * mh / (std::sqrt(vh) + c.eps);
    }
  }
}

inline void adam_step(AdamState& state, std::span<Parameter* const> params, const Gradients& grads) {
  adam_step(state, params, grads, state.config.lr);
}

}  // namespace topologic::nn
