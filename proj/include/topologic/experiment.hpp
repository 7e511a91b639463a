#pragma once

// The standard synthetic benchmark and the helpers the ablations share.

#include <cstdint>
#include <string>
#include <vector>

#include "topologic/eval.hpp"
#include "topologic/training.hpp"

namespace topologic {

/// Scenes cycle through the four layouts; scene i uses seed mix_seed(seed, i).
inline std::vector<Scene> make_dataset(std::size_t count, std::uint64_t seed,
                                       std::span<const Layout> layouts = kAllLayouts) {
  if (layouts.empty()) throw InvalidInput("make_dataset needs at least one layout");
  std::vector<Scene> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t s = mix_seed(seed, i);
    SceneConfig cfg = preset_config(layouts[i % layouts.size()], s);
    cfg.id = "scene-" + std::to_string(i);
    out.push_back(generate_scene(cfg));
  }
  return out;
}

/// Candidate sets for evaluation. The noise seed depends only on (seed, i),
/// so every head sees the same candidates.
inline std::vector<CandidateSet> make_candidates(std::span<const Scene> scenes, NoiseConfig noise, std::uint64_t seed) {
  std::vector<CandidateSet> out;
  out.reserve(scenes.size());
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    noise.seed = mix_seed(seed, i);
    out.push_back(perturb_scene(scenes[i], noise));
  }
  return out;
}

/// Predictions for every candidate set; a set with no candidates yields an empty prediction.
inline std::vector<Prediction> predict_all(Model& model, std::span<const CandidateSet> sets) {
  std::vector<Prediction> out;
  out.reserve(sets.size());
  for (const auto& c : sets) {
    if (c.candidates.empty()) {
      Prediction p;
      p.scene_id = c.scene_id;
      p.meta["model_config_hash"] = config_hash(model.config);
      p.meta["head"] = to_string(model.config.head);
      p.meta["mapping"] = to_string(model.config.mapping);
      p.meta["seed"] = std::to_string(model.config.init_seed);
      out.push_back(std::move(p));
    } else {
      out.push_back(model.predict(c));
    }
  }
  return out;
}

struct BenchmarkConfig {
  std::size_t train_scenes = 2000;
  std::size_t test_scenes = 500;
  std::uint64_t train_seed = 1;
  std::uint64_t test_seed = 2;
  std::uint64_t noise_seed = 3;
  double endpoint_sigma = 0.3;
};

struct Benchmark {
  BenchmarkConfig config;
  std::vector<Scene> train;
  std::vector<Scene> test;

  static Benchmark make(const BenchmarkConfig& c) {
    return {c, make_dataset(c.train_scenes, c.train_seed), make_dataset(c.test_scenes, c.test_seed)};
  }

  std::vector<CandidateSet> test_candidates(double sigma) const {
    NoiseConfig n;
    n.endpoint_sigma = sigma;
    return make_candidates(test, n, config.noise_seed);
  }
};

/// Trains one head on the benchmark's training split at the benchmark sigma.
inline TrainState train_head(const Benchmark& b, ModelConfig mc, TrainConfig tc, const LogSink& log = {}) {
  tc.noise.endpoint_sigma = b.config.endpoint_sigma;
  TrainState st = make_train_state(mc, tc);
  train(st, b.train, tc, log);
  return st;
}

inline MetricsReport evaluate_model(Model& model, const Benchmark& b, double sigma) {
  const auto cands = b.test_candidates(sigma);
  const auto preds = predict_all(model, cands);
  return evaluate(preds, b.test);
}

}  // namespace topologic
