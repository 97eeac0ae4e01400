#pragma once

// Small trained world model shared by the inference and runtime tests.

#include <vector>

#include "uavwm/world_model.hpp"

namespace uavwm::testing {

struct TrainedModel {
  std::vector<ExpertDemonstration> demos;
  std::vector<SymbolicTriplet> triplets;
  WorldModel model;
};

inline TrainedModel train_small_model(int m = 24, std::uint64_t seed = 5) {
  TrainedModel t;
  GAConfig ga;
  ga.population = 40;
  ga.generations = 40;
  FieldConfig field;
  std::vector<FeatureVector> features;
  for (int i = 0; i < m; ++i) {
    const int n = 4 + i % 5;
    const int q = 1 + i % 3;
    ga.seed = seed + static_cast<std::uint64_t>(i);
    const auto inst = generate_instance(seed * 1000 + static_cast<std::uint64_t>(i), n, q, {1000, 1000}, i % 2);
    t.demos.push_back(evolve(inst, ga, field));
    for (const auto &per : demonstration_features(t.demos.back(), field))
      features.insert(features.end(), per.begin(), per.end());
  }
  const auto codebook = fit_letter_codebook(features, 6, seed, 10);
  for (const auto &d : t.demos) t.triplets.push_back(abstract_demonstration(d, codebook, {}, field));
  t.model = train_world_model(t.triplets, build_dictionaries(t.triplets, codebook), 1.0);
  return t;
}

inline const TrainedModel &shared_model() {
  static const TrainedModel model = train_small_model();
  return model;
}

}  // namespace uavwm::testing
