#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "activeanno/corpus.hpp"
#include "activeanno/embed.hpp"

namespace activeanno {

// Instance classification over Gaussian-mixture feature vectors. Each class
// owns `components` centers; points are a center plus isotropic noise.
struct MixtureConfig {
  int num_classes = 4;
  int dim = 16;
  int components = 1;
  double center_scale = 1.0;
  double noise_sd = 1.0;
  int pool_size = 2000;
  int gold_size = 200;
  int test_size = 2000;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct SyntheticDataset {
  LabelSchema schema;
  std::vector<Example> pool;
  std::vector<Example> gold;
  std::vector<Example> test;
  // Feature vectors for every example id, unnormalized.
  std::shared_ptr<EmbeddingStore> vectors;
};

// Examples are two-token instances typed as relation classification with
// classes c0..c{C-1} and no NA class, so micro-F1 equals accuracy.
SyntheticDataset make_mixture_dataset(const MixtureConfig& config);

// Row-stochastic matrix sending class i to i+1 (mod C) with probability
// `off` and keeping it otherwise.
Eigen::MatrixXd cyclic_confusion(int num_classes, double off);

// Short sentences mixing filler words with entity mentions drawn from fixed
// per-class word lists (PER, LOC, ORG).
struct NerSyntheticConfig {
  int pool_size = 600;
  int gold_size = 150;
  int test_size = 300;
  int min_length = 6;
  int max_length = 14;
  double mention_rate = 0.25;
  std::uint64_t rng_seed = 0;
};

SyntheticDataset make_ner_dataset(const NerSyntheticConfig& config);

}  // namespace activeanno
