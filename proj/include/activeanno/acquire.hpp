#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "activeanno/embed.hpp"

namespace activeanno {

enum class Strategy { kRandom, kEntropy, kLeastConfidence, kKMeans };
enum class Pooling { kAverage, kSum, kMax };

std::string to_string(Strategy strategy);
Strategy strategy_from_string(const std::string& name);
std::string to_string(Pooling pooling);
Pooling pooling_from_string(const std::string& name);

struct AcquisitionConfig {
  Strategy strategy = Strategy::kRandom;
  int batch_size = 50;
  Pooling pooling = Pooling::kAverage;
  std::uint64_t rng_seed = 0;
};

// Natural-log entropy; 0 log 0 is taken as 0.
template <typename Derived>
double score_entropy(const Eigen::MatrixBase<Derived>& dist) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < dist.size(); ++i) {
    const double p = static_cast<double>(dist(i));
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

template <typename Derived>
double score_least_confidence(const Eigen::MatrixBase<Derived>& dist) {
  return 1.0 - static_cast<double>(dist.maxCoeff());
}

double pool_token_scores(std::span<const double> token_scores, Pooling pooling);

struct ScoredCandidate {
  std::string id;
  double score = 0.0;
};

struct PoolCandidate {
  std::string id;
  Eigen::MatrixXd dists;  // num_classes x items; unused by random/kmeans
};

// Uncertainty score of one candidate, pooled over its items.
double uncertainty_score(const Eigen::MatrixXd& dists, Strategy strategy,
                         Pooling pooling);

std::vector<ScoredCandidate> score_pool(std::span<const PoolCandidate> pool,
                                        Strategy strategy, Pooling pooling);

// Highest scores first, ties by ascending id.
std::vector<std::string> top_b(std::vector<ScoredCandidate> scored, int b);

// min(b, |pool|) distinct ids. kmeans needs embeddings for every candidate.
std::vector<std::string> select_batch(std::span<const PoolCandidate> pool,
                                      const AcquisitionConfig& config,
                                      const EmbeddingStore* embeddings = nullptr);

void write_score_dump(std::span<const ScoredCandidate> scored,
                      const std::filesystem::path& path);

}  // namespace activeanno
