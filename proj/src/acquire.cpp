#include "activeanno/acquire.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "activeanno/error.hpp"
#include "activeanno/random.hpp"

namespace activeanno {

std::string to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::kRandom: return "random";
    case Strategy::kEntropy: return "entropy";
    case Strategy::kLeastConfidence: return "least_confidence";
    case Strategy::kKMeans: return "kmeans";
  }
  return "unknown";
}

Strategy strategy_from_string(const std::string& name) {
  if (name == "random") return Strategy::kRandom;
  if (name == "entropy") return Strategy::kEntropy;
  if (name == "least_confidence" || name == "confidence")
    return Strategy::kLeastConfidence;
  if (name == "kmeans") return Strategy::kKMeans;
  throw ValidationError("unknown acquisition strategy '" + name + "'");
}

std::string to_string(Pooling pooling) {
  switch (pooling) {
    case Pooling::kAverage: return "average";
    case Pooling::kSum: return "sum";
    case Pooling::kMax: return "max";
  }
  return "unknown";
}

Pooling pooling_from_string(const std::string& name) {
  if (name == "average") return Pooling::kAverage;
  if (name == "sum") return Pooling::kSum;
  if (name == "max") return Pooling::kMax;
  throw ValidationError("unknown pooling '" + name + "'");
}

double pool_token_scores(std::span<const double> token_scores, Pooling pooling) {
  if (token_scores.empty()) throw ValidationError("cannot pool an empty score sequence");
  switch (pooling) {
    case Pooling::kSum:
      return std::accumulate(token_scores.begin(), token_scores.end(), 0.0);
    case Pooling::kMax:
      return *std::max_element(token_scores.begin(), token_scores.end());
    case Pooling::kAverage:
      break;
  }
  return std::accumulate(token_scores.begin(), token_scores.end(), 0.0) /
         static_cast<double>(token_scores.size());
}

double uncertainty_score(const Eigen::MatrixXd& dists, Strategy strategy,
                         Pooling pooling) {
  std::vector<double> scores(dists.cols());
  for (Eigen::Index t = 0; t < dists.cols(); ++t)
    scores[t] = strategy == Strategy::kEntropy ? score_entropy(dists.col(t))
                                               : score_least_confidence(dists.col(t));
  return pool_token_scores(scores, pooling);
}

std::vector<ScoredCandidate> score_pool(std::span<const PoolCandidate> pool,
                                        Strategy strategy, Pooling pooling) {
  if (strategy != Strategy::kEntropy && strategy != Strategy::kLeastConfidence)
    throw ValidationError("score_pool: " + to_string(strategy) +
                          " is not an uncertainty strategy");
  std::vector<ScoredCandidate> scored;
  scored.reserve(pool.size());
  for (const auto& c : pool) {
    const double s = uncertainty_score(c.dists, strategy, pooling);
    if (!std::isfinite(s))
      throw NumericError("non-finite acquisition score for '" + c.id + "'");
    scored.push_back({c.id, s});
  }
  return scored;
}

std::vector<std::string> top_b(std::vector<ScoredCandidate> scored, int b) {
  const auto take = std::min<std::size_t>(std::max(b, 0), scored.size());
  std::partial_sort(scored.begin(), scored.begin() + take, scored.end(),
                    [](const ScoredCandidate& x, const ScoredCandidate& y) {
                      if (x.score != y.score) return x.score > y.score;
                      return x.id < y.id;
                    });
  std::vector<std::string> ids;
  ids.reserve(take);
  for (std::size_t i = 0; i < take; ++i) ids.push_back(std::move(scored[i].id));
  return ids;
}

std::vector<std::string> select_batch(std::span<const PoolCandidate> pool,
                                      const AcquisitionConfig& config,
                                      const EmbeddingStore* embeddings) {
  if (pool.empty()) throw ValidationError("select_batch: empty pool");
  if (config.batch_size < 1) throw ValidationError("select_batch: batch size must be >= 1");
  const int b = std::min<int>(config.batch_size, static_cast<int>(pool.size()));

  switch (config.strategy) {
    case Strategy::kRandom: {
      std::vector<int> order(pool.size());
      std::iota(order.begin(), order.end(), 0);
      Rng rng = make_rng(config.rng_seed, 0x7264);
      std::shuffle(order.begin(), order.end(), rng);
      std::vector<std::string> ids;
      for (int i = 0; i < b; ++i) ids.push_back(pool[order[i]].id);
      return ids;
    }
    case Strategy::kEntropy:
    case Strategy::kLeastConfidence:
      return top_b(score_pool(pool, config.strategy, config.pooling), b);
    case Strategy::kKMeans: {
      if (!embeddings) throw ValidationError("kmeans acquisition needs embeddings");
      Eigen::MatrixXd points(embeddings->dim(), static_cast<Eigen::Index>(pool.size()));
      for (std::size_t i = 0; i < pool.size(); ++i) {
        Eigen::VectorXd v = embeddings->at(pool[i].id);
        const double norm = v.norm();
        if (norm > 0.0) v /= norm;
        points.col(static_cast<Eigen::Index>(i)) = v;
      }
      const KMeansResult km = kmeans(points, {b, config.rng_seed, 50, 1e-6});
      std::vector<std::string> ids;
      for (int r : km.representatives) ids.push_back(pool[r].id);
      return ids;
    }
  }
  throw ValidationError("select_batch: unhandled strategy");
}

void write_score_dump(std::span<const ScoredCandidate> scored,
                      const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "id,score\n";
  for (const auto& s : scored) out << s.id << ',' << s.score << '\n';
}

}  // namespace activeanno
