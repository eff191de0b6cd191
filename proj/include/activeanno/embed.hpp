#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "activeanno/corpus.hpp"

namespace activeanno {

using EmbeddingVector = Eigen::VectorXd;

enum class EmbeddingProviderKind { kPrecomputedFile, kHashedFallback };

std::string to_string(EmbeddingProviderKind kind);

// A zero vector cannot be used as a similarity query.
inline bool is_degenerate(const EmbeddingVector& v) {
  return v.size() == 0 || v.squaredNorm() == 0.0;
}

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual EmbeddingVector embed(const Example& example) const = 0;
  virtual int dim() const = 0;
  virtual EmbeddingProviderKind kind() const = 0;
};

// Signed feature hashing of character trigrams of each boundary-marked token
// ("<tok>"), l2-normalized. Empty input yields the zero vector.
class HashedEmbedder final : public EmbeddingProvider {
 public:
  static constexpr int kDefaultDim = 256;

  explicit HashedEmbedder(int dim = kDefaultDim);

  EmbeddingVector embed(std::span<const std::string> tokens) const;
  EmbeddingVector embed_token(const std::string& token) const;
  EmbeddingVector embed(const Example& example) const override {
    return embed(example.tokens);
  }
  int dim() const override { return dim_; }
  EmbeddingProviderKind kind() const override {
    return EmbeddingProviderKind::kHashedFallback;
  }

 private:
  void accumulate(const std::string& token, EmbeddingVector& out) const;
  int dim_;
};

// Vectors read from JSONL lines {"id": str, "vec": [float]}.
class PrecomputedEmbedder final : public EmbeddingProvider {
 public:
  PrecomputedEmbedder() = default;
  explicit PrecomputedEmbedder(
      std::unordered_map<std::string, EmbeddingVector> vectors);
  static PrecomputedEmbedder load_jsonl(const std::filesystem::path& path);

  EmbeddingVector embed(const Example& example) const override;
  int dim() const override { return dim_; }
  EmbeddingProviderKind kind() const override {
    return EmbeddingProviderKind::kPrecomputedFile;
  }
  const std::unordered_map<std::string, EmbeddingVector>& vectors() const {
    return vectors_;
  }

 private:
  std::unordered_map<std::string, EmbeddingVector> vectors_;
  int dim_ = 0;
};

void save_embeddings_jsonl(
    const std::unordered_map<std::string, EmbeddingVector>& vectors,
    std::span<const std::string> order, const std::filesystem::path& path);

class EmbeddingStore {
 public:
  EmbeddingStore(int dim, EmbeddingProviderKind provider, bool normalized)
      : dim_(dim), provider_(provider), normalized_(normalized) {}

  static EmbeddingStore build(const EmbeddingProvider& provider,
                              std::span<const Example> examples,
                              bool normalize);

  void insert(const std::string& id, EmbeddingVector v);
  const EmbeddingVector& at(const std::string& id) const;
  bool contains(const std::string& id) const { return vectors_.count(id) > 0; }
  std::size_t size() const { return vectors_.size(); }
  int dim() const { return dim_; }
  bool normalized() const { return normalized_; }
  EmbeddingProviderKind provider() const { return provider_; }

 private:
  int dim_;
  EmbeddingProviderKind provider_;
  bool normalized_;
  std::unordered_map<std::string, EmbeddingVector> vectors_;
};

struct Neighbor {
  std::string id;
  double similarity = 0.0;
};

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

// min(k, |candidates|) neighbors by descending cosine, ties by ascending id.
std::vector<Neighbor> knn_query(const EmbeddingStore& store,
                                const EmbeddingVector& query, int k,
                                std::span<const std::string> candidate_ids);

struct KMeansOptions {
  int k = 1;
  std::uint64_t rng_seed = 0;
  int max_iters = 50;
  double tolerance = 1e-6;
};

struct KMeansResult {
  // One distinct member index per cluster: the member nearest its centroid.
  std::vector<int> representatives;
  Eigen::MatrixXd centroids;  // dim x k
  std::vector<int> assignment;
  // Sum of squared distances after each assignment step.
  std::vector<double> objective_history;
  int iterations = 0;
  int reseeds = 0;
};

// Lloyd's algorithm with k-means++ seeding over the columns of points.
// An empty cluster is re-seeded with the point farthest from its centroid.
KMeansResult kmeans(const Eigen::MatrixXd& points, const KMeansOptions& options);

}  // namespace activeanno
