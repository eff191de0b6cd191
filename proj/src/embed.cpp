#include "activeanno/embed.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "activeanno/error.hpp"
#include "activeanno/random.hpp"

namespace activeanno {

std::string to_string(EmbeddingProviderKind kind) {
  return kind == EmbeddingProviderKind::kHashedFallback ? "hashed_fallback"
                                                        : "precomputed_file";
}

HashedEmbedder::HashedEmbedder(int dim) : dim_(dim) {
  if (dim < 1) throw ValidationError("embedding dim must be >= 1");
}

void HashedEmbedder::accumulate(const std::string& token,
                                EmbeddingVector& out) const {
  const std::string marked = "<" + token + ">";
  for (std::size_t i = 0; i + 3 <= marked.size(); ++i) {
    const std::uint64_t h = stable_hash(std::string_view(marked).substr(i, 3));
    const auto bucket = static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(dim_));
    out[bucket] += (h >> 63) ? -1.0 : 1.0;
  }
}

EmbeddingVector HashedEmbedder::embed(std::span<const std::string> tokens) const {
  EmbeddingVector v = EmbeddingVector::Zero(dim_);
  for (const auto& t : tokens) accumulate(t, v);
  const double norm = v.norm();
  if (norm > 0.0) v /= norm;
  return v;
}

EmbeddingVector HashedEmbedder::embed_token(const std::string& token) const {
  return embed(std::span<const std::string>(&token, 1));
}

PrecomputedEmbedder::PrecomputedEmbedder(
    std::unordered_map<std::string, EmbeddingVector> vectors)
    : vectors_(std::move(vectors)) {
  for (const auto& [id, v] : vectors_) {
    if (dim_ == 0) dim_ = static_cast<int>(v.size());
    if (v.size() != dim_)
      throw ValidationError("embedding for '" + id + "' has dim " +
                            std::to_string(v.size()) + ", expected " +
                            std::to_string(dim_));
    if (!v.allFinite())
      throw ValidationError("embedding for '" + id + "' is not finite");
  }
}

PrecomputedEmbedder PrecomputedEmbedder::load_jsonl(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::unordered_map<std::string, EmbeddingVector> vectors;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto values = j.at("vec").get<std::vector<double>>();
      vectors[j.at("id").get<std::string>()] =
          Eigen::Map<const Eigen::VectorXd>(values.data(),
                                            static_cast<Eigen::Index>(values.size()));
    } catch (const nlohmann::json::exception& ex) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                            ": " + ex.what());
    }
  }
  return PrecomputedEmbedder(std::move(vectors));
}

EmbeddingVector PrecomputedEmbedder::embed(const Example& example) const {
  auto it = vectors_.find(example.id);
  if (it == vectors_.end())
    throw ValidationError("no precomputed embedding for id '" + example.id + "'");
  return it->second;
}

void save_embeddings_jsonl(
    const std::unordered_map<std::string, EmbeddingVector>& vectors,
    std::span<const std::string> order, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  for (const auto& id : order) {
    const auto& v = vectors.at(id);
    out << nlohmann::json{{"id", id},
                          {"vec", std::vector<double>(v.data(), v.data() + v.size())}}
               .dump()
        << '\n';
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

EmbeddingStore EmbeddingStore::build(const EmbeddingProvider& provider,
                                     std::span<const Example> examples,
                                     bool normalize) {
  EmbeddingStore store(provider.dim(), provider.kind(), normalize);
  for (const auto& e : examples) store.insert(e.id, provider.embed(e));
  return store;
}

void EmbeddingStore::insert(const std::string& id, EmbeddingVector v) {
  if (v.size() != dim_)
    throw ValidationError("embedding for '" + id + "' has wrong dimension");
  if (!v.allFinite())
    throw ValidationError("embedding for '" + id + "' is not finite");
  if (normalized_) {
    const double norm = v.norm();
    if (norm > 0.0) v /= norm;
  }
  vectors_[id] = std::move(v);
}

const EmbeddingVector& EmbeddingStore::at(const std::string& id) const {
  auto it = vectors_.find(id);
  if (it == vectors_.end())
    throw ValidationError("no embedding for id '" + id + "'");
  return it->second;
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  const double denom = a.norm() * b.norm();
  return denom > 0.0 ? a.dot(b) / denom : 0.0;
}

std::vector<Neighbor> knn_query(const EmbeddingStore& store,
                                const EmbeddingVector& query, int k,
                                std::span<const std::string> candidate_ids) {
  if (k < 1) throw ValidationError("knn_query: k must be >= 1");
  if (candidate_ids.empty()) throw ValidationError("knn_query: no candidates");
  if (is_degenerate(query))
    throw ValidationError("knn_query: degenerate (zero) query vector");

  std::vector<Neighbor> all;
  all.reserve(candidate_ids.size());
  for (const auto& id : candidate_ids)
    all.push_back({id, cosine_similarity(query, store.at(id))});
  const auto take = std::min<std::size_t>(k, all.size());
  std::partial_sort(all.begin(), all.begin() + take, all.end(),
                    [](const Neighbor& a, const Neighbor& b) {
                      if (a.similarity != b.similarity)
                        return a.similarity > b.similarity;
                      return a.id < b.id;
                    });
  all.resize(take);
  return all;
}

namespace {

// Returns the objective and fills assignment; ties go to the lower index.
double assign(const Eigen::MatrixXd& points, const Eigen::MatrixXd& centroids,
              std::vector<int>& assignment, Eigen::VectorXd& distances) {
  double objective = 0.0;
  for (Eigen::Index i = 0; i < points.cols(); ++i) {
    Eigen::Index best = 0;
    const double d = (centroids.colwise() - points.col(i))
                         .colwise()
                         .squaredNorm()
                         .minCoeff(&best);
    assignment[i] = static_cast<int>(best);
    distances[i] = d;
    objective += d;
  }
  return objective;
}

Eigen::MatrixXd seed_plus_plus(const Eigen::MatrixXd& points, int k, Rng& rng) {
  const Eigen::Index n = points.cols();
  Eigen::MatrixXd centroids(points.rows(), k);
  std::vector<bool> chosen(n, false);
  Eigen::Index first = std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng);
  centroids.col(0) = points.col(first);
  chosen[first] = true;
  Eigen::VectorXd d2 = (points.colwise() - points.col(first)).colwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    Eigen::Index next = -1;
    const double total = d2.sum();
    if (total > 0.0) {
      double r = uniform01(rng) * total;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        next = i;
        r -= d2[i];
        if (r <= 0.0) break;
      }
    }
    if (next < 0) {
      // Remaining points coincide with chosen centers; pick any unused index.
      std::vector<Eigen::Index> unused;
      for (Eigen::Index i = 0; i < n; ++i)
        if (!chosen[i]) unused.push_back(i);
      next = unused[std::uniform_int_distribution<std::size_t>(0, unused.size() - 1)(rng)];
    }
    chosen[next] = true;
    centroids.col(c) = points.col(next);
    d2 = d2.cwiseMin(
        (points.colwise() - points.col(next)).colwise().squaredNorm().transpose());
  }
  return centroids;
}

// Moves the farthest point of a multi-member cluster into each empty cluster.
int fill_empty_clusters(const Eigen::MatrixXd& points, Eigen::MatrixXd& centroids,
                        std::vector<int>& assignment, Eigen::VectorXd& distances) {
  const int k = static_cast<int>(centroids.cols());
  std::vector<int> counts(k, 0);
  for (int a : assignment) ++counts[a];
  int reseeds = 0;
  for (int c = 0; c < k; ++c) {
    if (counts[c] > 0) continue;
    Eigen::Index far = -1;
    double best = -1.0;
    for (Eigen::Index i = 0; i < points.cols(); ++i) {
      if (counts[assignment[i]] < 2) continue;
      if (distances[i] > best) {
        best = distances[i];
        far = i;
      }
    }
    --counts[assignment[far]];
    assignment[far] = c;
    counts[c] = 1;
    distances[far] = 0.0;
    centroids.col(c) = points.col(far);
    ++reseeds;
  }
  return reseeds;
}

}  // namespace

KMeansResult kmeans(const Eigen::MatrixXd& points, const KMeansOptions& options) {
  const int k = options.k;
  const Eigen::Index n = points.cols();
  if (k < 1) throw ValidationError("kmeans: k must be >= 1");
  if (k > n)
    throw ValidationError("kmeans: k=" + std::to_string(k) + " exceeds " +
                          std::to_string(n) + " points");
  if (options.max_iters < 1) throw ValidationError("kmeans: max_iters must be >= 1");

  Rng rng = make_rng(options.rng_seed, 0x6b6d);
  KMeansResult result;
  result.centroids = seed_plus_plus(points, k, rng);
  result.assignment.assign(n, 0);
  Eigen::VectorXd distances(n);

  for (int iter = 0; iter < options.max_iters; ++iter) {
    result.objective_history.push_back(
        assign(points, result.centroids, result.assignment, distances));
    result.reseeds += fill_empty_clusters(points, result.centroids,
                                          result.assignment, distances);
    Eigen::MatrixXd updated = Eigen::MatrixXd::Zero(points.rows(), k);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      updated.col(result.assignment[i]) += points.col(i);
      counts[result.assignment[i]] += 1.0;
    }
    for (int c = 0; c < k; ++c) updated.col(c) /= counts[c];
    const double shift = (updated - result.centroids).colwise().norm().maxCoeff();
    result.centroids = std::move(updated);
    result.iterations = iter + 1;
    if (shift < options.tolerance) break;
  }
  result.objective_history.push_back(
      assign(points, result.centroids, result.assignment, distances));
  result.reseeds += fill_empty_clusters(points, result.centroids,
                                        result.assignment, distances);

  result.representatives.assign(k, -1);
  std::vector<double> best(k, std::numeric_limits<double>::infinity());
  for (Eigen::Index i = 0; i < n; ++i) {
    const int c = result.assignment[i];
    const double d = (points.col(i) - result.centroids.col(c)).squaredNorm();
    if (d < best[c]) {
      best[c] = d;
      result.representatives[c] = static_cast<int>(i);
    }
  }
  return result;
}

}  // namespace activeanno
