#pragma once

#include <memory>
#include <span>
#include <string>
#include <unordered_map>

#include <Eigen/Dense>

#include "activeanno/corpus.hpp"
#include "activeanno/embed.hpp"
#include "activeanno/model.hpp"

namespace activeanno {

// Maps an example to model input columns (dim x items).
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual Eigen::MatrixXd extract(const Example& example) const = 0;
  virtual int dim() const = 0;
};

// Per token: its embedding followed by the mean embedding of the window of
// +-window tokens around it (clipped at sentence edges).
class NerTokenFeatures final : public FeatureExtractor {
 public:
  explicit NerTokenFeatures(HashedEmbedder embedder, int window = 2)
      : embedder_(embedder), window_(window) {}
  Eigen::MatrixXd extract(const Example& example) const override;
  int dim() const override { return 2 * embedder_.dim(); }

 private:
  HashedEmbedder embedder_;
  int window_;
};

// Per instance: mean subject-span, mean object-span and mean sentence token
// embeddings, concatenated.
class ReInstanceFeatures final : public FeatureExtractor {
 public:
  explicit ReInstanceFeatures(HashedEmbedder embedder) : embedder_(embedder) {}
  Eigen::MatrixXd extract(const Example& example) const override;
  int dim() const override { return 3 * embedder_.dim(); }

 private:
  HashedEmbedder embedder_;
};

// One column per example taken verbatim from a store (instance-level tasks).
class StoreFeatures final : public FeatureExtractor {
 public:
  explicit StoreFeatures(std::shared_ptr<const EmbeddingStore> store)
      : store_(std::move(store)) {}
  Eigen::MatrixXd extract(const Example& example) const override {
    return store_->at(example.id);
  }
  int dim() const override { return store_->dim(); }

 private:
  std::shared_ptr<const EmbeddingStore> store_;
};

// Features computed once per example id.
class FeatureTable {
 public:
  FeatureTable(const FeatureExtractor& extractor, std::span<const Example> examples);

  const Eigen::MatrixXd& at(const std::string& id) const;
  int dim() const { return dim_; }

  // Builds training items from labels (gold or silver) of the given examples.
  ExampleSet example_set(std::span<const Example> examples,
                         std::span<const Labels> labels,
                         const LabelSchema& schema) const;
  ExampleSet gold_set(std::span<const Example> examples,
                      const LabelSchema& schema) const;

 private:
  std::unordered_map<std::string, Eigen::MatrixXd> table_;
  int dim_;
};

}  // namespace activeanno
