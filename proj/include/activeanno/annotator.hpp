#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "activeanno/corpus.hpp"
#include "activeanno/embed.hpp"
#include "activeanno/llm_client.hpp"
#include "activeanno/prompt.hpp"
#include "activeanno/random.hpp"

namespace activeanno {

struct AnnotationOutcome {
  std::string id;
  std::optional<AnnotatedExample> annotated;
  std::string failure;
  int attempts = 1;
  bool ok() const { return annotated.has_value(); }
};

// A label source. Implementations must tolerate concurrent annotate() calls
// up to concurrency().
class Annotator {
 public:
  virtual ~Annotator() = default;
  virtual AnnotationOutcome annotate(const Example& example) const = 0;
  virtual int concurrency() const { return 1; }
};

enum class OracleMode { kUniformFlip, kConfusionMatrix, kNerSpanNoise };

std::string to_string(OracleMode mode);
OracleMode oracle_mode_from_string(const std::string& name);

struct OracleConfig {
  OracleMode mode = OracleMode::kUniformFlip;
  double accuracy = 1.0;  // p
  // Row-stochastic class x class matrix; row = true class.
  std::optional<Eigen::MatrixXd> confusion;
  double span_drop = 0.0;
  double span_spurious = 0.0;
  double type_flip = 0.0;
  std::uint64_t rng_seed = 0;

  void validate(const LabelSchema& schema) const;
};

// Corrupts gold labels. Each example draws from its own stream seeded by
// (rng_seed, id), so results do not depend on call order.
class SimulatedOracle final : public Annotator {
 public:
  SimulatedOracle(LabelSchema schema, OracleConfig config);

  Labels noisy_labels(const Example& example) const;
  AnnotationOutcome annotate(const Example& example) const override;
  int concurrency() const override { return 1; }

 private:
  int corrupt_class(int y, Rng& rng) const;
  LabelSchema schema_;
  OracleConfig config_;
};

struct LlmAnnotatorOptions {
  PromptTemplate tmpl;
  LabelSchema schema;
  std::vector<Example> demo_pool;
  // Demo embeddings and the provider used to embed queries; required when
  // use_knn_demos is set.
  std::shared_ptr<const EmbeddingStore> demo_store;
  std::shared_ptr<const EmbeddingProvider> embedder;
  int k = 5;
  bool use_knn_demos = true;
  PromptOptions prompt;
};

// Prompts a chat model and parses its reply, retrying transport errors and
// unparseable replies up to max_retries before giving up on the example.
class LlmAnnotator final : public Annotator {
 public:
  LlmAnnotator(LlmAnnotatorOptions options, LlmClientConfig client_config,
               std::shared_ptr<const ChatClient> client);

  std::string prompt_for(const Example& example) const;
  AnnotationOutcome annotate(const Example& example) const override;
  int concurrency() const override { return client_config_.concurrency; }

 private:
  LlmAnnotatorOptions options_;
  LlmClientConfig client_config_;
  std::shared_ptr<const ChatClient> client_;
};

// Order-preserving; runs up to annotator.concurrency() calls at once.
// Throws AnnotationError when every example fails.
std::vector<AnnotationOutcome> annotate_batch(const Annotator& annotator,
                                              std::span<const Example> batch);

}  // namespace activeanno
