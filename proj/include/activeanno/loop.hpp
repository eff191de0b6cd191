#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "activeanno/acquire.hpp"
#include "activeanno/annotator.hpp"
#include "activeanno/corpus.hpp"
#include "activeanno/evaluate.hpp"
#include "activeanno/features.hpp"
#include "activeanno/reweight.hpp"

namespace activeanno {

struct LoopConfig {
  int iterations = 9;   // t
  int batch_size = 50;  // b
  bool warm_start = false;
  bool dump_scores = false;
  Strategy strategy = Strategy::kLeastConfidence;
  Pooling pooling = Pooling::kAverage;
  ReweightConfig reweight;
  int hidden_dim = 0;
  double init_scale = 0.1;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct IterationRecord {
  int iteration = 0;
  int train_size = 0;  // |labeled| the model was trained on
  Metrics val;
  Metrics test;
  int best_step = 0;
  std::vector<std::string> selected;
  std::vector<std::string> failures;
  int labeled_after = 0;
  double wall_seconds = 0.0;  // kept out of the manifest
};

struct RunManifest {
  nlohmann::json config = nlohmann::json::object();
  std::string version;
  std::string status = "complete";  // or "partial"
  std::string error;
  int seed_annotated = 0;
  std::vector<std::string> seed_failures;
  std::vector<IterationRecord> records;
  std::string final_checkpoint;
  std::vector<std::string> notes;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

std::string version_stamp();

void write_manifest(const RunManifest& manifest, const std::filesystem::path& path);
RunManifest read_manifest(const std::filesystem::path& path);
void write_metrics_csv(const RunManifest& manifest, const std::filesystem::path& path);
void write_timings_csv(const RunManifest& manifest, const std::filesystem::path& path);

struct LoopContext {
  const Corpus* corpus = nullptr;
  const LabelSchema* schema = nullptr;
  const FeatureTable* features = nullptr;
  const Annotator* annotator = nullptr;
  // Needed for kmeans acquisition.
  const EmbeddingStore* embeddings = nullptr;
  std::vector<std::string> test_ids;
};

struct LoopResult {
  RunManifest manifest;
  DatasetSplits splits;
  std::vector<AnnotatedExample> labeled;
  ModelParams final_params;
  std::vector<std::vector<ScoredCandidate>> score_dumps;
  std::vector<std::vector<TrainingLogRow>> training_logs;
};

// Annotates the seed set, then t rounds of train -> evaluate -> select ->
// annotate -> merge, and a final train/evaluate on the full labeled set.
// Annotation outages end the run with a partial manifest instead of throwing.
LoopResult run_active_loop(DatasetSplits splits, const LoopContext& context,
                           const LoopConfig& config);

// Trains on the given silver labels against the gold validation examples.
TrainResult train_task_model(std::span<const AnnotatedExample> labeled,
                             std::span<const Example> val, const LoopContext& context,
                             const LoopConfig& config, std::uint64_t seed,
                             const std::optional<ModelParams>& init = std::nullopt);

struct StudentTeacherResult {
  double teacher_accuracy = 0.0;
  double student_accuracy = 0.0;
};

// Binary task on two separable 2-D blobs; the teacher is right with
// probability p and the student is a logistic regression on its labels.
StudentTeacherResult run_student_teacher_experiment(double p, int n_samples,
                                                    std::uint64_t seed);

}  // namespace activeanno
