#include "activeanno/loop.hpp"

#include <chrono>
#include <fstream>
#include <unordered_set>

#include "activeanno/error.hpp"
#include "activeanno/random.hpp"

#ifndef ACTIVEANNO_VERSION
#define ACTIVEANNO_VERSION "dev"
#endif

namespace activeanno {

using nlohmann::json;

void LoopConfig::validate() const {
  if (iterations < 1) throw ValidationError("loop.iterations must be >= 1");
  if (batch_size < 1) throw ValidationError("loop.batch_size must be >= 1");
  if (hidden_dim < 0) throw ValidationError("model.hidden_dim must be >= 0");
  if (!(init_scale >= 0.0)) throw ValidationError("model.init_scale must be >= 0");
  reweight.validate();
}

std::string version_stamp() { return std::string("activeanno ") + ACTIVEANNO_VERSION; }

namespace {

Metrics metrics_from_json(const json& j) {
  return metrics_from_counts(j.at("tp").get<long>(), j.at("fp").get<long>(),
                             j.at("fn").get<long>());
}

}  // namespace

json RunManifest::to_json() const {
  json records_json = json::array();
  for (const auto& r : records) {
    records_json.push_back({{"iteration", r.iteration},
                            {"train_size", r.train_size},
                            {"val", activeanno::to_json(r.val)},
                            {"test", activeanno::to_json(r.test)},
                            {"best_step", r.best_step},
                            {"selected", r.selected},
                            {"failures", r.failures},
                            {"labeled_after", r.labeled_after}});
  }
  return {{"version", version},
          {"status", status},
          {"error", error},
          {"config", config},
          {"seed_annotated", seed_annotated},
          {"seed_failures", seed_failures},
          {"records", records_json},
          {"final_checkpoint", final_checkpoint},
          {"notes", notes}};
}

RunManifest RunManifest::from_json(const json& j) {
  RunManifest m;
  m.version = j.value("version", "");
  m.status = j.value("status", "complete");
  m.error = j.value("error", "");
  m.config = j.value("config", json::object());
  m.seed_annotated = j.value("seed_annotated", 0);
  m.seed_failures = j.value("seed_failures", std::vector<std::string>{});
  m.final_checkpoint = j.value("final_checkpoint", "");
  m.notes = j.value("notes", std::vector<std::string>{});
  for (const auto& r : j.value("records", json::array())) {
    IterationRecord rec;
    rec.iteration = r.at("iteration").get<int>();
    rec.train_size = r.at("train_size").get<int>();
    rec.val = metrics_from_json(r.at("val"));
    rec.test = metrics_from_json(r.at("test"));
    rec.best_step = r.value("best_step", 0);
    rec.selected = r.value("selected", std::vector<std::string>{});
    rec.failures = r.value("failures", std::vector<std::string>{});
    rec.labeled_after = r.value("labeled_after", 0);
    m.records.push_back(std::move(rec));
  }
  return m;
}

void write_manifest(const RunManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << manifest.to_json().dump(2) << '\n';
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

RunManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return RunManifest::from_json(json::parse(in));
  } catch (const json::exception& ex) {
    throw ValidationError("manifest '" + path.string() + "': " + ex.what());
  }
}

void write_metrics_csv(const RunManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "iteration,labeled,val_p,val_r,val_f1,test_p,test_r,test_f1\n";
  for (const auto& r : manifest.records)
    out << r.iteration << ',' << r.train_size << ',' << r.val.precision << ','
        << r.val.recall << ',' << r.val.f1 << ',' << r.test.precision << ','
        << r.test.recall << ',' << r.test.f1 << '\n';
}

void write_timings_csv(const RunManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "iteration,wall_seconds\n";
  for (const auto& r : manifest.records) out << r.iteration << ',' << r.wall_seconds << '\n';
}

TrainResult train_task_model(std::span<const AnnotatedExample> labeled,
                             std::span<const Example> val, const LoopContext& context,
                             const LoopConfig& config, std::uint64_t seed,
                             const std::optional<ModelParams>& init) {
  const FeatureTable& features = *context.features;
  const LabelSchema& schema = *context.schema;
  std::vector<Example> examples;
  std::vector<Labels> labels;
  for (const auto& a : labeled) {
    examples.push_back(a.example);
    labels.push_back(a.silver);
  }
  const ExampleSet train_set = features.example_set(examples, labels, schema);
  const ExampleSet val_set = features.gold_set(val, schema);

  TrainOptions options;
  options.shape = {features.dim(), config.hidden_dim, schema.num_outputs()};
  options.rng_seed = seed;
  options.init_scale = config.init_scale;
  options.init = init;
  options.val_metric = [&](const ModelParams& p) {
    return evaluate(p, features, val, schema).f1;
  };
  return train(train_set, val_set, config.reweight, options);
}

namespace {

using Clock = std::chrono::steady_clock;

// Moves annotated ids from pool to labeled; failures stay in the pool.
void merge(const std::vector<AnnotationOutcome>& outcomes, DatasetSplits& splits,
           std::vector<AnnotatedExample>& labeled, std::vector<std::string>& failures) {
  std::unordered_set<std::string> done;
  for (const auto& o : outcomes) {
    if (o.ok()) {
      done.insert(o.id);
      labeled.push_back(*o.annotated);
      splits.labeled.push_back(o.id);
    } else {
      failures.push_back(o.id);
    }
  }
  std::erase_if(splits.pool, [&](const std::string& id) { return done.count(id) > 0; });
}

}  // namespace

LoopResult run_active_loop(DatasetSplits splits, const LoopContext& context,
                           const LoopConfig& config) {
  config.validate();
  if (!context.corpus || !context.schema || !context.features || !context.annotator)
    throw ValidationError("run_active_loop: incomplete context");
  check_partition(splits);
  const Corpus& corpus = *context.corpus;
  const LabelSchema& schema = *context.schema;

  LoopResult result;
  RunManifest& manifest = result.manifest;
  manifest.version = version_stamp();
  if (config.strategy == Strategy::kKMeans)
    manifest.notes.push_back(
        "kmeans acquisition clusters provider embeddings, not task-model hidden states");

  const std::vector<Example> val = corpus.select(splits.val);
  const std::vector<Example> test = corpus.select(context.test_ids);

  // Seed set: drawn by init_splits, labeled here by the annotator.
  std::vector<std::string> seed_ids = std::move(splits.labeled);
  splits.labeled.clear();
  splits.pool.insert(splits.pool.end(), seed_ids.begin(), seed_ids.end());
  try {
    const auto seed_examples = corpus.select(seed_ids);
    const auto outcomes = annotate_batch(*context.annotator, seed_examples);
    merge(outcomes, splits, result.labeled, manifest.seed_failures);
    manifest.seed_annotated = static_cast<int>(result.labeled.size());
  } catch (const AnnotationError& ex) {
    manifest.status = "partial";
    manifest.error = ex.what();
    result.splits = std::move(splits);
    return result;
  }

  std::optional<ModelParams> previous;
  for (int it = 0; it <= config.iterations; ++it) {
    const auto started = Clock::now();
    IterationRecord record;
    record.iteration = it;
    record.train_size = static_cast<int>(result.labeled.size());

    const std::optional<ModelParams> init =
        config.warm_start ? previous : std::optional<ModelParams>();
    const TrainResult trained =
        train_task_model(result.labeled, val, context, config, mix_seed(config.rng_seed, it), init);
    result.training_logs.push_back(trained.log);
    if (trained.aborted) manifest.notes.push_back("iteration " + std::to_string(it) + ": " +
                                                  trained.abort_reason);
    previous = trained.params;
    result.final_params = trained.params;
    record.best_step = trained.best_step;
    record.val = evaluate(trained.params, *context.features, val, schema);
    if (!test.empty()) record.test = evaluate(trained.params, *context.features, test, schema);

    const bool last = it == config.iterations;
    if (!last && !splits.pool.empty()) {
      std::vector<PoolCandidate> candidates;
      candidates.reserve(splits.pool.size());
      const bool needs_dists = config.strategy == Strategy::kEntropy ||
                               config.strategy == Strategy::kLeastConfidence;
      for (const auto& id : splits.pool) {
        PoolCandidate c{id, {}};
        if (needs_dists) c.dists = forward(trained.params, context.features->at(id));
        candidates.push_back(std::move(c));
      }
      AcquisitionConfig acq{config.strategy, config.batch_size, config.pooling,
                            mix_seed(config.rng_seed, 1000 + it)};
      if (config.dump_scores && needs_dists)
        result.score_dumps.push_back(score_pool(candidates, config.strategy, config.pooling));
      record.selected = select_batch(candidates, acq, context.embeddings);
      try {
        const auto outcomes = annotate_batch(*context.annotator, corpus.select(record.selected));
        merge(outcomes, splits, result.labeled, record.failures);
      } catch (const AnnotationError& ex) {
        record.failures = record.selected;
        record.labeled_after = static_cast<int>(result.labeled.size());
        record.wall_seconds = std::chrono::duration<double>(Clock::now() - started).count();
        manifest.records.push_back(std::move(record));
        manifest.status = "partial";
        manifest.error = ex.what();
        break;
      }
      check_partition(splits);
    }
    record.labeled_after = static_cast<int>(result.labeled.size());
    record.wall_seconds = std::chrono::duration<double>(Clock::now() - started).count();
    manifest.records.push_back(std::move(record));
  }
  result.splits = std::move(splits);
  return result;
}

StudentTeacherResult run_student_teacher_experiment(double p, int n_samples,
                                                    std::uint64_t seed) {
  if (!(p > 0.5 && p <= 1.0))
    throw ValidationError("teacher accuracy must be in (0.5, 1]");
  if (n_samples < 1) throw ValidationError("n_samples must be >= 1");

  Rng rng = make_rng(seed, 0x5354);
  std::uniform_real_distribution<double> margin(0.5, 2.5);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&](int n, Eigen::MatrixXd& x, std::vector<int>& y) {
    x.resize(2, n);
    y.resize(n);
    for (int i = 0; i < n; ++i) {
      y[i] = uniform01(rng) < 0.5 ? 0 : 1;
      x(0, i) = (y[i] == 1 ? 1.0 : -1.0) * margin(rng);
      x(1, i) = normal(rng);
    }
  };

  Eigen::MatrixXd train_x, test_x;
  std::vector<int> truth, test_y;
  draw(n_samples, train_x, truth);
  draw(2000, test_x, test_y);

  std::vector<int> teacher(n_samples);
  int teacher_correct = 0;
  for (int i = 0; i < n_samples; ++i) {
    const bool right = uniform01(rng) < p;
    teacher[i] = right ? truth[i] : 1 - truth[i];
    teacher_correct += right;
  }

  const ModelShape shape{2, 0, 2};
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(shape.parameter_count());
  for (int step = 0; step < 300; ++step) {
    const auto bundle =
        loss_and_grads(ModelParams::unflatten(shape, theta), train_x, teacher);
    theta = sgd_step(theta, bundle.per_example_grads.rowwise().mean(), 1.0);
  }
  const Eigen::MatrixXd probs = forward(ModelParams::unflatten(shape, theta), test_x);
  int student_correct = 0;
  for (int i = 0; i < probs.cols(); ++i) {
    Eigen::Index best = 0;
    probs.col(i).maxCoeff(&best);
    student_correct += best == test_y[i];
  }
  return {double(teacher_correct) / n_samples, double(student_correct) / probs.cols()};
}

}  // namespace activeanno
