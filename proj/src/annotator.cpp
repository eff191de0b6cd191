#include "activeanno/annotator.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <iostream>
#include <thread>

#include "activeanno/error.hpp"
#include "activeanno/random.hpp"

namespace activeanno {

std::string to_string(OracleMode mode) {
  switch (mode) {
    case OracleMode::kUniformFlip: return "uniform_flip";
    case OracleMode::kConfusionMatrix: return "confusion_matrix";
    case OracleMode::kNerSpanNoise: return "ner_span_noise";
  }
  return "unknown";
}

OracleMode oracle_mode_from_string(const std::string& name) {
  if (name == "uniform_flip") return OracleMode::kUniformFlip;
  if (name == "confusion_matrix") return OracleMode::kConfusionMatrix;
  if (name == "ner_span_noise") return OracleMode::kNerSpanNoise;
  throw ValidationError("unknown oracle mode '" + name + "'");
}

void OracleConfig::validate(const LabelSchema& schema) const {
  auto check_prob = [](double p, const char* key) {
    if (!(p >= 0.0 && p <= 1.0))
      throw ValidationError(std::string("annotator.oracle.") + key + " must be in [0, 1]");
  };
  check_prob(accuracy, "accuracy");
  check_prob(span_drop, "span_drop");
  check_prob(span_spurious, "span_spurious");
  check_prob(type_flip, "type_flip");
  if (mode == OracleMode::kUniformFlip && !(accuracy > 0.5))
    std::cerr << "warning: oracle accuracy " << accuracy << " is not above chance\n";
  if (mode == OracleMode::kConfusionMatrix) {
    if (!confusion) throw ValidationError("annotator.oracle.confusion is required");
    const auto c = static_cast<Eigen::Index>(schema.classes.size());
    if (confusion->rows() != c || confusion->cols() != c)
      throw ValidationError("annotator.oracle.confusion must be " + std::to_string(c) +
                            "x" + std::to_string(c));
    if ((confusion->array() < 0.0).any())
      throw ValidationError("annotator.oracle.confusion has negative entries");
    for (Eigen::Index r = 0; r < c; ++r)
      if (std::abs(confusion->row(r).sum() - 1.0) > 1e-9)
        throw ValidationError("annotator.oracle.confusion row " + std::to_string(r) +
                              " does not sum to 1");
  }
  if (mode == OracleMode::kNerSpanNoise && schema.task != Task::kNer)
    throw ValidationError("ner_span_noise oracle needs an NER schema");
}

SimulatedOracle::SimulatedOracle(LabelSchema schema, OracleConfig config)
    : schema_(std::move(schema)), config_(std::move(config)) {
  config_.validate(schema_);
}

int SimulatedOracle::corrupt_class(int y, Rng& rng) const {
  const int n = static_cast<int>(schema_.classes.size());
  if (config_.mode == OracleMode::kConfusionMatrix) {
    double r = uniform01(rng);
    const auto row = config_.confusion->row(y);
    for (int c = 0; c < n; ++c) {
      r -= row[c];
      if (r < 0.0) return c;
    }
    // Rounding left r >= 0; take the last class with mass.
    for (int c = n - 1; c >= 0; --c)
      if (row[c] > 0.0) return c;
    return y;
  }
  const double keep =
      config_.mode == OracleMode::kNerSpanNoise ? 1.0 - config_.type_flip : config_.accuracy;
  if (n < 2 || uniform01(rng) < keep) return y;
  const int other = std::uniform_int_distribution<int>(0, n - 2)(rng);
  return other >= y ? other + 1 : other;
}

Labels SimulatedOracle::noisy_labels(const Example& example) const {
  if (!example.gold)
    throw AnnotationError("simulated oracle needs gold labels for '" + example.id + "'");
  Rng rng = make_rng(config_.rng_seed, stable_hash(example.id));
  if (const auto* spans = std::get_if<NerLabels>(&*example.gold)) {
    NerLabels out;
    for (const auto& s : *spans) {
      if (config_.mode == OracleMode::kNerSpanNoise && uniform01(rng) < config_.span_drop)
        continue;
      const int c = corrupt_class(schema_.class_index(s.cls), rng);
      out.push_back({s.start, s.end, schema_.classes[c]});
    }
    const int n = static_cast<int>(example.tokens.size());
    if (config_.mode == OracleMode::kNerSpanNoise && uniform01(rng) < config_.span_spurious) {
      const int start = std::uniform_int_distribution<int>(0, n - 1)(rng);
      const int len = std::uniform_int_distribution<int>(1, 2)(rng);
      const int c = std::uniform_int_distribution<int>(
          0, static_cast<int>(schema_.classes.size()) - 1)(rng);
      out.push_back({start, std::min(n, start + len), schema_.classes[c]});
    }
    return normalize_spans(std::move(out), n);
  }
  RelationInstance rel = std::get<RelationInstance>(*example.gold);
  if (!rel.relation)
    throw AnnotationError("example '" + example.id + "' has no gold relation");
  rel.relation = schema_.classes[corrupt_class(schema_.class_index(*rel.relation), rng)];
  return rel;
}

AnnotationOutcome SimulatedOracle::annotate(const Example& example) const {
  AnnotationOutcome outcome;
  outcome.id = example.id;
  AnnotatedExample a;
  a.example = example;
  a.silver = noisy_labels(example);
  a.provenance = Provenance::kOracleSim;
  a.annotator_meta = {{"oracle_mode", to_string(config_.mode)}};
  outcome.annotated = std::move(a);
  return outcome;
}

LlmAnnotator::LlmAnnotator(LlmAnnotatorOptions options, LlmClientConfig client_config,
                           std::shared_ptr<const ChatClient> client)
    : options_(std::move(options)),
      client_config_(std::move(client_config)),
      client_(std::move(client)) {
  client_config_.validate();
  options_.tmpl.validate();
  if (options_.tmpl.task != options_.schema.task)
    throw ValidationError("template '" + options_.tmpl.name + "' does not match the task");
  if (options_.use_knn_demos && options_.k > 0 &&
      (!options_.demo_store || !options_.embedder))
    throw ValidationError("k-NN demonstrations need a demo embedding store");
}

std::string LlmAnnotator::prompt_for(const Example& example) const {
  std::vector<Demonstration> demos;
  const int k = options_.use_knn_demos ? options_.k : 0;
  if (k > 0) {
    demos = select_demonstrations(options_.embedder->embed(example), options_.demo_pool,
                                  *options_.demo_store, k, options_.tmpl);
  }
  return build_prompt(options_.tmpl, options_.schema, example, demos, k, options_.prompt);
}

AnnotationOutcome LlmAnnotator::annotate(const Example& example) const {
  AnnotationOutcome outcome;
  outcome.id = example.id;
  std::string prompt;
  try {
    prompt = prompt_for(example);
  } catch (const Error& ex) {
    outcome.failure = std::string("prompt: ") + ex.what();
    return outcome;
  }
  const auto started = std::chrono::steady_clock::now();
  std::string last_error;
  for (int attempt = 0; attempt <= client_config_.max_retries; ++attempt) {
    if (attempt > 0 && client_config_.backoff_ms > 0)
      std::this_thread::sleep_for(
          std::chrono::milliseconds(client_config_.backoff_ms << (attempt - 1)));
    outcome.attempts = attempt + 1;
    try {
      const std::string reply = client_->complete(prompt);
      AnnotatedExample a;
      a.example = example;
      a.provenance = Provenance::kLlm;
      a.annotator_meta = {{"model", client_config_.model}, {"retries", attempt}};
      if (options_.schema.task == Task::kNer) {
        NerParseResult parsed = parse_ner_response(reply, example.tokens, options_.schema);
        a.annotator_meta["dropped_spans"] = parsed.dropped;
        a.silver = std::move(parsed.spans);
      } else {
        RelationInstance rel;
        if (example.re_struct) rel = *example.re_struct;
        else if (example.gold) rel = std::get<RelationInstance>(*example.gold);
        else throw ValidationError("example '" + example.id + "' has no entity pair");
        rel.relation = parse_re_response(reply, options_.schema);
        a.silver = rel;
      }
      a.annotator_meta["latency_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                                           std::chrono::steady_clock::now() - started)
                                           .count();
      outcome.annotated = std::move(a);
      return outcome;
    } catch (const TransportError& ex) {
      last_error = ex.what();
    } catch (const ParseFailure& ex) {
      last_error = std::string("parse: ") + ex.what();
    }
  }
  outcome.failure = last_error;
  return outcome;
}

std::vector<AnnotationOutcome> annotate_batch(const Annotator& annotator,
                                              std::span<const Example> batch) {
  if (batch.empty()) throw ValidationError("annotate_batch: empty batch");
  std::vector<AnnotationOutcome> outcomes(batch.size());
  auto run_one = [&](std::size_t i) {
    try {
      outcomes[i] = annotator.annotate(batch[i]);
    } catch (const std::exception& ex) {
      outcomes[i].id = batch[i].id;
      outcomes[i].annotated.reset();
      outcomes[i].failure = ex.what();
    }
  };
  const int workers =
      std::min<int>(std::max(1, annotator.concurrency()), static_cast<int>(batch.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < batch.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> threads;
    for (int w = 0; w < workers; ++w)
      threads.emplace_back([&] {
        for (std::size_t i = next++; i < batch.size(); i = next++) run_one(i);
      });
    for (auto& t : threads) t.join();
  }
  if (std::none_of(outcomes.begin(), outcomes.end(),
                   [](const AnnotationOutcome& o) { return o.ok(); }))
    throw AnnotationError("every example in the batch failed to annotate (first: " +
                          outcomes.front().failure + ")");
  return outcomes;
}

}  // namespace activeanno
