#pragma once

#include <memory>
#include <vector>

#include "activeanno/annotator.hpp"
#include "activeanno/loop.hpp"
#include "activeanno/synthetic.hpp"

namespace testutil {

// A Gaussian-mixture instance task wired into the active loop with a
// simulated oracle that applies a cyclic confusion matrix.
struct MixtureSetup {
  activeanno::SyntheticDataset data;
  activeanno::Corpus corpus;
  std::unique_ptr<activeanno::StoreFeatures> extractor;
  std::unique_ptr<activeanno::FeatureTable> features;
  std::unique_ptr<activeanno::Annotator> annotator;
  activeanno::DatasetSplits splits;
  activeanno::LoopContext context;

  MixtureSetup(const activeanno::MixtureConfig& mixture, double confusion_off,
               std::uint64_t seed, int gold_subset = 100, int seed_size = 50) {
    using namespace activeanno;
    data = make_mixture_dataset(mixture);
    for (const auto* part : {&data.pool, &data.gold, &data.test})
      for (const auto& e : *part) corpus.add(e);
    extractor = std::make_unique<StoreFeatures>(data.vectors);
    features = std::make_unique<FeatureTable>(*extractor, corpus.examples());
    OracleConfig oracle;
    oracle.mode = OracleMode::kConfusionMatrix;
    oracle.confusion = cyclic_confusion(mixture.num_classes, confusion_off);
    oracle.rng_seed = seed;
    annotator = std::make_unique<SimulatedOracle>(data.schema, oracle);
    SplitOptions so;
    so.gold_subset_size = gold_subset;
    so.seed_labeled_size = seed_size;
    so.rng_seed = seed;
    splits = init_splits(data.pool, data.gold, so);
    context.corpus = &corpus;
    context.schema = &data.schema;
    context.features = features.get();
    context.annotator = annotator.get();
    context.embeddings = data.vectors.get();
    for (const auto& e : data.test) context.test_ids.push_back(e.id);
  }
};

}  // namespace testutil
