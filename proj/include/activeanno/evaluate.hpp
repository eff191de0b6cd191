#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "activeanno/corpus.hpp"
#include "activeanno/features.hpp"
#include "activeanno/model.hpp"

namespace activeanno {

struct Metrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long tp = 0;
  long fp = 0;
  long fn = 0;
};

Metrics metrics_from_counts(long tp, long fp, long fn);
nlohmann::json to_json(const Metrics& m);

// Exact (start, end, class) span matching, pooled over all examples.
Metrics score_ner(std::span<const NerLabels> gold, std::span<const NerLabels> predicted);

// Micro-averaged over non-NA classes: a non-NA prediction for an NA gold is a
// false positive; an NA prediction for a non-NA gold is a false negative.
Metrics score_re(std::span<const std::string> gold,
                 std::span<const std::string> predicted,
                 const std::optional<std::string>& na_class);

// Model labels for one example (decoded spans or argmax class).
Labels predict_labels(const ModelParams& params, const Eigen::MatrixXd& features,
                      const Example& example, const LabelSchema& schema);

Metrics evaluate(const ModelParams& params, const FeatureTable& features,
                 std::span<const Example> examples, const LabelSchema& schema);

}  // namespace activeanno
