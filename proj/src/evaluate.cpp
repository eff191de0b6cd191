#include "activeanno/evaluate.hpp"

#include <algorithm>
#include <set>

#include "activeanno/error.hpp"

namespace activeanno {

Metrics metrics_from_counts(long tp, long fp, long fn) {
  Metrics m;
  m.tp = tp;
  m.fp = fp;
  m.fn = fn;
  m.precision = tp + fp > 0 ? double(tp) / double(tp + fp) : 0.0;
  m.recall = tp + fn > 0 ? double(tp) / double(tp + fn) : 0.0;
  m.f1 = m.precision + m.recall > 0.0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  return m;
}

nlohmann::json to_json(const Metrics& m) {
  return {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1},
          {"tp", m.tp}, {"fp", m.fp}, {"fn", m.fn}};
}

Metrics score_ner(std::span<const NerLabels> gold, std::span<const NerLabels> predicted) {
  if (gold.size() != predicted.size())
    throw ValidationError("score_ner: gold/prediction count mismatch");
  long tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const std::set<SpanLabel> g(gold[i].begin(), gold[i].end());
    const std::set<SpanLabel> p(predicted[i].begin(), predicted[i].end());
    long hit = 0;
    for (const auto& s : p) hit += g.count(s);
    tp += hit;
    fp += static_cast<long>(p.size()) - hit;
    fn += static_cast<long>(g.size()) - hit;
  }
  return metrics_from_counts(tp, fp, fn);
}

Metrics score_re(std::span<const std::string> gold,
                 std::span<const std::string> predicted,
                 const std::optional<std::string>& na_class) {
  if (gold.size() != predicted.size())
    throw ValidationError("score_re: gold/prediction count mismatch");
  auto positive = [&](const std::string& c) { return !na_class || c != *na_class; };
  long tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const bool gp = positive(gold[i]);
    const bool pp = positive(predicted[i]);
    if (pp && gold[i] == predicted[i]) {
      ++tp;
      continue;
    }
    if (pp) ++fp;
    if (gp) ++fn;
  }
  return metrics_from_counts(tp, fp, fn);
}

Labels predict_labels(const ModelParams& params, const Eigen::MatrixXd& features,
                      const Example& example, const LabelSchema& schema) {
  const Eigen::MatrixXd dists = forward(params, features);
  if (schema.task == Task::kNer) return decode_bio(dists, schema);
  Eigen::Index best = 0;
  dists.col(0).maxCoeff(&best);
  RelationInstance rel;
  if (example.re_struct) rel = *example.re_struct;
  else if (example.gold) rel = std::get<RelationInstance>(*example.gold);
  rel.relation = schema.classes.at(best);
  return rel;
}

Metrics evaluate(const ModelParams& params, const FeatureTable& features,
                 std::span<const Example> examples, const LabelSchema& schema) {
  if (schema.task == Task::kNer) {
    std::vector<NerLabels> gold, pred;
    for (const auto& e : examples) {
      if (!e.gold) throw ValidationError("evaluate: '" + e.id + "' has no gold labels");
      gold.push_back(std::get<NerLabels>(*e.gold));
      pred.push_back(std::get<NerLabels>(predict_labels(params, features.at(e.id), e, schema)));
    }
    return score_ner(gold, pred);
  }
  std::vector<std::string> gold, pred;
  for (const auto& e : examples) {
    if (!e.gold) throw ValidationError("evaluate: '" + e.id + "' has no gold labels");
    gold.push_back(std::get<RelationInstance>(*e.gold).relation.value_or(""));
    pred.push_back(*std::get<RelationInstance>(
                        predict_labels(params, features.at(e.id), e, schema))
                        .relation);
  }
  return score_re(gold, pred, schema.na_class);
}

}  // namespace activeanno
