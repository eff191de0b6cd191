#include "activeanno/features.hpp"

#include <algorithm>

#include "activeanno/error.hpp"

namespace activeanno {

namespace {

Eigen::MatrixXd token_matrix(const HashedEmbedder& embedder,
                             const std::vector<std::string>& tokens) {
  Eigen::MatrixXd m(embedder.dim(), static_cast<Eigen::Index>(tokens.size()));
  for (std::size_t t = 0; t < tokens.size(); ++t)
    m.col(static_cast<Eigen::Index>(t)) = embedder.embed_token(tokens[t]);
  return m;
}

}  // namespace

Eigen::MatrixXd NerTokenFeatures::extract(const Example& example) const {
  const Eigen::MatrixXd tokens = token_matrix(embedder_, example.tokens);
  const int n = static_cast<int>(tokens.cols());
  const int d = embedder_.dim();
  Eigen::MatrixXd out(2 * d, n);
  for (int t = 0; t < n; ++t) {
    const int lo = std::max(0, t - window_);
    const int hi = std::min(n - 1, t + window_);
    out.col(t).head(d) = tokens.col(t);
    out.col(t).tail(d) = tokens.middleCols(lo, hi - lo + 1).rowwise().mean();
  }
  return out;
}

Eigen::MatrixXd ReInstanceFeatures::extract(const Example& example) const {
  if (!example.re_struct)
    throw ValidationError("example '" + example.id + "' has no relation structure");
  const Eigen::MatrixXd tokens = token_matrix(embedder_, example.tokens);
  const int d = embedder_.dim();
  const auto& rs = *example.re_struct;
  Eigen::MatrixXd out(3 * d, 1);
  out.col(0).segment(0, d) =
      tokens.middleCols(rs.subj.start, rs.subj.length()).rowwise().mean();
  out.col(0).segment(d, d) =
      tokens.middleCols(rs.obj.start, rs.obj.length()).rowwise().mean();
  out.col(0).segment(2 * d, d) = tokens.rowwise().mean();
  return out;
}

FeatureTable::FeatureTable(const FeatureExtractor& extractor,
                           std::span<const Example> examples)
    : dim_(extractor.dim()) {
  for (const auto& e : examples) {
    if (table_.count(e.id)) continue;
    Eigen::MatrixXd f = extractor.extract(e);
    if (!f.allFinite())
      throw ValidationError("non-finite features for example '" + e.id + "'");
    table_.emplace(e.id, std::move(f));
  }
}

const Eigen::MatrixXd& FeatureTable::at(const std::string& id) const {
  auto it = table_.find(id);
  if (it == table_.end())
    throw ValidationError("no features for example '" + id + "'");
  return it->second;
}

ExampleSet FeatureTable::example_set(std::span<const Example> examples,
                                     std::span<const Labels> labels,
                                     const LabelSchema& schema) const {
  if (examples.size() != labels.size())
    throw ValidationError("example/label count mismatch");
  ExampleSet set;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& e = examples[i];
    const Eigen::MatrixXd& f = at(e.id);
    const auto y = item_labels(labels[i], static_cast<int>(e.tokens.size()), schema);
    if (static_cast<Eigen::Index>(y.size()) != f.cols())
      throw ValidationError("example '" + e.id + "': label/feature count mismatch");
    set.add(f, y);
  }
  return set;
}

ExampleSet FeatureTable::gold_set(std::span<const Example> examples,
                                  const LabelSchema& schema) const {
  std::vector<Labels> labels;
  labels.reserve(examples.size());
  for (const auto& e : examples) {
    if (!e.gold) throw ValidationError("example '" + e.id + "' has no gold labels");
    labels.push_back(*e.gold);
  }
  return example_set(examples, labels, schema);
}

}  // namespace activeanno
