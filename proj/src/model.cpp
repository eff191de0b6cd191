#include "activeanno/model.hpp"

#include <fstream>

#include <json.hpp>

namespace activeanno {

void ExampleSet::add(const Eigen::MatrixXd& item_features,
                     std::span<const int> item_labels) {
  if (item_features.cols() != static_cast<Eigen::Index>(item_labels.size()))
    throw ValidationError("item feature/label count mismatch");
  if (item_labels.empty()) throw ValidationError("example has no items");
  if (features.size() == 0) {
    features = item_features;
  } else {
    if (item_features.rows() != features.rows())
      throw ValidationError("inconsistent feature dimension");
    features.conservativeResize(Eigen::NoChange, features.cols() + item_features.cols());
    features.rightCols(item_features.cols()) = item_features;
  }
  labels.insert(labels.end(), item_labels.begin(), item_labels.end());
  offsets.push_back(static_cast<int>(labels.size()));
}

ExampleSet ExampleSet::subset(std::span<const int> example_indices) const {
  int total = 0;
  for (int e : example_indices) total += offsets[e + 1] - offsets[e];
  ExampleSet out;
  out.features.resize(features.rows(), total);
  out.labels.reserve(total);
  out.offsets.reserve(example_indices.size() + 1);
  int col = 0;
  for (int e : example_indices) {
    const int begin = offsets[e];
    const int count = offsets[e + 1] - begin;
    out.features.middleCols(col, count) = features.middleCols(begin, count);
    out.labels.insert(out.labels.end(), labels.begin() + begin,
                      labels.begin() + begin + count);
    col += count;
    out.offsets.push_back(col);
  }
  return out;
}

GradientBundle example_loss_and_grads(const ModelParams& params,
                                      const ExampleSet& set) {
  const GradientBundle items = loss_and_grads(params, set.features, set.labels);
  const int n = set.num_examples();
  GradientBundle out;
  out.per_example_grads.resize(items.per_example_grads.rows(), n);
  out.losses.resize(n);
  for (int e = 0; e < n; ++e) {
    const int begin = set.offsets[e];
    const int count = set.offsets[e + 1] - begin;
    out.per_example_grads.col(e) =
        items.per_example_grads.middleCols(begin, count).rowwise().mean();
    out.losses[e] = items.losses.segment(begin, count).mean();
  }
  return out;
}

double mean_example_loss(const ModelParams& params, const ExampleSet& set) {
  const Eigen::MatrixXd z = logits(params, set.features);
  double total = 0.0;
  for (int e = 0; e < set.num_examples(); ++e) {
    double sum = 0.0;
    const int begin = set.offsets[e];
    const int count = set.offsets[e + 1] - begin;
    for (int i = begin; i < begin + count; ++i) {
      const double zmax = z.col(i).maxCoeff();
      sum += std::log((z.col(i).array() - zmax).exp().sum()) + zmax -
             z(set.labels[i], i);
    }
    total += sum / count;
  }
  return total / set.num_examples();
}

int bio_begin(int class_index) { return 1 + 2 * class_index; }
int bio_inside(int class_index) { return 2 + 2 * class_index; }

std::string bio_tag_name(int tag, const LabelSchema& schema) {
  if (tag == 0) return "O";
  const int c = (tag - 1) / 2;
  return ((tag - 1) % 2 == 0 ? "B-" : "I-") + schema.classes.at(c);
}

std::vector<int> encode_bio(const NerLabels& spans, int num_tokens,
                            const LabelSchema& schema) {
  std::vector<int> tags(num_tokens, 0);
  for (const auto& s : spans) {
    const int c = schema.class_index(s.cls);
    if (c < 0) throw ValidationError("unknown class '" + s.cls + "'");
    tags.at(s.start) = bio_begin(c);
    for (int t = s.start + 1; t < s.end; ++t) tags.at(t) = bio_inside(c);
  }
  return tags;
}

NerLabels decode_bio_tags(std::span<const int> tags, const LabelSchema& schema) {
  NerLabels spans;
  int open_class = -1;
  for (int t = 0; t < static_cast<int>(tags.size()); ++t) {
    const int tag = tags[t];
    if (tag == 0) {
      open_class = -1;
      continue;
    }
    const int c = (tag - 1) / 2;
    const bool inside = (tag - 1) % 2 == 1;
    if (inside && open_class == c) {
      spans.back().end = t + 1;
    } else {
      spans.push_back({t, t + 1, schema.classes.at(c)});
      open_class = c;
    }
  }
  return spans;
}

NerLabels decode_bio(const Eigen::MatrixXd& dists, const LabelSchema& schema) {
  std::vector<int> tags(dists.cols());
  for (Eigen::Index t = 0; t < dists.cols(); ++t) {
    Eigen::Index best = 0;
    dists.col(t).maxCoeff(&best);
    tags[t] = static_cast<int>(best);
  }
  return decode_bio_tags(tags, schema);
}

std::vector<int> item_labels(const Labels& labels, int num_tokens,
                             const LabelSchema& schema) {
  if (const auto* spans = std::get_if<NerLabels>(&labels))
    return encode_bio(*spans, num_tokens, schema);
  const auto& rel = std::get<RelationInstance>(labels);
  if (!rel.relation) throw ValidationError("relation label is missing");
  const int c = schema.class_index(*rel.relation);
  if (c < 0) throw ValidationError("unknown class '" + *rel.relation + "'");
  return {c};
}

Eigen::VectorXd sgd_step(const Eigen::VectorXd& params,
                         const Eigen::VectorXd& grad, double lr) {
  if (!(lr > 0.0)) throw ValidationError("learning rate must be > 0");
  if (!grad.allFinite()) throw NumericError("non-finite gradient in SGD step");
  return params - lr * grad;
}

SgdOptimizer::SgdOptimizer(double lr, double momentum)
    : lr_(lr), momentum_(momentum) {
  if (!(lr > 0.0)) throw ValidationError("learning rate must be > 0");
  if (momentum < 0.0 || momentum >= 1.0)
    throw ValidationError("momentum must be in [0, 1)");
}

void SgdOptimizer::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  if (momentum_ == 0.0) {
    params = sgd_step(params, grad, lr_);
    return;
  }
  if (!grad.allFinite()) throw NumericError("non-finite gradient in SGD step");
  if (velocity_.size() != grad.size()) velocity_ = Eigen::VectorXd::Zero(grad.size());
  velocity_ = momentum_ * velocity_ + grad;
  params -= lr_ * velocity_;
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  const Eigen::VectorXd flat = params.flatten();
  nlohmann::json j = {
      {"format", "activeanno-checkpoint"},
      {"version", 1},
      {"shape",
       {{"input_dim", params.shape.input_dim},
        {"hidden_dim", params.shape.hidden_dim},
        {"num_classes", params.shape.num_classes}}},
      {"params", std::vector<double>(flat.data(), flat.data() + flat.size())}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << j.dump() << '\n';
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.at("format") != "activeanno-checkpoint" || j.at("version") != 1)
      throw ValidationError("'" + path.string() + "' is not a version 1 checkpoint");
    ModelShape shape{j.at("shape").at("input_dim").get<int>(),
                     j.at("shape").at("hidden_dim").get<int>(),
                     j.at("shape").at("num_classes").get<int>()};
    const auto values = j.at("params").get<std::vector<double>>();
    return ModelParams::unflatten(
        shape, Eigen::Map<const Eigen::VectorXd>(values.data(),
                                                 static_cast<Eigen::Index>(values.size())));
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError("checkpoint '" + path.string() + "': " + ex.what());
  }
}

}  // namespace activeanno
