#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "activeanno/corpus.hpp"
#include "activeanno/error.hpp"

namespace activeanno {

struct ModelShape {
  int input_dim = 0;
  int hidden_dim = 0;  // 0 selects the linear softmax model
  int num_classes = 0;

  Eigen::Index parameter_count() const {
    const Eigen::Index top_in = hidden_dim > 0 ? hidden_dim : input_dim;
    Eigen::Index count = Eigen::Index(num_classes) * top_in + num_classes;
    if (hidden_dim > 0) count += Eigen::Index(hidden_dim) * input_dim + hidden_dim;
    return count;
  }
  bool operator==(const ModelShape&) const = default;
};

// Softmax classifier with an optional tanh hidden layer. Flat parameter order
// is hidden weights (column-major), hidden bias, output weights, output bias.
template <typename Scalar>
struct BasicModelParams {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  ModelShape shape;
  Matrix hidden_weights;  // hidden_dim x input_dim
  Vector hidden_bias;
  Matrix output_weights;  // num_classes x (hidden_dim or input_dim)
  Vector output_bias;

  static BasicModelParams zeros(const ModelShape& shape) {
    BasicModelParams p;
    p.shape = shape;
    const int top_in = shape.hidden_dim > 0 ? shape.hidden_dim : shape.input_dim;
    if (shape.hidden_dim > 0) {
      p.hidden_weights = Matrix::Zero(shape.hidden_dim, shape.input_dim);
      p.hidden_bias = Vector::Zero(shape.hidden_dim);
    }
    p.output_weights = Matrix::Zero(shape.num_classes, top_in);
    p.output_bias = Vector::Zero(shape.num_classes);
    return p;
  }

  // Gaussian weights with std scale/sqrt(fan_in), zero biases.
  static BasicModelParams random(const ModelShape& shape, std::uint64_t seed,
                                 Scalar scale = Scalar(1)) {
    BasicModelParams p = zeros(shape);
    std::mt19937_64 rng(seed);
    auto fill = [&](Matrix& m) {
      std::normal_distribution<double> normal(
          0.0, double(scale) / std::sqrt(double(std::max<Eigen::Index>(1, m.cols()))));
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = Scalar(normal(rng));
    };
    if (shape.hidden_dim > 0) fill(p.hidden_weights);
    fill(p.output_weights);
    return p;
  }

  Vector flatten() const {
    Vector flat(shape.parameter_count());
    Eigen::Index offset = 0;
    auto put = [&](const auto& block) {
      flat.segment(offset, block.size()) =
          Eigen::Map<const Vector>(block.data(), block.size());
      offset += block.size();
    };
    if (shape.hidden_dim > 0) {
      put(hidden_weights);
      put(hidden_bias);
    }
    put(output_weights);
    put(output_bias);
    return flat;
  }

  static BasicModelParams unflatten(const ModelShape& shape, const Vector& flat) {
    if (flat.size() != shape.parameter_count())
      throw ValidationError("parameter vector has " + std::to_string(flat.size()) +
                            " entries, shape expects " +
                            std::to_string(shape.parameter_count()));
    BasicModelParams p = zeros(shape);
    Eigen::Index offset = 0;
    auto take = [&](auto& block) {
      Eigen::Map<Vector>(block.data(), block.size()) =
          flat.segment(offset, block.size());
      offset += block.size();
    };
    if (shape.hidden_dim > 0) {
      take(p.hidden_weights);
      take(p.hidden_bias);
    }
    take(p.output_weights);
    take(p.output_bias);
    return p;
  }

  bool all_finite() const {
    return hidden_weights.allFinite() && hidden_bias.allFinite() &&
           output_weights.allFinite() && output_bias.allFinite();
  }
};

using ModelParams = BasicModelParams<double>;

// Column-wise softmax with max subtraction.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>
softmax_columns(const Eigen::MatrixBase<Derived>& logits) {
  using Matrix = Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Matrix shifted = logits.rowwise() - logits.colwise().maxCoeff();
  Matrix e = shifted.array().exp().matrix();
  return e.array().rowwise() / e.colwise().sum().array();
}

template <typename Scalar>
void check_input_dim(const BasicModelParams<Scalar>& params,
                     Eigen::Index feature_rows) {
  if (feature_rows != params.shape.input_dim)
    throw ValidationError("feature dimension " + std::to_string(feature_rows) +
                          " does not match model input dimension " +
                          std::to_string(params.shape.input_dim));
}

// Logits (num_classes x N) for feature columns (input_dim x N).
template <typename Scalar>
typename BasicModelParams<Scalar>::Matrix logits(
    const BasicModelParams<Scalar>& params,
    const typename BasicModelParams<Scalar>::Matrix& features) {
  check_input_dim(params, features.rows());
  if (params.shape.hidden_dim == 0)
    return (params.output_weights * features).colwise() + params.output_bias;
  typename BasicModelParams<Scalar>::Matrix hidden =
      ((params.hidden_weights * features).colwise() + params.hidden_bias)
          .array()
          .tanh()
          .matrix();
  return (params.output_weights * hidden).colwise() + params.output_bias;
}

// Class distributions, one column per feature column.
template <typename Scalar>
typename BasicModelParams<Scalar>::Matrix forward(
    const BasicModelParams<Scalar>& params,
    const typename BasicModelParams<Scalar>::Matrix& features) {
  return softmax_columns(logits(params, features));
}

template <typename Scalar>
struct BasicGradientBundle {
  // parameter_count x N, one gradient column per item.
  typename BasicModelParams<Scalar>::Matrix per_example_grads;
  typename BasicModelParams<Scalar>::Vector losses;
};

using GradientBundle = BasicGradientBundle<double>;

// Per-item cross-entropy and its exact gradient by manual backpropagation.
template <typename Scalar>
BasicGradientBundle<Scalar> loss_and_grads(
    const BasicModelParams<Scalar>& params,
    const typename BasicModelParams<Scalar>::Matrix& features,
    std::span<const int> labels) {
  using Matrix = typename BasicModelParams<Scalar>::Matrix;
  using Vector = typename BasicModelParams<Scalar>::Vector;
  check_input_dim(params, features.rows());
  const Eigen::Index n = features.cols();
  if (static_cast<Eigen::Index>(labels.size()) != n)
    throw ValidationError("label count does not match feature columns");
  const ModelShape& shape = params.shape;
  for (int y : labels)
    if (y < 0 || y >= shape.num_classes)
      throw ValidationError("label index " + std::to_string(y) + " out of range");

  const bool has_hidden = shape.hidden_dim > 0;
  Matrix hidden;
  if (has_hidden)
    hidden = ((params.hidden_weights * features).colwise() + params.hidden_bias)
                 .array()
                 .tanh()
                 .matrix();
  const Matrix& top_in = has_hidden ? hidden : features;
  Matrix z = (params.output_weights * top_in).colwise() + params.output_bias;

  BasicGradientBundle<Scalar> out;
  out.losses.resize(n);
  out.per_example_grads.resize(shape.parameter_count(), n);
  const Eigen::Index top_dim = top_in.rows();
  const Eigen::Index hidden_block =
      has_hidden ? Eigen::Index(shape.hidden_dim) * (shape.input_dim + 1) : 0;

  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar zmax = z.col(i).maxCoeff();
    const Vector e = (z.col(i).array() - zmax).exp().matrix();
    const Scalar sum = e.sum();
    out.losses[i] = std::log(sum) + zmax - z(labels[i], i);
    Vector delta = e / sum;
    delta[labels[i]] -= Scalar(1);

    auto g = out.per_example_grads.col(i);
    Eigen::Map<Matrix>(g.data() + hidden_block, shape.num_classes, top_dim) =
        delta * top_in.col(i).transpose();
    g.segment(hidden_block + shape.num_classes * top_dim, shape.num_classes) = delta;
    if (has_hidden) {
      const Vector dz = ((params.output_weights.transpose() * delta).array() *
                         (Scalar(1) - hidden.col(i).array().square()))
                            .matrix();
      Eigen::Map<Matrix>(g.data(), shape.hidden_dim, shape.input_dim) =
          dz * features.col(i).transpose();
      g.segment(Eigen::Index(shape.hidden_dim) * shape.input_dim, shape.hidden_dim) = dz;
    }
  }
  return out;
}

// Items grouped into examples: example e owns feature columns
// [offsets[e], offsets[e+1]). One column per token for NER, one per instance
// for RE.
struct ExampleSet {
  Eigen::MatrixXd features;
  std::vector<int> labels;
  std::vector<int> offsets{0};

  int num_examples() const { return static_cast<int>(offsets.size()) - 1; }
  int num_items() const { return static_cast<int>(labels.size()); }
  void add(const Eigen::MatrixXd& item_features, std::span<const int> item_labels);
  ExampleSet subset(std::span<const int> example_indices) const;
};

// Per-example loss and gradient: the mean over each example's items.
GradientBundle example_loss_and_grads(const ModelParams& params,
                                      const ExampleSet& set);

// Mean per-example loss over the set.
double mean_example_loss(const ModelParams& params, const ExampleSet& set);

// BIO tag index layout: 0 = O, 1 + 2c = B-class, 2 + 2c = I-class.
int bio_begin(int class_index);
int bio_inside(int class_index);
std::string bio_tag_name(int tag, const LabelSchema& schema);
std::vector<int> encode_bio(const NerLabels& spans, int num_tokens,
                            const LabelSchema& schema);

// Greedy decode with repair: an I-X not continuing X starts a new X span.
NerLabels decode_bio_tags(std::span<const int> tags, const LabelSchema& schema);
NerLabels decode_bio(const Eigen::MatrixXd& dists, const LabelSchema& schema);

// Model targets for one example's labels.
std::vector<int> item_labels(const Labels& labels, int num_tokens,
                             const LabelSchema& schema);

Eigen::VectorXd sgd_step(const Eigen::VectorXd& params,
                         const Eigen::VectorXd& grad, double lr);

// SGD with optional heavy-ball momentum.
class SgdOptimizer {
 public:
  SgdOptimizer(double lr, double momentum = 0.0);
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);
  void reset() { velocity_.resize(0); }

 private:
  double lr_;
  double momentum_;
  Eigen::VectorXd velocity_;
};

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace activeanno
