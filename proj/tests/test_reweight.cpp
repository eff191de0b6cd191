#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "activeanno/error.hpp"
#include "activeanno/random.hpp"
#include "activeanno/reweight.hpp"
#include "test_util.hpp"

using namespace activeanno;

namespace {

ExampleSet random_set(int examples, int dim, int classes, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> label(0, classes - 1);
  ExampleSet set;
  for (int e = 0; e < examples; ++e) {
    Eigen::MatrixXd x(dim, 1);
    for (int i = 0; i < dim; ++i) x(i, 0) = normal(rng);
    const std::vector<int> y = {label(rng)};
    set.add(x, y);
  }
  return set;
}

// Two Gaussian blobs per class direction; label noise optional.
ExampleSet blobs(int n, int classes, double noise, std::uint64_t seed, double flip = 0.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, noise);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ExampleSet set;
  for (int e = 0; e < n; ++e) {
    const int y = e % classes;
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(classes, 1);
    x(y, 0) = 3.0;
    for (int i = 0; i < classes; ++i) x(i, 0) += normal(rng);
    const int label = u(rng) < flip ? (y + 1) % classes : y;
    const std::vector<int> lab = {label};
    set.add(x, lab);
  }
  return set;
}

double accuracy(const ModelParams& p, const ExampleSet& set) {
  const Eigen::MatrixXd probs = forward(p, set.features);
  int correct = 0;
  for (Eigen::Index j = 0; j < probs.cols(); ++j) {
    Eigen::Index best;
    probs.col(j).maxCoeff(&best);
    correct += best == set.labels[j];
  }
  return double(correct) / probs.cols();
}

}  // namespace

TEST(MetaWeights, TwoExamplesHandValues) {
  Eigen::MatrixXd g(2, 2);
  g.col(0) << 3.0, 5.0;   // dot with v = 3
  g.col(1) << -1.0, 2.0;  // dot with v = -1
  const Eigen::VectorXd v = Eigen::Vector2d(1.0, 0.0);
  for (double alpha : {0.01, 0.5, 7.0}) {
    const auto w = meta_weights(g, v, alpha);
    EXPECT_DOUBLE_EQ(w(0), 1.0);
    EXPECT_DOUBLE_EQ(w(1), 0.0);
  }
  // Finite differences on eps of l_val(theta) = v.theta + |theta|^2 / 2 at
  // theta = 0 after the virtual step theta = -alpha * sum eps_j g_j.
  const double alpha = 0.3, h = 1e-6;
  auto l_val = [&](const Eigen::Vector2d& eps) {
    const Eigen::Vector2d theta = -alpha * (g * eps);
    return v.dot(theta) + 0.5 * theta.squaredNorm();
  };
  Eigen::Vector2d neg_grad;
  for (int i = 0; i < 2; ++i) {
    Eigen::Vector2d up = Eigen::Vector2d::Zero(), down = Eigen::Vector2d::Zero();
    up(i) = h;
    down(i) = -h;
    neg_grad(i) = -(l_val(up) - l_val(down)) / (2 * h);
  }
  EXPECT_NEAR(neg_grad(0), alpha * 3.0, 1e-6);
  EXPECT_NEAR(neg_grad(1), -alpha * 1.0, 1e-6);
  const auto w_fd = truncate_normalize(neg_grad);
  EXPECT_NEAR(w_fd(0), 1.0, 1e-12);
  EXPECT_EQ(w_fd(1), 0.0);
}

TEST(MetaWeights, OrthogonalGradientsGiveZeroWeights) {
  Eigen::MatrixXd g(3, 4);
  g << 0, 0, 0, 0,
       1, -2, 3, 0.5,
       4, 1, -1, 2;
  const Eigen::VectorXd v = Eigen::Vector3d(2.0, 0.0, 0.0);
  const auto w = meta_weights(g, v, 0.1);
  EXPECT_TRUE(w.isZero(0.0));
  EXPECT_TRUE(is_valid_weight_vector(w));
  // Zero weights mean the update leaves the parameters alone.
  const Eigen::VectorXd theta = Eigen::Vector3d(1, 2, 3);
  EXPECT_EQ(sgd_step(theta, g * w, 0.1), theta);
}

TEST(MetaWeights, AlphaCancelsAndNegativeAlignmentGetsZero) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::MatrixXd g(6, 8);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = normal(rng);
    Eigen::VectorXd v(6);
    for (int i = 0; i < 6; ++i) v(i) = normal(rng);
    const auto w = meta_weights(g, v, 0.2);
    ASSERT_TRUE(is_valid_weight_vector(w));
    for (double c : {0.1, 10.0, 1e4}) {
      const auto wc = meta_weights(g, v, 0.2 * c);
      EXPECT_LT((wc - w).cwiseAbs().maxCoeff(), 1e-12);
    }
    const Eigen::VectorXd dots = g.transpose() * v;
    for (int i = 0; i < 8; ++i)
      if (dots(i) < 0) EXPECT_EQ(w(i), 0.0);
  }
}

TEST(MetaWeights, RejectsNonPositiveAlpha) {
  const Eigen::MatrixXd g = Eigen::MatrixXd::Ones(2, 2);
  const Eigen::VectorXd v = Eigen::VectorXd::Ones(2);
  EXPECT_THROW(meta_weights(g, v, 0.0), ValidationError);
  std::mt19937_64 rng(1);
  const auto p = ModelParams::random({3, 0, 2}, 1);
  const auto set = random_set(2, 3, 2, rng);
  EXPECT_THROW(meta_weights_fd(p, set, set, 0.0, 1e-5), ValidationError);
  EXPECT_THROW(meta_weights_fd(p, set, set, -1.0, 1e-5), ValidationError);
}

TEST(MetaWeights, SingleAlignedExampleGetsFullWeight) {
  std::mt19937_64 rng(2);
  const auto p = ModelParams::random({4, 0, 3}, 2);
  const auto set = random_set(1, 4, 3, rng);
  const auto bundle = example_loss_and_grads(p, set);
  const Eigen::VectorXd v = bundle.per_example_grads.col(0);
  const auto closed = meta_weights(bundle.per_example_grads, v, 0.1);
  const auto fd = meta_weights_fd(p, set, set, 0.1, 1e-5);
  ASSERT_EQ(closed.size(), 1);
  EXPECT_DOUBLE_EQ(closed(0), 1.0);
  EXPECT_NEAR(fd(0), 1.0, 1e-12);
}

TEST(MetaWeights, AgreesWithFiniteDifferences) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const ModelShape shape{10, trial % 2 ? 6 : 0, 3};
    const auto p = ModelParams::random(shape, trial, 0.5);
    const auto train = random_set(8, 10, 3, rng);
    const auto val = random_set(4, 10, 3, rng);
    const Eigen::VectorXd v =
        example_loss_and_grads(p, val).per_example_grads.rowwise().mean();
    const auto closed = meta_weights(example_loss_and_grads(p, train).per_example_grads, v, 0.1);
    const auto fd = meta_weights_fd(p, train, val, 0.1, 1e-5);
    EXPECT_LT((closed - fd).cwiseAbs().maxCoeff(), 1e-4) << "trial " << trial;
  }
}

TEST(WeightEntropy, Values) {
  EXPECT_DOUBLE_EQ(weight_entropy(Eigen::Vector2d(1.0, 0.0)), 0.0);
  EXPECT_NEAR(weight_entropy(Eigen::Vector4d::Constant(0.25)), std::log(4.0), 1e-12);
  EXPECT_FALSE(is_valid_weight_vector(Eigen::Vector2d(0.7, 0.7)));
  EXPECT_FALSE(is_valid_weight_vector(Eigen::Vector2d(1.5, -0.5)));
}

TEST(ReweightConfig, Validation) {
  ReweightConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_DOUBLE_EQ(c.virtual_step(), c.lr);
  c.alpha = 0.05;
  EXPECT_DOUBLE_EQ(c.virtual_step(), 0.05);
  c.alpha = -1.0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = {};
  c.train_batch = 0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = {};
  c.steps = 0;
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(Train, DisabledReweightingIsPlainSgd) {
  const ExampleSet data = blobs(60, 3, 1.0, 5, 0.2);
  const ExampleSet val = blobs(20, 3, 1.0, 6);
  ReweightConfig config;
  config.enabled = false;
  config.steps = 50;
  config.lr = 0.3;
  config.train_batch = 7;
  TrainOptions options;
  options.shape = {3, 0, 3};
  options.rng_seed = 42;
  const TrainResult result = train(data, val, config, options);

  // The same steps written out by hand.
  const ModelParams init =
      ModelParams::random(options.shape, mix_seed(42, kInitStream), options.init_scale);
  Eigen::VectorXd theta = init.flatten();
  Rng rng = make_rng(42, kTrainBatchStream);
  std::uniform_int_distribution<int> pick(0, data.num_examples() - 1);
  std::vector<int> idx(7);
  for (int s = 0; s < 50; ++s) {
    for (auto& i : idx) i = pick(rng);
    const auto grads =
        example_loss_and_grads(ModelParams::unflatten(options.shape, theta), data.subset(idx))
            .per_example_grads;
    theta = sgd_step(theta, grads * Eigen::VectorXd::Constant(7, 1.0 / 7), 0.3);
  }
  const Eigen::VectorXd got = result.final_params.flatten();
  ASSERT_EQ(got.size(), theta.size());
  for (Eigen::Index i = 0; i < got.size(); ++i) EXPECT_EQ(got(i), theta(i));
}

TEST(Train, SeparableDataIsFitExactly) {
  const ExampleSet data = blobs(80, 2, 0.3, 7);
  ReweightConfig config;
  config.enabled = false;
  config.steps = 400;
  TrainOptions options;
  options.shape = {2, 0, 2};
  const auto result = train(data, data, config, options);
  EXPECT_DOUBLE_EQ(accuracy(result.params, data), 1.0);
}

TEST(Train, EveryWeightVectorSatisfiesTheContract) {
  const ExampleSet data = blobs(100, 4, 1.0, 8, 0.3);
  const ExampleSet val = blobs(40, 4, 1.0, 9);
  ReweightConfig config;
  config.steps = 200;
  config.lr = 0.5;
  TrainOptions options;
  options.shape = {4, 3, 4};
  int checked = 0;
  int rescaled = 0;
  options.observer = [&](int, const Eigen::MatrixXd& g, const Eigen::VectorXd& v,
                         const Eigen::VectorXd& w) {
    ++checked;
    EXPECT_TRUE(is_valid_weight_vector(w));
    const Eigen::VectorXd dots = g.transpose() * v;
    for (Eigen::Index i = 0; i < w.size(); ++i)
      if (dots(i) < 0) EXPECT_EQ(w(i), 0.0);
    if (w.sum() > 0) {
      ++rescaled;
      for (double c : {0.1, 10.0})
        EXPECT_LT((meta_weights(g, v, 0.5 * c) - w).cwiseAbs().maxCoeff(), 1e-12);
    }
  };
  const auto result = train(data, val, config, options);
  EXPECT_EQ(checked, 200);
  EXPECT_GT(rescaled, 0);
  EXPECT_FALSE(result.aborted);
}

TEST(Train, CheckpointTracksBestValidationMetric) {
  const ExampleSet data = blobs(60, 3, 1.0, 10);
  ReweightConfig config;
  config.steps = 100;
  config.eval_every = 10;
  TrainOptions options;
  options.shape = {3, 0, 3};
  std::vector<double> seen;
  options.val_metric = [&](const ModelParams& p) {
    seen.push_back(accuracy(p, data));
    return seen.back();
  };
  const auto result = train(data, data, config, options);
  ASSERT_EQ(seen.size(), 10u);
  const double best = *std::max_element(seen.begin(), seen.end());
  EXPECT_DOUBLE_EQ(result.best_val_metric, best);
  EXPECT_DOUBLE_EQ(accuracy(result.params, data), best);
  EXPECT_EQ(result.best_step % 10, 0);
}

TEST(Train, NonFiniteRunAbortsWithLastGoodParams) {
  ExampleSet data;
  const std::vector<int> y0 = {0}, y1 = {1};
  data.add(Eigen::MatrixXd::Constant(2, 1, 1e300), y0);
  // Same input, two labels: one is always misclassified, so gradients never vanish.
  data.add(Eigen::MatrixXd::Constant(2, 1, 1e300), y1);
  ReweightConfig config;
  config.enabled = false;
  config.lr = 1e10;
  config.steps = 50;
  TrainOptions options;
  options.shape = {2, 0, 2};
  const auto result = train(data, data, config, options);
  EXPECT_TRUE(result.aborted);
  EXPECT_FALSE(result.abort_reason.empty());
  EXPECT_TRUE(result.final_params.all_finite());
  EXPECT_TRUE(result.params.all_finite());
}

TEST(Train, ReweightingSurvivesCleanLabels) {
  // Noiseless labels: reweighting should cost at most a little accuracy.
  double with = 0, without = 0;
  for (int seed = 0; seed < 5; ++seed) {
    const ExampleSet data = blobs(200, 4, 1.2, 100 + seed);
    const ExampleSet val = blobs(80, 4, 1.2, 200 + seed);
    const ExampleSet test = blobs(1000, 4, 1.2, 300 + seed);
    ReweightConfig config;
    config.steps = 300;
    config.lr = 0.2;
    TrainOptions options;
    options.shape = {4, 0, 4};
    options.rng_seed = seed;
    options.val_metric = [&](const ModelParams& p) { return accuracy(p, val); };
    with += accuracy(train(data, val, config, options).params, test) / 5;
    config.enabled = false;
    without += accuracy(train(data, val, config, options).params, test) / 5;
  }
  EXPECT_LT(std::abs(with - without), 0.02) << with << " vs " << without;
}

TEST(TrainingLog, CsvLayout) {
  testutil::TempDir dir;
  std::vector<TrainingLogRow> rows = {{0, 1.5, 0.7, 0.25, std::nullopt}, {1, 1.25, 0.6, 0.0, 0.5}};
  write_training_log(rows, dir / "log.csv");
  std::ifstream in(dir / "log.csv");
  std::string header, first, second;
  std::getline(in, header);
  std::getline(in, first);
  std::getline(in, second);
  EXPECT_EQ(header, "step,train_loss,weight_entropy,zero_fraction,val_f1");
  EXPECT_EQ(first, "0,1.5,0.7,0.25,");
  EXPECT_EQ(second, "1,1.25,0.6,0,0.5");
}
