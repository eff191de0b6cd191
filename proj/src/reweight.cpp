#include "activeanno/reweight.hpp"

#include <cmath>
#include <fstream>

#include "activeanno/error.hpp"
#include "activeanno/random.hpp"

namespace activeanno {

void ReweightConfig::validate() const {
  if (train_batch < 1) throw ValidationError("reweight.train_batch must be >= 1");
  if (val_batch < 1) throw ValidationError("reweight.val_batch must be >= 1");
  if (!(lr > 0.0)) throw ValidationError("reweight.lr must be > 0");
  if (alpha && !(*alpha > 0.0)) throw ValidationError("reweight.alpha must be > 0");
  if (momentum < 0.0 || momentum >= 1.0)
    throw ValidationError("reweight.momentum must be in [0, 1)");
  if (steps < 1) throw ValidationError("reweight.steps must be >= 1");
  if (eval_every < 1) throw ValidationError("reweight.eval_every must be >= 1");
}

Eigen::VectorXd truncate_normalize(const Eigen::VectorXd& neg_eps_grad) {
  const Eigen::VectorXd clipped = neg_eps_grad.cwiseMax(0.0);
  const double total = clipped.sum();
  // delta(total) = 1 exactly when total = 0 guards the division.
  return clipped / (total + (total == 0.0 ? 1.0 : 0.0));
}

Eigen::VectorXd meta_weights(const Eigen::MatrixXd& train_grads,
                             const Eigen::VectorXd& val_grad, double alpha) {
  if (!(alpha > 0.0)) throw ValidationError("meta_weights: alpha must be > 0");
  if (train_grads.rows() != val_grad.size())
    throw ValidationError("meta_weights: gradient length mismatch");
  // d l_val(theta - alpha * sum_j eps_j g_j) / d eps_i at eps = 0.
  const Eigen::VectorXd eps_grad = -alpha * (train_grads.transpose() * val_grad);
  if (!eps_grad.allFinite())
    throw NumericError("meta_weights: non-finite gradient alignment");
  return truncate_normalize(-eps_grad);
}

Eigen::VectorXd meta_weights_fd(const ModelParams& params, const ExampleSet& train,
                                const ExampleSet& val, double alpha, double h) {
  if (!(alpha > 0.0)) throw ValidationError("meta_weights_fd: alpha must be > 0");
  if (!(h > 0.0)) throw ValidationError("meta_weights_fd: h must be > 0");
  const GradientBundle bundle = example_loss_and_grads(params, train);
  const Eigen::VectorXd theta = params.flatten();
  const int n = train.num_examples();
  Eigen::VectorXd eps_grad(n);
  for (int i = 0; i < n; ++i) {
    auto val_loss_at = [&](double eps_i) {
      const Eigen::VectorXd stepped =
          theta - alpha * eps_i * bundle.per_example_grads.col(i);
      return mean_example_loss(ModelParams::unflatten(params.shape, stepped), val);
    };
    eps_grad[i] = (val_loss_at(h) - val_loss_at(-h)) / (2.0 * h);
  }
  if (!eps_grad.allFinite())
    throw NumericError("meta_weights_fd: non-finite difference (h too small?)");
  return truncate_normalize(-eps_grad);
}

bool is_valid_weight_vector(const Eigen::VectorXd& w, double tol) {
  if (!w.allFinite() || (w.array() < 0.0).any()) return false;
  const double total = w.sum();
  return total == 0.0 || std::abs(total - 1.0) <= tol;
}

double weight_entropy(const Eigen::VectorXd& w) {
  double h = 0.0;
  for (double x : w)
    if (x > 0.0) h -= x * std::log(x);
  return h;
}

TrainResult train(const ExampleSet& train_set, const ExampleSet& val_set,
                  const ReweightConfig& config, const TrainOptions& options) {
  config.validate();
  if (train_set.num_examples() < 1) throw ValidationError("train: no labeled examples");
  if (config.enabled && val_set.num_examples() < 1)
    throw ValidationError("train: reweighting needs validation examples");

  TrainResult result;
  ModelParams params =
      options.init ? *options.init
                   : ModelParams::random(options.shape,
                                         mix_seed(options.rng_seed, kInitStream),
                                         options.init_scale);
  Eigen::VectorXd theta = params.flatten();
  SgdOptimizer optimizer(config.lr, config.momentum);
  Rng train_rng = make_rng(options.rng_seed, kTrainBatchStream);
  Rng val_rng = make_rng(options.rng_seed, kValBatchStream);
  std::uniform_int_distribution<int> pick_train(0, train_set.num_examples() - 1);
  std::uniform_int_distribution<int> pick_val(0, std::max(0, val_set.num_examples() - 1));

  result.params = params;
  ModelParams last_good = params;
  std::vector<int> train_idx(config.train_batch);
  std::vector<int> val_idx(config.val_batch);

  auto checkpoint = [&](const ModelParams& current, int step, TrainingLogRow& row) {
    if (!options.val_metric) return;
    const double metric = options.val_metric(current);
    row.val_f1 = metric;
    if (metric > result.best_val_metric) {
      result.best_val_metric = metric;
      result.best_step = step;
      result.params = current;
    }
  };

  for (int s = 0; s < config.steps; ++s) {
    for (auto& i : train_idx) i = pick_train(train_rng);
    const ExampleSet batch = train_set.subset(train_idx);
    const GradientBundle bundle = example_loss_and_grads(params, batch);

    Eigen::VectorXd weights;
    Eigen::VectorXd val_grad;
    if (config.enabled) {
      for (auto& i : val_idx) i = pick_val(val_rng);
      const ExampleSet val_batch = val_set.subset(val_idx);
      val_grad = example_loss_and_grads(params, val_batch).per_example_grads.rowwise().mean();
      weights = meta_weights(bundle.per_example_grads, val_grad, config.virtual_step());
      if (!is_valid_weight_vector(weights))
        throw NumericError("weight vector invariant violated at step " + std::to_string(s));
    } else {
      weights = Eigen::VectorXd::Constant(config.train_batch, 1.0 / config.train_batch);
    }
    if (options.observer) options.observer(s, bundle.per_example_grads, val_grad, weights);

    TrainingLogRow row;
    row.step = s;
    row.train_loss = bundle.losses.mean();
    row.weight_entropy = weight_entropy(weights);
    row.zero_fraction = (weights.array() == 0.0).cast<double>().mean();

    const Eigen::VectorXd grad = bundle.per_example_grads * weights;
    if (!std::isfinite(row.train_loss) || !grad.allFinite()) {
      result.aborted = true;
      result.abort_reason = "non-finite loss or gradient at step " + std::to_string(s);
      result.log.push_back(row);
      break;
    }
    optimizer.step(theta, grad);
    params = ModelParams::unflatten(options.shape, theta);
    if (!params.all_finite()) {
      result.aborted = true;
      result.abort_reason = "non-finite parameters after step " + std::to_string(s);
      params = last_good;
      result.log.push_back(row);
      break;
    }
    last_good = params;
    result.steps_run = s + 1;
    if ((s + 1) % config.eval_every == 0 || s + 1 == config.steps)
      checkpoint(params, s + 1, row);
    result.log.push_back(row);
  }

  result.final_params = last_good;
  if (!options.val_metric) {
    result.params = last_good;
    result.best_step = result.steps_run;
  } else if (result.best_step < 0) {
    result.params = last_good;
  }
  return result;
}

void write_training_log(std::span<const TrainingLogRow> rows,
                        const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "step,train_loss,weight_entropy,zero_fraction,val_f1\n";
  for (const auto& r : rows) {
    out << r.step << ',' << r.train_loss << ',' << r.weight_entropy << ','
        << r.zero_fraction << ',';
    if (r.val_f1) out << *r.val_f1;
    out << '\n';
  }
}

}  // namespace activeanno
