#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "activeanno/model.hpp"

namespace activeanno {

// RNG streams (mixed with the run seed) for train and validation batches.
inline constexpr std::uint64_t kTrainBatchStream = 0x7261;
inline constexpr std::uint64_t kValBatchStream = 0x7662;
inline constexpr std::uint64_t kInitStream = 0x1a1a;

struct ReweightConfig {
  bool enabled = true;
  int train_batch = 16;  // n
  int val_batch = 16;    // m
  double lr = 1.0;
  // Virtual step size; when unset the learning rate is reused.
  std::optional<double> alpha;
  double momentum = 0.0;
  int steps = 600;  // S
  int eval_every = 20;

  double virtual_step() const { return alpha.value_or(lr); }
  void validate() const;
};

// Weights from the validation-loss gradient through one virtual SGD step:
// w~_i = max(alpha * g_i . g_val, 0), normalized to sum one unless all zero.
// train_grads holds one per-example gradient per column.
Eigen::VectorXd meta_weights(const Eigen::MatrixXd& train_grads,
                             const Eigen::VectorXd& val_grad, double alpha);

// Applies truncation at zero and the zero-guarded normalization to -grad_eps.
Eigen::VectorXd truncate_normalize(const Eigen::VectorXd& neg_eps_grad);

// Oracle for meta_weights: central differences of the post-step validation
// loss with respect to each example weight epsilon_i at zero.
Eigen::VectorXd meta_weights_fd(const ModelParams& params, const ExampleSet& train,
                                const ExampleSet& val, double alpha, double h);

// Nonnegative, and sums to one or is identically zero.
bool is_valid_weight_vector(const Eigen::VectorXd& w, double tol = 1e-9);

double weight_entropy(const Eigen::VectorXd& w);

struct TrainingLogRow {
  int step = 0;
  double train_loss = 0.0;
  double weight_entropy = 0.0;
  double zero_fraction = 0.0;
  std::optional<double> val_f1;
};

struct TrainResult {
  ModelParams params;  // best checkpoint by validation metric
  ModelParams final_params;
  double best_val_metric = -1.0;
  int best_step = -1;
  int steps_run = 0;
  bool aborted = false;
  std::string abort_reason;
  std::vector<TrainingLogRow> log;
};

using ValMetricFn = std::function<double(const ModelParams&)>;

// Called once per step with the batch gradients, the validation gradient (empty
// when reweighting is off) and the weights actually used.
using WeightObserver = std::function<void(
    int step, const Eigen::MatrixXd& train_grads, const Eigen::VectorXd& val_grad,
    const Eigen::VectorXd& weights)>;

struct TrainOptions {
  ModelShape shape;
  std::uint64_t rng_seed = 0;
  double init_scale = 0.1;
  std::optional<ModelParams> init;  // warm start
  ValMetricFn val_metric;           // checkpoint selection; may be empty
  WeightObserver observer;
};

// Online reweighted SGD. Train and validation batches are drawn with
// replacement from independent streams.
TrainResult train(const ExampleSet& train_set, const ExampleSet& val_set,
                  const ReweightConfig& config, const TrainOptions& options);

void write_training_log(std::span<const TrainingLogRow> rows,
                        const std::filesystem::path& path);

}  // namespace activeanno
