#include "activeanno/meta_check.hpp"

#include <chrono>
#include <cmath>
#include <random>

#include "activeanno/error.hpp"
#include "activeanno/model.hpp"
#include "activeanno/random.hpp"
#include "activeanno/reweight.hpp"

namespace activeanno {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

json to_list(const Eigen::MatrixXd& m) {
  return std::vector<double>(m.data(), m.data() + m.size());
}

// Examples own one or two items so the per-example mean is exercised.
ExampleSet random_set(int examples, int dim, int classes, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> label(0, classes - 1);
  std::uniform_int_distribution<int> items(1, 2);
  ExampleSet set;
  for (int e = 0; e < examples; ++e) {
    const int k = items(rng);
    Eigen::MatrixXd x(dim, k);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
    std::vector<int> y(k);
    for (auto& v : y) v = label(rng);
    set.add(x, y);
  }
  return set;
}

json set_to_json(const ExampleSet& set) {
  return {{"rows", set.features.rows()},
          {"features", to_list(set.features)},
          {"labels", set.labels},
          {"offsets", set.offsets}};
}

ModelShape instance_shape(const MetaCheckOptions& o, int index) {
  return {o.dim, index % 2 == 1 ? o.hidden_dim : 0, o.num_classes};
}

}  // namespace

double gradient_check_error(double analytic, double numeric) {
  const double scale = std::max({1.0, std::abs(analytic), std::abs(numeric)});
  return std::abs(analytic - numeric) / scale;
}

json MetaCheckReport::to_json() const {
  return {{"instances", instances},
          {"weight_failures", weight_failures},
          {"grad_failures", grad_failures},
          {"worst_weight_error", worst_weight_error},
          {"worst_grad_error", worst_grad_error},
          {"seconds_weights", seconds_weights},
          {"seconds_grads", seconds_grads},
          {"worst_weight_instance", worst_weight_instance},
          {"worst_grad_instance", worst_grad_instance}};
}

MetaCheckReport run_meta_check(const MetaCheckOptions& o) {
  if (o.instances < 1) throw ValidationError("instances must be >= 1");
  if (!(o.alpha > 0.0)) throw ValidationError("alpha must be > 0");
  if (!(o.h > 0.0)) throw ValidationError("h must be > 0");
  MetaCheckReport report;
  report.instances = o.instances;
  report.worst_weight_error = -1.0;
  report.worst_grad_error = -1.0;

  auto started = Clock::now();
  for (int k = 0; k < o.instances; ++k) {
    Rng rng = make_rng(o.rng_seed, 0x100000 + k);
    const ModelShape shape = instance_shape(o, k);
    const ModelParams params = ModelParams::random(shape, rng(), 0.5);
    const ExampleSet train = random_set(o.train_batch, o.dim, o.num_classes, rng);
    const ExampleSet val = random_set(o.val_batch, o.dim, o.num_classes, rng);

    const Eigen::MatrixXd g_train = example_loss_and_grads(params, train).per_example_grads;
    const Eigen::VectorXd g_val =
        example_loss_and_grads(params, val).per_example_grads.rowwise().mean();
    Eigen::VectorXd closed;
    if (o.inject_sign_bug)
      closed = truncate_normalize(-o.alpha * (g_train.transpose() * g_val));
    else
      closed = meta_weights(g_train, g_val, o.alpha);
    const Eigen::VectorXd fd = meta_weights_fd(params, train, val, o.alpha, o.h);

    const double err = (closed - fd).cwiseAbs().maxCoeff();
    if (!(err <= o.weight_atol)) ++report.weight_failures;
    if (!(err <= report.worst_weight_error) || std::isnan(err)) {
      report.worst_weight_error = err;
      report.worst_weight_instance = {
          {"index", k},
          {"hidden_dim", shape.hidden_dim},
          {"alpha", o.alpha},
          {"h", o.h},
          {"params", to_list(params.flatten())},
          {"train", set_to_json(train)},
          {"val", set_to_json(val)},
          {"closed_form", to_list(closed)},
          {"finite_difference", to_list(fd)},
      };
    }
  }
  report.seconds_weights = seconds_since(started);

  started = Clock::now();
  for (int k = 0; k < o.instances; ++k) {
    Rng rng = make_rng(o.rng_seed, 0x200000 + k);
    const ModelShape shape = instance_shape(o, k);
    const ModelParams params = ModelParams::random(shape, rng(), 0.5);
    const ExampleSet one = random_set(1, o.dim, o.num_classes, rng);
    const Eigen::VectorXd analytic = example_loss_and_grads(params, one).per_example_grads.col(0);

    Eigen::VectorXd theta = params.flatten();
    double worst = 0.0;
    int worst_index = 0;
    double worst_numeric = 0.0;
    for (Eigen::Index p = 0; p < theta.size(); ++p) {
      const double saved = theta(p);
      theta(p) = saved + o.h;
      const double up = mean_example_loss(ModelParams::unflatten(shape, theta), one);
      theta(p) = saved - o.h;
      const double down = mean_example_loss(ModelParams::unflatten(shape, theta), one);
      theta(p) = saved;
      const double numeric = (up - down) / (2.0 * o.h);
      const double e = gradient_check_error(analytic(p), numeric);
      if (!(e <= worst)) {
        worst = e;
        worst_index = static_cast<int>(p);
        worst_numeric = numeric;
      }
    }
    if (!(worst <= o.grad_rtol)) ++report.grad_failures;
    if (!(worst <= report.worst_grad_error)) {
      report.worst_grad_error = worst;
      report.worst_grad_instance = {
          {"index", k},
          {"hidden_dim", shape.hidden_dim},
          {"h", o.h},
          {"params", to_list(theta)},
          {"example", set_to_json(one)},
          {"parameter", worst_index},
          {"analytic", analytic(worst_index)},
          {"numeric", worst_numeric},
      };
    }
  }
  report.seconds_grads = seconds_since(started);
  return report;
}

}  // namespace activeanno
