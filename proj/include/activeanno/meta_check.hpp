#pragma once

#include <cstdint>

#include <json.hpp>

namespace activeanno {

struct MetaCheckOptions {
  int instances = 100;
  int dim = 10;
  int num_classes = 3;
  int hidden_dim = 6;  // used on every other instance
  int train_batch = 8;
  int val_batch = 4;
  double alpha = 0.1;
  double h = 1e-5;
  double weight_atol = 1e-4;
  double grad_rtol = 1e-4;
  std::uint64_t rng_seed = 0;
  // Test fixture: flips the sign inside the truncation to prove the suite
  // catches it.
  bool inject_sign_bug = false;
};

struct MetaCheckReport {
  int instances = 0;
  int weight_failures = 0;
  int grad_failures = 0;
  double worst_weight_error = 0.0;
  double worst_grad_error = 0.0;  // relative, as compared against grad_rtol
  double seconds_weights = 0.0;
  double seconds_grads = 0.0;
  // Replay data for the worst instance of each suite.
  nlohmann::json worst_weight_instance;
  nlohmann::json worst_grad_instance;

  bool ok() const { return weight_failures == 0 && grad_failures == 0; }
  nlohmann::json to_json() const;
};

// Closed-form vs finite-difference example weights, and analytic vs
// finite-difference parameter gradients, on random small models alternating
// between linear and one-hidden-layer shapes.
MetaCheckReport run_meta_check(const MetaCheckOptions& options);

// |a - n| / max(1, |a|, |n|), the error compared against grad_rtol.
double gradient_check_error(double analytic, double numeric);

}  // namespace activeanno
