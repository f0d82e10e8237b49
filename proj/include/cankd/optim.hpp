#pragma once

#include <vector>

#include "cankd/tensor.hpp"

namespace cankd {

struct OptimizerConfig {
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::vector<int> step_epochs = {16, 22};
  double decay_factor = 0.1;
};

// SGD with momentum, weight decay and a multi-step learning-rate schedule.
// Update per parameter entry:
//   v <- momentum * v + grad + weight_decay * param
//   param <- param - lr * v
class SgdOptimizer {
 public:
  explicit SgdOptimizer(OptimizerConfig cfg);

  // params and grads are aligned by position; grads are same-shape value
  // tensors as produced by Tape::grad_tensor.
  void step(const ParamRefs& params, const std::vector<Tensor>& grads);

  // Call after finishing the 1-based epoch `epoch`; applies the decay when
  // the epoch is in step_epochs.
  void on_epoch_end(int epoch);

  double learning_rate() const { return lr_; }

 private:
  OptimizerConfig cfg_;
  double lr_;
  std::vector<std::vector<double>> velocity_;
};

}  // namespace cankd
