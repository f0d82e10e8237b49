#include "cankd/optim.hpp"

#include <algorithm>

#include "cankd/errors.hpp"

namespace cankd {

SgdOptimizer::SgdOptimizer(OptimizerConfig cfg) : cfg_(cfg), lr_(cfg.learning_rate) {
  if (cfg_.learning_rate <= 0.0) throw ConfigInvalid("learning_rate must be positive");
  if (cfg_.momentum < 0.0 || cfg_.momentum >= 1.0) throw ConfigInvalid("momentum must be in [0,1)");
  if (cfg_.decay_factor <= 0.0 || cfg_.decay_factor > 1.0) {
    throw ConfigInvalid("decay_factor must be in (0,1]");
  }
}

void SgdOptimizer::step(const ParamRefs& params, const std::vector<Tensor>& grads) {
  if (params.size() != grads.size()) {
    throw ShapeMismatch("optimizer got " + std::to_string(params.size()) + " params but " +
                        std::to_string(grads.size()) + " grads");
  }
  if (velocity_.size() < params.size()) velocity_.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::vector<double>& p = params[i].tensor->values;
    const std::vector<double>& g = grads[i].values;
    if (p.size() != g.size()) {
      throw ShapeMismatch("gradient size mismatch for parameter " + params[i].name);
    }
    std::vector<double>& v = velocity_[i];
    if (v.size() != p.size()) v.assign(p.size(), 0.0);
    for (std::size_t k = 0; k < p.size(); ++k) {
      v[k] = cfg_.momentum * v[k] + g[k] + cfg_.weight_decay * p[k];
      p[k] -= lr_ * v[k];
    }
  }
}

void SgdOptimizer::on_epoch_end(int epoch) {
  if (std::find(cfg_.step_epochs.begin(), cfg_.step_epochs.end(), epoch) !=
      cfg_.step_epochs.end()) {
    lr_ *= cfg_.decay_factor;
  }
}

}  // namespace cankd
