#pragma once

#include <utility>
#include <vector>

#include "cankd/can_block.hpp"
#include "cankd/tape.hpp"

namespace cankd {

struct InstanceNormConfig {
  double epsilon = 1e-5;
};

// Per-channel standardization over spatial positions: zero mean, unit
// variance (population), no learned affine. Differentiable.
DiffTensor instance_norm(DiffTensor f, const InstanceNormConfig& cfg = {});

// Mean over elements of the squared difference between the independently
// normalized maps. The teacher branch is detached: gradient flows only
// through f_s_star.
DiffTensor feature_loss(DiffTensor f_t, DiffTensor f_s_star, const InstanceNormConfig& cfg = {});

struct DistillConfig {
  double mu = 5.0;
  std::vector<int> distill_levels;
  AffinityKind affinity = AffinityKind::DotProduct;
  int pool_scale = 1;
  bool residual = true;
  int embed_dim = 0;  // 0 = match channel count
  InstanceNormConfig norm;
};

struct LossBreakdown {
  double task_loss = 0.0;
  std::vector<double> feat_loss_per_level;
  double feat_loss_total = 0.0;
  double total = 0.0;
};

// total = task + mu * sum of per-level feature losses. With mu = 0 the
// returned node is the task loss itself, so a disabled run records an
// identical graph.
std::pair<DiffTensor, LossBreakdown> total_loss(
    DiffTensor task, const std::vector<std::pair<DiffTensor, DiffTensor>>& feats,
    const DistillConfig& cfg);

}  // namespace cankd
