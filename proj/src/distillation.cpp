#include "cankd/distillation.hpp"

#include <cmath>
#include <memory>

#include "cankd/errors.hpp"
#include "cankd/ops.hpp"

namespace cankd {

DiffTensor instance_norm(DiffTensor f, const InstanceNormConfig& cfg) {
  if (f.shape().rank() != 3) {
    throw ShapeMismatch("instance_norm expects [C x H x W], got " + f.shape().str());
  }
  if (cfg.epsilon <= 0.0) throw ConfigInvalid("instance_norm epsilon must be positive");
  const std::int64_t c = f.shape()[0];
  const std::int64_t n = f.shape()[1] * f.shape()[2];
  const auto& xv = f.values();

  auto out = std::make_shared<std::vector<double>>(xv.size());
  auto inv_sigma = std::make_shared<std::vector<double>>(static_cast<std::size_t>(c));
  for (std::int64_t ch = 0; ch < c; ++ch) {
    const std::size_t base = static_cast<std::size_t>(ch * n);
    double mean = 0.0;
    for (std::int64_t p = 0; p < n; ++p) mean += xv[base + p];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::int64_t p = 0; p < n; ++p) {
      const double d = xv[base + p] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + cfg.epsilon);
    (*inv_sigma)[static_cast<std::size_t>(ch)] = is;
    for (std::int64_t p = 0; p < n; ++p) (*out)[base + p] = (xv[base + p] - mean) * is;
  }

  const int xi = f.id;
  // Per channel with y = normalized output and s = 1/sigma:
  // dx = s * (dy - mean(dy) - y * mean(dy * y)).
  return f.tape->make_node(
      "instance_norm", f.shape(), *out, {f},
      [xi, out, inv_sigma, c, n](Tape& t, const std::vector<double>& dz, Adjoints& adj) {
        auto* dx = t.adj_of(adj, xi);
        if (!dx) return;
        for (std::int64_t ch = 0; ch < c; ++ch) {
          const std::size_t base = static_cast<std::size_t>(ch * n);
          const double is = (*inv_sigma)[static_cast<std::size_t>(ch)];
          double mean_dy = 0.0, mean_dyy = 0.0;
          for (std::int64_t p = 0; p < n; ++p) {
            mean_dy += dz[base + p];
            mean_dyy += dz[base + p] * (*out)[base + p];
          }
          mean_dy /= static_cast<double>(n);
          mean_dyy /= static_cast<double>(n);
          for (std::int64_t p = 0; p < n; ++p) {
            (*dx)[base + p] += is * (dz[base + p] - mean_dy - (*out)[base + p] * mean_dyy);
          }
        }
      });
}

DiffTensor feature_loss(DiffTensor f_t, DiffTensor f_s_star, const InstanceNormConfig& cfg) {
  if (!(f_t.shape() == f_s_star.shape())) {
    throw ShapeMismatch("feature_loss shapes differ: " + f_t.shape().str() + " vs " +
                        f_s_star.shape().str());
  }
  DiffTensor omega_t = instance_norm(ops::detach(f_t), cfg);
  DiffTensor omega_s = instance_norm(f_s_star, cfg);
  DiffTensor diff = ops::sub(omega_t, omega_s);
  return ops::reduce_mean(ops::mul(diff, diff));
}

std::pair<DiffTensor, LossBreakdown> total_loss(
    DiffTensor task, const std::vector<std::pair<DiffTensor, DiffTensor>>& feats,
    const DistillConfig& cfg) {
  if (cfg.mu < 0.0) throw ConfigInvalid("mu must be non-negative");
  LossBreakdown breakdown;
  breakdown.task_loss = task.values()[0];

  if (cfg.mu == 0.0 || feats.empty()) {
    breakdown.total = breakdown.task_loss;
    return {task, breakdown};
  }

  DiffTensor feat_sum;
  for (const auto& [f_t, f_s_star] : feats) {
    DiffTensor l = feature_loss(f_t, f_s_star, cfg.norm);
    breakdown.feat_loss_per_level.push_back(l.values()[0]);
    feat_sum = feat_sum.tape == nullptr ? l : ops::add(feat_sum, l);
  }
  for (double l : breakdown.feat_loss_per_level) breakdown.feat_loss_total += l;

  DiffTensor total = ops::add(task, ops::scale(feat_sum, cfg.mu));
  breakdown.total = total.values()[0];
  return {total, breakdown};
}

}  // namespace cankd
