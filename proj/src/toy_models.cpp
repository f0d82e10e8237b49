#include "cankd/toy_models.hpp"

#include <cmath>
#include <memory>

#include "cankd/errors.hpp"
#include "cankd/ops.hpp"

namespace cankd {

DiffTensor cross_entropy(DiffTensor logits, const LabelMap& labels) {
  if (logits.shape().rank() != 3) {
    throw ShapeMismatch("cross_entropy expects [K x H x W] logits, got " + logits.shape().str());
  }
  const std::int64_t k = logits.shape()[0];
  const std::int64_t h = logits.shape()[1];
  const std::int64_t w = logits.shape()[2];
  if (h != labels.h || w != labels.w) {
    throw ShapeMismatch("cross_entropy: logits " + logits.shape().str() +
                        " vs labels " + std::to_string(labels.h) + "x" + std::to_string(labels.w));
  }
  const std::int64_t n = h * w;
  const auto& lv = logits.values();

  // Per-pixel softmax probabilities, kept for the analytic backward.
  auto probs = std::make_shared<std::vector<double>>(lv.size());
  double loss = 0.0;
  for (std::int64_t p = 0; p < n; ++p) {
    double mx = lv[static_cast<std::size_t>(p)];
    for (std::int64_t c = 1; c < k; ++c)
      mx = std::max(mx, lv[static_cast<std::size_t>(c * n + p)]);
    double denom = 0.0;
    for (std::int64_t c = 0; c < k; ++c) {
      const double e = std::exp(lv[static_cast<std::size_t>(c * n + p)] - mx);
      (*probs)[static_cast<std::size_t>(c * n + p)] = e;
      denom += e;
    }
    for (std::int64_t c = 0; c < k; ++c) (*probs)[static_cast<std::size_t>(c * n + p)] /= denom;
    const int label = labels.ids[static_cast<std::size_t>(p)];
    if (label < 0 || label >= k) {
      throw ShapeMismatch("cross_entropy: label id " + std::to_string(label) +
                          " outside [0," + std::to_string(k) + ")");
    }
    loss -= std::log((*probs)[static_cast<std::size_t>(label * n + p)]);
  }
  loss /= static_cast<double>(n);

  const int li = logits.id;
  auto ids = std::make_shared<std::vector<int>>(labels.ids);
  return logits.tape->make_node(
      "cross_entropy", Shape{1}, {loss}, {logits},
      [li, probs, ids, k, n](Tape& t, const std::vector<double>& dz, Adjoints& adj) {
        if (auto* dl = t.adj_of(adj, li)) {
          const double scale = dz[0] / static_cast<double>(n);
          for (std::int64_t p = 0; p < n; ++p) {
            const int label = (*ids)[static_cast<std::size_t>(p)];
            for (std::int64_t c = 0; c < k; ++c) {
              const std::size_t idx = static_cast<std::size_t>(c * n + p);
              const double onehot = (c == label) ? 1.0 : 0.0;
              (*dl)[idx] += scale * ((*probs)[idx] - onehot);
            }
          }
        }
      });
}

ToyNet init_toy_net(const ToyNetSpec& spec, Rng& rng) {
  if (spec.widths.empty()) throw ConfigInvalid("toy net needs at least one stage");
  if (spec.num_classes < 2) throw ConfigInvalid("toy net needs at least two classes");
  for (int tap : spec.tap_levels) {
    if (tap < 0 || tap >= static_cast<int>(spec.widths.size())) {
      throw ConfigInvalid("tap level " + std::to_string(tap) + " out of range");
    }
  }
  ToyNet net;
  net.spec = spec;
  int c_in = spec.in_channels;
  for (int width : spec.widths) {
    const double bound = std::sqrt(6.0 / (9.0 * c_in));
    net.conv_w.push_back(random_uniform(Shape{width, c_in, 3, 3}, -bound, bound, rng));
    net.conv_b.push_back(Tensor(Shape{width}, 0.0));
    c_in = width;
  }
  const double bound = std::sqrt(6.0 / c_in);
  net.head_w = random_uniform(Shape{spec.num_classes, c_in}, -bound, bound, rng);
  net.head_b = Tensor(Shape{spec.num_classes}, 0.0);
  return net;
}

ParamRefs param_refs(ToyNet& net, const std::string& prefix) {
  ParamRefs refs;
  for (std::size_t i = 0; i < net.conv_w.size(); ++i) {
    refs.push_back({prefix + ".stage" + std::to_string(i) + ".w", &net.conv_w[i]});
    refs.push_back({prefix + ".stage" + std::to_string(i) + ".b", &net.conv_b[i]});
  }
  refs.push_back({prefix + ".head.w", &net.head_w});
  refs.push_back({prefix + ".head.b", &net.head_b});
  return refs;
}

ToyNetVars stage(Tape& tape, const ToyNet& net, bool trainable) {
  ToyNetVars v;
  for (std::size_t i = 0; i < net.conv_w.size(); ++i) {
    v.conv_w.push_back(tape.leaf(net.conv_w[i], trainable));
    v.conv_b.push_back(tape.leaf(net.conv_b[i], trainable));
  }
  v.head_w = tape.leaf(net.head_w, trainable);
  v.head_b = tape.leaf(net.head_b, trainable);
  return v;
}

ForwardResult forward(const ToyNetVars& vars, const ToyNetSpec& spec, DiffTensor image) {
  if (image.shape().rank() != 3 || image.shape()[0] != spec.in_channels) {
    throw ShapeMismatch("forward expects [" + std::to_string(spec.in_channels) +
                        " x H x W] input, got " + image.shape().str());
  }
  const std::int64_t h = image.shape()[1];
  const std::int64_t w = image.shape()[2];

  ForwardResult result;
  DiffTensor x = image;
  for (std::size_t i = 0; i < vars.conv_w.size(); ++i) {
    x = ops::relu(ops::add_channel_bias(ops::conv3x3(x, vars.conv_w[i]), vars.conv_b[i]));
    if (i == 0 && vars.conv_w.size() > 1) x = ops::maxpool2d(x, 2);
    for (int tap : spec.tap_levels) {
      if (tap == static_cast<int>(i)) result.taps.push_back(x);
    }
  }
  DiffTensor logits = ops::add_channel_bias(ops::conv1x1(x, vars.head_w), vars.head_b);
  if (logits.shape()[1] != h || logits.shape()[2] != w) {
    logits = ops::upsample_nearest(logits, h, w);
  }
  result.logits = logits;
  return result;
}

DiffTensor task_loss(DiffTensor logits, const LabelMap& labels) {
  return cross_entropy(logits, labels);
}

PixelMetrics eval_metrics(const Tensor& logits, const LabelMap& labels, int num_classes) {
  const std::int64_t n = labels.h * labels.w;
  std::vector<std::int64_t> inter(static_cast<std::size_t>(num_classes), 0);
  std::vector<std::int64_t> pred_count(static_cast<std::size_t>(num_classes), 0);
  std::vector<std::int64_t> true_count(static_cast<std::size_t>(num_classes), 0);
  std::int64_t correct = 0;
  for (std::int64_t p = 0; p < n; ++p) {
    int best = 0;
    double best_v = logits.values[static_cast<std::size_t>(p)];
    for (int c = 1; c < num_classes; ++c) {
      const double v = logits.values[static_cast<std::size_t>(c * n + p)];
      if (v > best_v) {
        best_v = v;
        best = c;
      }
    }
    const int truth = labels.ids[static_cast<std::size_t>(p)];
    if (best == truth) ++correct;
    ++pred_count[static_cast<std::size_t>(best)];
    ++true_count[static_cast<std::size_t>(truth)];
    if (best == truth) ++inter[static_cast<std::size_t>(truth)];
  }
  PixelMetrics m;
  m.pixel_accuracy = static_cast<double>(correct) / static_cast<double>(n);
  double iou_sum = 0.0;
  int iou_classes = 0;
  for (int c = 0; c < num_classes; ++c) {
    const std::int64_t uni = pred_count[static_cast<std::size_t>(c)] +
                             true_count[static_cast<std::size_t>(c)] -
                             inter[static_cast<std::size_t>(c)];
    if (uni == 0) continue;
    iou_sum += static_cast<double>(inter[static_cast<std::size_t>(c)]) / static_cast<double>(uni);
    ++iou_classes;
  }
  m.mean_iou = iou_classes > 0 ? iou_sum / iou_classes : 0.0;
  return m;
}

}  // namespace cankd
