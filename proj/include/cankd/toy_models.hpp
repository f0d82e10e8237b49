#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cankd/rng.hpp"
#include "cankd/tape.hpp"
#include "cankd/tensor.hpp"

namespace cankd {

// Dense per-pixel class ids, row-major.
struct LabelMap {
  std::int64_t h = 0;
  std::int64_t w = 0;
  std::vector<int> ids;

  int at(std::int64_t y, std::int64_t x) const {
    return ids[static_cast<std::size_t>(y * w + x)];
  }
};

// Mean per-pixel cross-entropy of logits [K x H x W] against a label map,
// computed through a stable log-softmax.
DiffTensor cross_entropy(DiffTensor logits, const LabelMap& labels);

// Small dense-prediction convnet: a stack of 3x3 conv stages with relu,
// one stride-2 downsampling after the first stage, a 1x1 classification
// head, and nearest-neighbor upsampling back to input resolution.
struct ToyNetSpec {
  std::vector<int> widths = {8, 16, 16};
  int num_classes = 4;
  std::vector<int> tap_levels = {1, 2};  // stage indices whose output is exposed
  int in_channels = 3;
};

struct ToyNet {
  ToyNetSpec spec;
  std::vector<Tensor> conv_w;  // per stage [w_i x w_{i-1} x 3 x 3]
  std::vector<Tensor> conv_b;  // per stage [w_i]
  Tensor head_w;               // [num_classes x w_last]
  Tensor head_b;               // [num_classes]
};

ToyNet init_toy_net(const ToyNetSpec& spec, Rng& rng);

ParamRefs param_refs(ToyNet& net, const std::string& prefix);

struct ToyNetVars {
  std::vector<DiffTensor> conv_w;
  std::vector<DiffTensor> conv_b;
  DiffTensor head_w;
  DiffTensor head_b;
};

ToyNetVars stage(Tape& tape, const ToyNet& net, bool trainable = true);

struct ForwardResult {
  DiffTensor logits;              // [num_classes x H x W]
  std::vector<DiffTensor> taps;   // stage outputs at spec.tap_levels
};

ForwardResult forward(const ToyNetVars& vars, const ToyNetSpec& spec, DiffTensor image);

// Scalar loss for one image.
DiffTensor task_loss(DiffTensor logits, const LabelMap& labels);

struct PixelMetrics {
  double pixel_accuracy = 0.0;
  double mean_iou = 0.0;
};

// Argmax prediction quality; mean IoU averages over classes with a
// non-empty union.
PixelMetrics eval_metrics(const Tensor& logits, const LabelMap& labels, int num_classes);

}  // namespace cankd
