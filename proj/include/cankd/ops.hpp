#pragma once

#include "cankd/tape.hpp"

namespace cankd {
namespace ops {

// Elementwise; shapes must match exactly (no broadcasting).
DiffTensor add(DiffTensor a, DiffTensor b);
DiffTensor sub(DiffTensor a, DiffTensor b);
DiffTensor mul(DiffTensor a, DiffTensor b);

// Scalar constant times tensor.
DiffTensor scale(DiffTensor x, double k);

DiffTensor exp(DiffTensor x);
DiffTensor relu(DiffTensor x);

// Full reductions to a scalar of shape [1].
DiffTensor reduce_sum(DiffTensor x);
DiffTensor reduce_mean(DiffTensor x);

// Element order is preserved bit-for-bit.
DiffTensor reshape(DiffTensor x, Shape shape);
DiffTensor transpose2d(DiffTensor x);

// [M x K] * [K x P] -> [M x P]
DiffTensor matmul(DiffTensor a, DiffTensor b);

// Per-pixel linear map: x [C_in x H x W], w [C_out x C_in] -> [C_out x H x W].
DiffTensor conv1x1(DiffTensor x, DiffTensor w);

// Non-overlapping window max, scale in {2,4,8}; ragged right/bottom windows
// permitted (ceil division). Gradient routes to the first argmax in
// row-major window order.
DiffTensor maxpool2d(DiffTensor x, int scale);

// Row-wise softmax of an [M x P] matrix, max-subtracted for stability.
DiffTensor softmax_rows(DiffTensor x);

// 3x3 convolution with zero padding 1 and stride 1:
// x [C_in x H x W], w [C_out x C_in x 3 x 3] -> [C_out x H x W].
DiffTensor conv3x3(DiffTensor x, DiffTensor w);

// x [C x H x W] plus a per-channel offset b [C].
DiffTensor add_channel_bias(DiffTensor x, DiffTensor b);

// Nearest-neighbor resize to out_h x out_w (source index floor(y*h/out_h)).
DiffTensor upsample_nearest(DiffTensor x, std::int64_t out_h, std::int64_t out_w);

// Constant copy: cuts the value out of the gradient graph.
DiffTensor detach(DiffTensor x);

}  // namespace ops
}  // namespace cankd
