#pragma once

#include <cstdint>

#include "cankd/tensor.hpp"
#include "cankd/toy_models.hpp"

namespace cankd {

// One procedurally rendered pixel-labeling example.
struct SyntheticSample {
  Tensor image;  // [3 x H x W], values in [0,1]
  LabelMap label_map;
  std::uint64_t seed = 0;
};

// Renders 1..4 rectangles/discs of distinct foreground classes on a class-0
// background, plus additive noise (sigma 0.05, clamped to [0,1]). The same
// seed always produces the same sample. min_shapes/max_shapes exist so tests
// can force edge cases such as an empty scene.
SyntheticSample generate_sample(std::uint64_t seed, int h, int w, int num_classes,
                                int min_shapes = 1, int max_shapes = 4);

}  // namespace cankd
