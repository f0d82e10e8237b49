#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cankd/rng.hpp"
#include "cankd/shape.hpp"

namespace cankd {

// Plain value tensor: a shape plus row-major 64-bit floats. Parameters,
// datasets and checkpoints use this type; autodiff wraps it in tape nodes.
struct Tensor {
  Shape shape;
  std::vector<double> values;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0);
  Tensor(Shape s, std::vector<double> v);

  std::int64_t numel() const { return shape.numel(); }

  double& operator[](std::int64_t i) { return values[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return values[static_cast<std::size_t>(i)]; }

  // Rank-3 accessor, channels x height x width.
  double& at(std::int64_t c, std::int64_t y, std::int64_t x);
  double at(std::int64_t c, std::int64_t y, std::int64_t x) const;
};

Tensor random_uniform(const Shape& shape, double lo, double hi, Rng& rng);
Tensor random_normal(const Shape& shape, double mean, double stddev, Rng& rng);

// Reference to a named trainable tensor owned elsewhere. The optimizer,
// the staging helpers and the checkpoint writer all consume the same flat
// ordered list.
struct ParamRef {
  std::string name;
  Tensor* tensor;
};

using ParamRefs = std::vector<ParamRef>;

void append_refs(ParamRefs& out, const ParamRefs& more);

}  // namespace cankd
