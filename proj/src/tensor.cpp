#include "cankd/tensor.hpp"

#include "cankd/errors.hpp"

namespace cankd {

Tensor::Tensor(Shape s, double fill)
    : shape(std::move(s)), values(static_cast<std::size_t>(shape.numel()), fill) {}

Tensor::Tensor(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
  if (static_cast<std::int64_t>(values.size()) != shape.numel()) {
    throw ShapeMismatch("value count " + std::to_string(values.size()) +
                        " does not match shape " + shape.str());
  }
}

double& Tensor::at(std::int64_t c, std::int64_t y, std::int64_t x) {
  return values[static_cast<std::size_t>((c * shape[1] + y) * shape[2] + x)];
}

double Tensor::at(std::int64_t c, std::int64_t y, std::int64_t x) const {
  return values[static_cast<std::size_t>((c * shape[1] + y) * shape[2] + x)];
}

Tensor random_uniform(const Shape& shape, double lo, double hi, Rng& rng) {
  Tensor t(shape);
  for (double& v : t.values) v = rng.uniform(lo, hi);
  return t;
}

Tensor random_normal(const Shape& shape, double mean, double stddev, Rng& rng) {
  Tensor t(shape);
  for (double& v : t.values) v = mean + stddev * rng.normal();
  return t;
}

void append_refs(ParamRefs& out, const ParamRefs& more) {
  out.insert(out.end(), more.begin(), more.end());
}

}  // namespace cankd
