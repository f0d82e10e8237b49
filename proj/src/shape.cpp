#include "cankd/shape.hpp"

#include <limits>
#include <sstream>

#include "cankd/errors.hpp"

namespace cankd {

Shape::Shape(std::initializer_list<std::int64_t> dims) : dims_(dims) { validate(); }

Shape::Shape(std::vector<std::int64_t> dims) : dims_(std::move(dims)) { validate(); }

void Shape::validate() const {
  if (dims_.empty() || dims_.size() > 4) {
    throw ShapeMismatch("shape rank must be 1..4, got " + std::to_string(dims_.size()));
  }
  std::int64_t count = 1;
  for (std::int64_t d : dims_) {
    if (d < 1) throw ShapeMismatch("shape extent must be >= 1, got " + std::to_string(d));
    if (count > std::numeric_limits<std::int64_t>::max() / d) {
      throw ShapeMismatch("shape element count overflows index type");
    }
    count *= d;
  }
}

std::int64_t Shape::extent(int axis) const {
  if (axis < 0 || axis >= rank()) {
    throw ShapeMismatch("axis " + std::to_string(axis) + " out of range for rank " +
                        std::to_string(rank()));
  }
  return dims_[static_cast<std::size_t>(axis)];
}

std::int64_t Shape::numel() const {
  std::int64_t count = 1;
  for (std::int64_t d : dims_) count *= d;
  return count;
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (i) os << 'x';
    os << dims_[i];
  }
  os << ']';
  return os.str();
}

}  // namespace cankd
