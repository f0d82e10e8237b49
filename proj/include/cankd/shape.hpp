#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace cankd {

// Dense tensor extents, ranks 1 through 4. Rank-3 layout is
// channels x height x width; rank-4 adds a leading batch extent.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::int64_t> dims);
  explicit Shape(std::vector<std::int64_t> dims);

  int rank() const { return static_cast<int>(dims_.size()); }
  std::int64_t extent(int axis) const;
  std::int64_t operator[](int axis) const { return extent(axis); }
  std::int64_t numel() const;

  const std::vector<std::int64_t>& dims() const { return dims_; }
  bool operator==(const Shape& other) const = default;

  std::string str() const;

 private:
  void validate() const;

  std::vector<std::int64_t> dims_;
};

}  // namespace cankd
