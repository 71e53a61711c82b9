#include "upanets/shape.hpp"

#include "upanets/errors.hpp"

namespace upanets {

Shape::Shape(std::initializer_list<Index> dims) : Shape(std::vector<Index>(dims)) {}

Shape::Shape(std::vector<Index> dims) : dims_(std::move(dims)) {
  for (Index d : dims_) {
    if (d <= 0) throw DimensionError("shape extents must be positive, got " + str());
  }
}

Index Shape::numel() const {
  Index n = 1;
  for (Index d : dims_) n *= d;
  return n;
}

Index Shape::trailing(std::size_t axis) const {
  Index n = 1;
  for (std::size_t i = axis; i < dims_.size(); ++i) n *= dims_[i];
  return n;
}

std::string Shape::str() const {
  std::string s = "[";
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(dims_[i]);
  }
  return s + "]";
}

}  // namespace upanets
