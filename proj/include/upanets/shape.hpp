#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace upanets {

using Index = std::int64_t;

/// Ordered list of positive extents; images use N x C x H x W.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<Index> dims);
  explicit Shape(std::vector<Index> dims);

  [[nodiscard]] std::size_t rank() const { return dims_.size(); }
  [[nodiscard]] Index numel() const;
  [[nodiscard]] Index operator[](std::size_t axis) const { return dims_[axis]; }
  [[nodiscard]] Index back() const { return dims_.back(); }
  [[nodiscard]] std::span<const Index> dims() const { return dims_; }
  [[nodiscard]] std::string str() const;

  /// Product of extents from `axis` to the end.
  [[nodiscard]] Index trailing(std::size_t axis) const;

  bool operator==(const Shape&) const = default;

 private:
  std::vector<Index> dims_;
};

}  // namespace upanets
