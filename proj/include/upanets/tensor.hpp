#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "upanets/shape.hpp"

namespace upanets {

namespace autograd {

/// Whether operators record a tape on this thread.
bool grad_enabled();

/// Disables tape recording for the lifetime of the guard (evaluation, sampling).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Scan every operator output for NaN/inf. Defaults to on in builds without NDEBUG.
bool debug_checks();
void set_debug_checks(bool enabled);

/// One vertex of the reverse-mode tape. Inputs that do not participate in
/// differentiation are stored as null.
template <typename T>
struct Node {
  std::string op;
  bool leaf = false;
  std::size_t size = 0;
  std::vector<T> grad;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(std::span<const T>)> backward;

  /// Zero-initialized gradient buffer, allocated on first use.
  T* grad_buffer() {
    if (grad.empty()) grad.assign(size, T{0});
    return grad.data();
  }
};

}  // namespace autograd

/// Dense row-major array with optional participation in the gradient tape.
/// Copies alias the same storage; use clone() for an independent copy.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<autograd::Node<T>>;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T{0});
  BasicTensor(Shape shape, std::vector<T> values);

  [[nodiscard]] bool defined() const { return data_ != nullptr; }
  [[nodiscard]] const Shape& shape() const { return shape_; }
  [[nodiscard]] Index numel() const { return shape_.numel(); }
  [[nodiscard]] Index dim(std::size_t axis) const { return shape_[axis]; }
  [[nodiscard]] std::size_t rank() const { return shape_.rank(); }

  [[nodiscard]] std::span<T> values() { return *data_; }
  [[nodiscard]] std::span<const T> values() const { return *data_; }
  [[nodiscard]] T* data() { return data_->data(); }
  [[nodiscard]] const T* data() const { return data_->data(); }
  [[nodiscard]] T item() const;
  [[nodiscard]] const std::shared_ptr<std::vector<T>>& storage() const { return data_; }

  /// Turns this tensor into a tape leaf (parameters, grad-check inputs).
  BasicTensor& set_requires_grad(bool enabled);
  [[nodiscard]] bool requires_grad() const { return node_ != nullptr; }
  [[nodiscard]] bool has_grad() const { return node_ && !node_->grad.empty(); }
  /// Accumulated gradient; empty when nothing has flowed back yet.
  [[nodiscard]] std::span<const T> grad() const;
  [[nodiscard]] std::span<T> mutable_grad();
  void zero_grad();

  /// Reverse sweep from a single-element tensor. Intermediate nodes are
  /// released afterwards; leaves keep their accumulated gradients.
  void backward() const;

  /// Same storage, detached from the tape.
  [[nodiscard]] BasicTensor detach() const;
  /// Independent deep copy, detached from the tape.
  [[nodiscard]] BasicTensor clone() const;

  [[nodiscard]] const NodePtr& node() const { return node_; }

  /// Used by operators to build a tape-connected result.
  static BasicTensor from_parts(Shape shape, std::shared_ptr<std::vector<T>> data, NodePtr node);

 private:
  Shape shape_;
  std::shared_ptr<std::vector<T>> data_;
  NodePtr node_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;

}  // namespace upanets
