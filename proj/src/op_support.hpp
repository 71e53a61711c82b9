#pragma once

#include <cmath>
#include <initializer_list>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "upanets/errors.hpp"
#include "upanets/tensor.hpp"

namespace upanets::detail {

template <typename T>
using NodeList = std::vector<std::shared_ptr<autograd::Node<T>>>;

/// Gradient buffer of input `i`, or null when that input is not differentiated.
template <typename T>
T* grad_of(const NodeList<T>& inputs, std::size_t i) {
  return inputs[i] ? inputs[i]->grad_buffer() : nullptr;
}

template <typename T>
void check_finite(const char* op, const std::vector<T>& values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericError(std::string("non-finite value at flat index ") + std::to_string(i) + " produced by " + op);
    }
  }
}

/// Wraps operator output into a tensor, attaching a tape node when any input
/// participates in differentiation. `backward(grad_out, input_nodes)` must
/// accumulate into the gradient buffers of non-null inputs.
template <typename T, typename Backward>
BasicTensor<T> make_result(const char* op, Shape shape, std::vector<T> values,
                           const std::vector<const BasicTensor<T>*>& inputs, Backward&& backward) {
  if (autograd::debug_checks()) check_finite(op, values);
  auto storage = std::make_shared<std::vector<T>>(std::move(values));
  std::shared_ptr<autograd::Node<T>> node;
  if (autograd::grad_enabled()) {
    bool any = false;
    for (const auto* in : inputs) any = any || (in && in->requires_grad());
    if (any) {
      node = std::make_shared<autograd::Node<T>>();
      node->op = op;
      node->size = storage->size();
      node->inputs.reserve(inputs.size());
      for (const auto* in : inputs) node->inputs.push_back(in ? in->node() : nullptr);
      node->backward = [fn = std::forward<Backward>(backward), ins = node->inputs](std::span<const T> g) {
        fn(g, ins);
      };
    }
  }
  return BasicTensor<T>::from_parts(std::move(shape), std::move(storage), std::move(node));
}

inline void require(bool ok, const std::string& message) {
  if (!ok) throw DimensionError(message);
}

}  // namespace upanets::detail
