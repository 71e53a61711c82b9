#include "upanets/tensor.hpp"

#include <algorithm>
#include <unordered_set>

#include "upanets/errors.hpp"

namespace upanets {

namespace autograd {

namespace {
thread_local bool t_grad_enabled = true;
#ifdef NDEBUG
bool g_debug_checks = false;
#else
bool g_debug_checks = true;
#endif
}  // namespace

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool debug_checks() { return g_debug_checks; }
void set_debug_checks(bool enabled) { g_debug_checks = enabled; }

}  // namespace autograd

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill)
    : shape_(std::move(shape)),
      data_(std::make_shared<std::vector<T>>(static_cast<std::size_t>(shape_.numel()), fill)) {}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> values)
    : shape_(std::move(shape)), data_(std::make_shared<std::vector<T>>(std::move(values))) {
  if (static_cast<Index>(data_->size()) != shape_.numel()) {
    throw DimensionError("tensor of shape " + shape_.str() + " needs " + std::to_string(shape_.numel()) +
                         " values, got " + std::to_string(data_->size()));
  }
}

template <typename T>
T BasicTensor<T>::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_.str());
  return (*data_)[0];
}

template <typename T>
BasicTensor<T>& BasicTensor<T>::set_requires_grad(bool enabled) {
  if (!enabled) {
    node_.reset();
    return *this;
  }
  if (!node_) {
    node_ = std::make_shared<autograd::Node<T>>();
    node_->op = "leaf";
    node_->leaf = true;
    node_->size = static_cast<std::size_t>(numel());
  }
  return *this;
}

template <typename T>
std::span<const T> BasicTensor<T>::grad() const {
  if (!node_) return {};
  return node_->grad;
}

template <typename T>
std::span<T> BasicTensor<T>::mutable_grad() {
  if (!node_) throw StateError("tensor does not participate in differentiation");
  node_->grad_buffer();
  return node_->grad;
}

template <typename T>
void BasicTensor<T>::zero_grad() {
  if (node_) node_->grad.clear();
}

template <typename T>
void BasicTensor<T>::backward() const {
  if (numel() != 1) throw DimensionError("backward() needs a single-element tensor, got " + shape_.str());
  if (!node_) throw StateError("backward() on a tensor that does not require gradients");

  using NodeT = autograd::Node<T>;
  // Iterative post-order DFS gives a topological order. The order owns its
  // nodes because clearing a node's inputs may drop the last other reference.
  std::vector<std::shared_ptr<NodeT>> order;
  std::unordered_set<NodeT*> visited;
  std::vector<std::pair<std::shared_ptr<NodeT>, std::size_t>> stack{{node_, 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& top = stack.back();
    if (top.second < top.first->inputs.size()) {
      std::shared_ptr<NodeT> child = top.first->inputs[top.second++];
      if (child && visited.insert(child.get()).second) stack.emplace_back(std::move(child), 0);
    } else {
      order.push_back(std::move(top.first));
      stack.pop_back();
    }
  }

  node_->grad_buffer()[0] += T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT* node = it->get();
    if (node->leaf) continue;
    if (!node->grad.empty() && node->backward) node->backward(node->grad);
    node->grad.clear();
    node->grad.shrink_to_fit();
    node->backward = nullptr;
    node->inputs.clear();
  }
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const {
  return from_parts(shape_, data_, nullptr);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::clone() const {
  return from_parts(shape_, std::make_shared<std::vector<T>>(*data_), nullptr);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::from_parts(Shape shape, std::shared_ptr<std::vector<T>> data, NodePtr node) {
  BasicTensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(data);
  t.node_ = std::move(node);
  return t;
}

template class BasicTensor<float>;
template class BasicTensor<double>;

}  // namespace upanets
