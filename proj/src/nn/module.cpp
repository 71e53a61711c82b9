#include "upanets/nn/module.hpp"

#include <cmath>

namespace upanets::nn {

template <typename T>
BasicTensor<T> Module<T>::register_parameter(std::string name, BasicTensor<T> tensor) {
  tensor.set_requires_grad(true);
  params_.push_back({std::move(name), tensor});
  return tensor;
}

template <typename T>
void Module<T>::register_buffer(std::string name, const BasicTensor<T>& tensor) {
  buffers_.push_back({std::move(name), tensor});
}

template <typename T>
void Module<T>::register_module(std::string name, Module& child) {
  children_.emplace_back(std::move(name), &child);
}

template <typename T>
void Module<T>::collect(const std::string& prefix, bool params, std::vector<NamedTensor<T>>& out) const {
  for (const auto& entry : params ? params_ : buffers_) out.push_back({prefix + entry.name, entry.tensor});
  for (const auto& [name, child] : children_) child->collect(prefix + name + ".", params, out);
}

template <typename T>
std::vector<Parameter<T>> Module<T>::parameters() const {
  std::vector<Parameter<T>> out;
  collect("", true, out);
  return out;
}

template <typename T>
std::vector<NamedTensor<T>> Module<T>::buffers() const {
  std::vector<NamedTensor<T>> out;
  collect("", false, out);
  return out;
}

template <typename T>
std::vector<NamedTensor<T>> Module<T>::state() const {
  auto out = parameters();
  auto extra = buffers();
  out.insert(out.end(), extra.begin(), extra.end());
  return out;
}

template <typename T>
Index Module<T>::parameter_count() const {
  Index total = 0;
  for (const auto& p : parameters()) total += p.tensor.numel();
  return total;
}

template <typename T>
void Module<T>::set_mode(Mode mode) {
  mode_ = mode;
  for (auto& [name, child] : children_) child->set_mode(mode);
}

template <typename T>
void Module<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
  for (auto& [name, child] : children_) child->zero_grad();
}

template <typename T>
void fill_fan_in_normal(BasicTensor<T>& tensor, Index fan_in, InitRng& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (T& v : tensor.values()) v = static_cast<T>(dist(rng));
}

template <typename T>
void fill_fan_in_uniform(BasicTensor<T>& tensor, Index fan_in, InitRng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (T& v : tensor.values()) v = static_cast<T>(dist(rng));
}

template class Module<float>;
template class Module<double>;
template void fill_fan_in_normal<float>(BasicTensor<float>&, Index, InitRng&);
template void fill_fan_in_normal<double>(BasicTensor<double>&, Index, InitRng&);
template void fill_fan_in_uniform<float>(BasicTensor<float>&, Index, InitRng&);
template void fill_fan_in_uniform<double>(BasicTensor<double>&, Index, InitRng&);

}  // namespace upanets::nn
