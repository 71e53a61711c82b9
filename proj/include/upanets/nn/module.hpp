#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "upanets/ops.hpp"
#include "upanets/tensor.hpp"

namespace upanets::nn {

/// A tensor with its dotted path inside a model, e.g. "layer2.block0.cpa.weight".
template <typename T>
struct NamedTensor {
  std::string name;
  BasicTensor<T> tensor;
};

template <typename T>
using Parameter = NamedTensor<T>;

/// Registry of parameters, buffers and child modules. Modules hold their
/// children by value and are neither copyable nor movable.
template <typename T>
class Module {
 public:
  Module() = default;
  virtual ~Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;

  [[nodiscard]] std::vector<Parameter<T>> parameters() const;
  [[nodiscard]] std::vector<NamedTensor<T>> buffers() const;
  /// Parameters followed by buffers: everything a checkpoint must carry.
  [[nodiscard]] std::vector<NamedTensor<T>> state() const;
  [[nodiscard]] Index parameter_count() const;

  void set_mode(Mode mode);
  [[nodiscard]] Mode mode() const { return mode_; }
  void zero_grad();

 protected:
  BasicTensor<T> register_parameter(std::string name, BasicTensor<T> tensor);
  void register_buffer(std::string name, const BasicTensor<T>& tensor);
  void register_module(std::string name, Module& child);

 private:
  void collect(const std::string& prefix, bool params, std::vector<NamedTensor<T>>& out) const;

  std::vector<NamedTensor<T>> params_;
  std::vector<NamedTensor<T>> buffers_;
  std::vector<std::pair<std::string, Module*>> children_;
  Mode mode_ = Mode::Train;
};

/// Deterministic source for weight initialization.
using InitRng = std::mt19937_64;

/// Normal(0, sqrt(2 / fan_in)) fill.
template <typename T>
void fill_fan_in_normal(BasicTensor<T>& tensor, Index fan_in, InitRng& rng);

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) fill.
template <typename T>
void fill_fan_in_uniform(BasicTensor<T>& tensor, Index fan_in, InitRng& rng);

extern template class Module<float>;
extern template class Module<double>;

}  // namespace upanets::nn
