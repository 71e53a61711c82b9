#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "upanets/nn/module.hpp"

namespace upanets::train {

/// Half-cycle cosine annealing: 0.5 * lr0 * (1 + cos(pi * step / total_steps)).
/// Throws ConfigError when total_steps is 0 or step lies outside [0, total_steps].
double cosine_lr(Index step, Index total_steps, double lr0);

/// One momentum SGD update with L2 weight decay, in place:
///   g' = g + weight_decay * theta;  v = momentum * v + g';  theta -= lr * v.
/// Throws NumericError naming `name` when a gradient value is not finite.
template <typename T>
void sgd_step(std::span<T> params, std::span<const T> grads, std::span<T> velocity, double lr, double momentum,
              double weight_decay, std::string_view name);

/// Momentum SGD over a fixed parameter list. Parameters without a gradient
/// this step are updated as if the gradient were zero.
class Sgd {
 public:
  Sgd(std::vector<nn::Parameter<float>> params, double momentum, double weight_decay);

  void step(double lr);
  void zero_grad();

  [[nodiscard]] const std::vector<std::vector<float>>& velocity() const { return velocity_; }

 private:
  std::vector<nn::Parameter<float>> params_;
  std::vector<std::vector<float>> velocity_;
  std::vector<float> zeros_;
  double momentum_;
  double weight_decay_;
};

}  // namespace upanets::train
