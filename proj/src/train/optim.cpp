#include "upanets/train/optim.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "upanets/errors.hpp"

namespace upanets::train {

double cosine_lr(Index step, Index total_steps, double lr0) {
  if (total_steps <= 0) throw ConfigError("cosine schedule needs total_steps > 0");
  if (step < 0 || step > total_steps) {
    throw ConfigError("schedule step " + std::to_string(step) + " outside [0, " + std::to_string(total_steps) + "]");
  }
  if (step == total_steps) return 0.0;
  return 0.5 * lr0 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps)));
}

template <typename T>
void sgd_step(std::span<T> params, std::span<const T> grads, std::span<T> velocity, double lr, double momentum,
              double weight_decay, std::string_view name) {
  if (params.size() != grads.size() || params.size() != velocity.size()) {
    throw DimensionError("sgd_step buffers disagree in length for " + std::string(name));
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw NumericError("non-finite gradient in parameter " + std::string(name) + " at index " + std::to_string(i));
    }
  }
  const T m = static_cast<T>(momentum);
  const T wd = static_cast<T>(weight_decay);
  const T rate = static_cast<T>(lr);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const T g = grads[i] + wd * params[i];
    velocity[i] = m * velocity[i] + g;
    params[i] -= rate * velocity[i];
  }
}

template void sgd_step<float>(std::span<float>, std::span<const float>, std::span<float>, double, double, double,
                              std::string_view);
template void sgd_step<double>(std::span<double>, std::span<const double>, std::span<double>, double, double, double,
                               std::string_view);

Sgd::Sgd(std::vector<nn::Parameter<float>> params, double momentum, double weight_decay)
    : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
  velocity_.reserve(params_.size());
  for (const auto& p : params_) velocity_.emplace_back(static_cast<std::size_t>(p.tensor.numel()), 0.0F);
}

void Sgd::step(double lr) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    std::span<const float> grad = p.tensor.grad();
    if (grad.empty()) {
      zeros_.assign(static_cast<std::size_t>(p.tensor.numel()), 0.0F);
      grad = zeros_;
    }
    sgd_step<float>(p.tensor.values(), grad, velocity_[i], lr, momentum_, weight_decay_, p.name);
  }
}

void Sgd::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

}  // namespace upanets::train
