#pragma once

#include <span>

#include "upanets/shape.hpp"

namespace upanets::train {

/// Fraction of rows whose argmax equals the label; ties go to the lowest class index.
double top1_accuracy(std::span<const float> logits, Index classes, std::span<const int> labels);

/// Accuracy per million parameters.
struct EfficiencyReport {
  double accuracy_percent = 0.0;
  double params_millions = 0.0;
  double efficiency = 0.0;
};

/// Throws InputError unless params_millions > 0.
EfficiencyReport efficiency(double accuracy_percent, double params_millions);

}  // namespace upanets::train
