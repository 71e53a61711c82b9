#include "upanets/train/metrics.hpp"

#include <string>

#include "upanets/errors.hpp"

namespace upanets::train {

double top1_accuracy(std::span<const float> logits, Index classes, std::span<const int> labels) {
  if (classes <= 0 || static_cast<Index>(logits.size()) != classes * static_cast<Index>(labels.size())) {
    throw DimensionError("top1_accuracy: logits do not match labels x classes");
  }
  if (labels.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const float* row = logits.data() + i * static_cast<std::size_t>(classes);
    Index best = 0;
    for (Index k = 1; k < classes; ++k) {
      if (row[k] > row[best]) best = k;
    }
    if (best == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

EfficiencyReport efficiency(double accuracy_percent, double params_millions) {
  if (!(params_millions > 0.0)) {
    throw InputError("efficiency needs a positive parameter count, got " + std::to_string(params_millions));
  }
  return {accuracy_percent, params_millions, accuracy_percent / params_millions};
}

}  // namespace upanets::train
