#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "upanets/tensor.hpp"

namespace upanets {

struct GradReport {
  std::string op_name;
  double max_rel_error = 0.0;
  /// Flat index over the concatenation of all checked inputs; -1 when nothing was probed.
  Index worst_index = -1;
  /// Position of the input holding worst_index; -1 when nothing was probed.
  Index worst_input = -1;
  Index probes = 0;
};

struct GradCheckOptions {
  double eps = 1e-5;
  /// Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
  double floor = 1e-8;
  /// Coordinates probed per input, evenly strided; <= 0 probes every coordinate.
  Index max_probes_per_input = 0;
};

template <typename T>
using ScalarFunction = std::function<BasicTensor<T>(std::span<const BasicTensor<T>>)>;

/// Compares reverse-mode gradients of a scalar function against central
/// differences. Inputs are perturbed in place (copies of a tensor alias its
/// storage, so model parameters can be passed directly) and restored.
/// Non-finite intermediates raise NumericError naming the operator.
template <typename T>
GradReport grad_check(const std::string& op_name, const ScalarFunction<T>& fn, std::vector<BasicTensor<T>> inputs,
                      const GradCheckOptions& options = {});

extern template GradReport grad_check<double>(const std::string&, const ScalarFunction<double>&,
                                              std::vector<BasicTensor<double>>, const GradCheckOptions&);
extern template GradReport grad_check<float>(const std::string&, const ScalarFunction<float>&,
                                             std::vector<BasicTensor<float>>, const GradCheckOptions&);

}  // namespace upanets
