#include "upanets/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "upanets/errors.hpp"

namespace upanets {

namespace {

class DebugChecksGuard {
 public:
  DebugChecksGuard() : previous_(autograd::debug_checks()) { autograd::set_debug_checks(true); }
  ~DebugChecksGuard() { autograd::set_debug_checks(previous_); }

 private:
  bool previous_;
};

}  // namespace

template <typename T>
GradReport grad_check(const std::string& op_name, const ScalarFunction<T>& fn, std::vector<BasicTensor<T>> inputs,
                      const GradCheckOptions& options) {
  DebugChecksGuard checks;
  for (auto& in : inputs) {
    if (!in.requires_grad()) in.set_requires_grad(true);
    in.zero_grad();
  }
  auto out = fn(inputs);
  if (out.numel() != 1) throw DimensionError("grad_check(" + op_name + ") needs a scalar-valued function");
  out.backward();

  GradReport report{op_name};
  Index offset = 0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto& in = inputs[k];
    const Index n = in.numel();
    std::vector<T> analytic(static_cast<std::size_t>(n), T{0});
    if (in.has_grad()) std::copy(in.grad().begin(), in.grad().end(), analytic.begin());
    const Index probes = options.max_probes_per_input > 0 ? std::min(n, options.max_probes_per_input) : n;
    autograd::NoGradGuard no_grad;
    for (Index p = 0; p < probes; ++p) {
      const Index i = probes == n ? p : (p * n) / probes;
      T* value = in.data() + i;
      const T saved = *value;
      *value = saved + static_cast<T>(options.eps);
      const double plus = static_cast<double>(fn(inputs).item());
      *value = saved - static_cast<T>(options.eps);
      const double minus = static_cast<double>(fn(inputs).item());
      *value = saved;
      const double numeric = (plus - minus) / (2.0 * options.eps);
      const double a = static_cast<double>(analytic[static_cast<std::size_t>(i)]);
      const double denom = std::max({std::fabs(a), std::fabs(numeric), options.floor});
      const double rel = std::fabs(a - numeric) / denom;
      if (!std::isfinite(rel)) throw NumericError("grad_check(" + op_name + ") produced a non-finite difference");
      ++report.probes;
      if (rel > report.max_rel_error || report.worst_index < 0) {
        report.max_rel_error = std::max(report.max_rel_error, rel);
        if (rel >= report.max_rel_error) {
          report.worst_index = offset + i;
          report.worst_input = static_cast<Index>(k);
        }
      }
    }
    offset += n;
  }
  return report;
}

template GradReport grad_check<double>(const std::string&, const ScalarFunction<double>&,
                                       std::vector<BasicTensor<double>>, const GradCheckOptions&);
template GradReport grad_check<float>(const std::string&, const ScalarFunction<float>&,
                                      std::vector<BasicTensor<float>>, const GradCheckOptions&);

}  // namespace upanets
