#include "upanets/landscape/probes.hpp"

#include <cmath>

#include "upanets/errors.hpp"
#include "upanets/train/checkpoint.hpp"
#include "upanets/train/trainer.hpp"

namespace upanets::landscape {

ModelProbe::ModelProbe(nn::UpaNets<float>& model, std::shared_ptr<const data::ImageSet> eval_set,
                       data::Normalization norm, Index batch_size)
    : model_(&model), eval_set_(std::move(eval_set)), norm_(norm), batch_size_(batch_size) {
  if (!eval_set_ || eval_set_->size() == 0) throw InputError("landscape evaluation set is empty");
}

Evaluation ModelProbe::evaluate() {
  const auto result = train::evaluate(*model_, *eval_set_, norm_, batch_size_);
  return {result.loss, 1.0 - result.top1};
}

std::unique_ptr<Probe<float>> ModelProbe::clone() const {
  auto copy = nn::build_upanets<float>(model_->config(), 0);
  train::restore_state(*copy, train::snapshot_state(*model_));
  copy->set_mode(model_->mode());
  auto probe = std::make_unique<ModelProbe>(*copy, eval_set_, norm_, batch_size_);
  probe->owned_ = std::move(copy);
  return probe;
}

QuadraticProbe::QuadraticProbe(std::vector<double> theta) {
  const auto n = static_cast<Index>(theta.size());
  theta_ = TensorD(Shape{n}, std::move(theta));
}

Evaluation QuadraticProbe::evaluate() {
  double s = 0.0;
  for (double v : theta_.values()) s += v * v;
  return {s, 0.0};
}

std::unique_ptr<Probe<double>> QuadraticProbe::clone() const {
  auto v = theta_.values();
  return std::make_unique<QuadraticProbe>(std::vector<double>(v.begin(), v.end()));
}

ExpProbe::ExpProbe(double rate, std::vector<double> theta) : rate_(rate) {
  if (theta.size() < 2) throw DimensionError("ExpProbe needs at least two coordinates");
  const auto n = static_cast<Index>(theta.size());
  theta_ = TensorD(Shape{n}, std::move(theta));
}

Evaluation ExpProbe::evaluate() {
  const auto v = theta_.values();
  return {std::exp(rate_ * std::abs(v[0])) + v[1] * v[1], 0.0};
}

std::unique_ptr<Probe<double>> ExpProbe::clone() const {
  auto v = theta_.values();
  return std::make_unique<ExpProbe>(rate_, std::vector<double>(v.begin(), v.end()));
}

}  // namespace upanets::landscape
