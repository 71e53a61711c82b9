#pragma once

#include <memory>

#include "upanets/data/dataset.hpp"
#include "upanets/landscape/landscape.hpp"
#include "upanets/nn/upanets.hpp"

namespace upanets::landscape {

/// Mean cross-entropy and top-1 error of a model on a fixed evaluation set,
/// with batchnorm in eval mode (running statistics are never touched).
class ModelProbe : public Probe<float> {
 public:
  /// Borrows `model`; the evaluation set is shared between clones.
  ModelProbe(nn::UpaNets<float>& model, std::shared_ptr<const data::ImageSet> eval_set, data::Normalization norm,
             Index batch_size = 100);

  std::vector<nn::NamedTensor<float>> parameters() override { return model_->parameters(); }
  Evaluation evaluate() override;
  [[nodiscard]] std::unique_ptr<Probe<float>> clone() const override;

 private:
  std::unique_ptr<nn::UpaNets<float>> owned_;
  nn::UpaNets<float>* model_;
  std::shared_ptr<const data::ImageSet> eval_set_;
  data::Normalization norm_;
  Index batch_size_;
};

/// f(theta) = sum(theta^2), a closed-form reference surface.
class QuadraticProbe : public Probe<double> {
 public:
  explicit QuadraticProbe(std::vector<double> theta);

  std::vector<nn::NamedTensor<double>> parameters() override { return {{"theta", theta_}}; }
  Evaluation evaluate() override;
  [[nodiscard]] std::unique_ptr<Probe<double>> clone() const override;

 private:
  TensorD theta_;
};

/// f(theta) = exp(rate * |theta_0|) + theta_1^2: finite only while |theta_0| <= 709.78 / rate.
class ExpProbe : public Probe<double> {
 public:
  ExpProbe(double rate, std::vector<double> theta);

  std::vector<nn::NamedTensor<double>> parameters() override { return {{"theta", theta_}}; }
  Evaluation evaluate() override;
  [[nodiscard]] std::unique_ptr<Probe<double>> clone() const override;

 private:
  double rate_;
  TensorD theta_;
};

}  // namespace upanets::landscape
