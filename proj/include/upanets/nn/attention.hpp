#pragma once

#include "upanets/nn/module.hpp"

namespace upanets::nn {

/// Batch normalization over channels with learnable gain ("weight") and shift ("bias").
template <typename T>
class BatchNorm2d : public Module<T> {
 public:
  explicit BatchNorm2d(Index channels);
  BasicTensor<T> forward(const BasicTensor<T>& x);

  BasicTensor<T> gamma;
  BasicTensor<T> beta;
  BatchNormStats<T> stats;
};

/// Channel pixel attention: every pixel position mixes all input channels
/// through one learned C_in x C_out matrix plus bias, followed by batchnorm,
/// a residual add when the widths agree, and an affine-free layernorm over
/// C x H x W. With `downsample`, both branches are 2x2 average pooled before
/// the residual add.
template <typename T>
class CpaLayer : public Module<T> {
 public:
  CpaLayer(Index in_channels, Index out_channels, bool downsample, InitRng& rng);

  /// Per-pixel weighted channel sum plus bias, before any normalization.
  BasicTensor<T> attend(const BasicTensor<T>& x) const;
  BasicTensor<T> forward(const BasicTensor<T>& x);

  [[nodiscard]] Index in_channels() const { return in_; }
  [[nodiscard]] Index out_channels() const { return out_; }
  [[nodiscard]] bool downsample() const { return downsample_; }
  [[nodiscard]] bool residual() const { return in_ == out_; }

  BasicTensor<T> weight;
  BasicTensor<T> bias;
  BatchNorm2d<T> bn;

 private:
  Index in_;
  Index out_;
  bool downsample_;
};

/// Spatial pixel attention: a learned pooling of each H x W map to one value,
/// with one weight vector of length H*W shared by all channels. Initialized to
/// 1/(H*W) so it starts out equal to global average pooling.
template <typename T>
class SpaLayer : public Module<T> {
 public:
  SpaLayer(Index height, Index width, bool use_bias);
  BasicTensor<T> forward(const BasicTensor<T>& x) const;

  [[nodiscard]] Index length() const { return weight.numel(); }
  [[nodiscard]] bool has_bias() const { return bias.defined(); }

  BasicTensor<T> weight;
  BasicTensor<T> bias;
};

extern template class BatchNorm2d<float>;
extern template class BatchNorm2d<double>;
extern template class CpaLayer<float>;
extern template class CpaLayer<double>;
extern template class SpaLayer<float>;
extern template class SpaLayer<double>;

}  // namespace upanets::nn
