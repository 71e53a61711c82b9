#include "upanets/nn/attention.hpp"

#include <string>

#include "upanets/errors.hpp"

namespace upanets::nn {

template <typename T>
BatchNorm2d<T>::BatchNorm2d(Index channels) : stats(channels) {
  gamma = this->register_parameter("weight", BasicTensor<T>(Shape{channels}, T{1}));
  beta = this->register_parameter("bias", BasicTensor<T>(Shape{channels}, T{0}));
  this->register_buffer("running_mean", stats.running_mean);
  this->register_buffer("running_var", stats.running_var);
  this->register_buffer("tracked", stats.tracked);
}

template <typename T>
BasicTensor<T> BatchNorm2d<T>::forward(const BasicTensor<T>& x) {
  return ops::batchnorm2d(x, gamma, beta, stats, this->mode());
}

template <typename T>
CpaLayer<T>::CpaLayer(Index in_channels, Index out_channels, bool downsample, InitRng& rng)
    : bn(out_channels), in_(in_channels), out_(out_channels), downsample_(downsample) {
  BasicTensor<T> w(Shape{in_channels, out_channels});
  BasicTensor<T> b(Shape{out_channels});
  fill_fan_in_uniform(w, in_channels, rng);
  fill_fan_in_uniform(b, in_channels, rng);
  weight = this->register_parameter("weight", w);
  bias = this->register_parameter("bias", b);
  this->register_module("bn", bn);
}

template <typename T>
BasicTensor<T> CpaLayer<T>::attend(const BasicTensor<T>& x) const {
  if (x.rank() != 4 || x.dim(1) != in_) {
    throw DimensionError("CPA expects " + std::to_string(in_) + " input channels, got " + x.shape().str());
  }
  auto pixels = ops::to_channels_last(x);
  auto mixed = ops::add_bias(ops::matmul(pixels, weight), bias);
  return ops::from_channels_last(mixed, x.dim(2), x.dim(3));
}

template <typename T>
BasicTensor<T> CpaLayer<T>::forward(const BasicTensor<T>& x) {
  auto out = bn.forward(attend(x));
  if (downsample_) out = ops::avgpool2d(out, 2, 2);
  if (residual()) out = ops::add(out, downsample_ ? ops::avgpool2d(x, 2, 2) : x);
  return ops::layernorm<T>(out, nullptr, nullptr, 3);
}

template <typename T>
SpaLayer<T>::SpaLayer(Index height, Index width, bool use_bias) {
  const Index length = height * width;
  weight = this->register_parameter("weight", BasicTensor<T>(Shape{length}, T{1} / static_cast<T>(length)));
  if (use_bias) bias = this->register_parameter("bias", BasicTensor<T>(Shape{1}, T{0}));
}

template <typename T>
BasicTensor<T> SpaLayer<T>::forward(const BasicTensor<T>& x) const {
  return ops::spatial_attention(x, weight, has_bias() ? &bias : nullptr);
}

template class BatchNorm2d<float>;
template class BatchNorm2d<double>;
template class CpaLayer<float>;
template class CpaLayer<double>;
template class SpaLayer<float>;
template class SpaLayer<double>;

}  // namespace upanets::nn
