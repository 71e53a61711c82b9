#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "upanets/tensor.hpp"

namespace upanets {

/// Running statistics owned by a batch-normalization layer.
template <typename T>
struct BatchNormStats {
  BasicTensor<T> running_mean;
  BasicTensor<T> running_var;
  /// Number of train-mode updates; a single-element tensor so it can be checkpointed.
  BasicTensor<T> tracked;

  explicit BatchNormStats(Index channels = 1)
      : running_mean(Shape{channels}, T{0}), running_var(Shape{channels}, T{1}), tracked(Shape{1}, T{0}) {}
  [[nodiscard]] bool initialized() const { return tracked.item() > T{0}; }
};

enum class Mode { Train, Eval };

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;
inline constexpr double kLayerNormEps = 1e-5;

namespace ops {

/// 2-D cross-correlation over N x Cin x H x W with kernel Cout x Cin/groups x kh x kw.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernel, const BasicTensor<T>* bias,
                      Index stride, Index pad, Index groups);

/// Window mean with a k x k window and no padding.
template <typename T>
BasicTensor<T> avgpool2d(const BasicTensor<T>& input, Index k, Index stride);

/// [..., M, K] x [K, P] -> [..., M, P].
template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// Per-channel normalization over N x H x W. Train mode updates `stats`.
template <typename T>
BasicTensor<T> batchnorm2d(const BasicTensor<T>& input, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                           BatchNormStats<T>& stats, Mode mode, double eps = kBatchNormEps,
                           double momentum = kBatchNormMomentum);

/// Normalizes each sample over its trailing `normalized_rank` extents. Gain and
/// shift are optional and, when given, must have exactly those extents.
template <typename T>
BasicTensor<T> layernorm(const BasicTensor<T>& input, const BasicTensor<T>* gamma, const BasicTensor<T>* beta,
                         std::size_t normalized_rank, double eps = kLayerNormEps);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input);

/// Mean negative log-likelihood of `labels` under softmax(logits), logits N x K.
template <typename T>
BasicTensor<T> softmax_cross_entropy(const BasicTensor<T>& logits, std::span<const int> labels);

/// Concatenation along axis 1; all other extents must agree.
template <typename T>
BasicTensor<T> concat_channels(std::span<const BasicTensor<T>> parts);

/// Channels [begin, begin + count) along axis 1.
template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& input, Index begin, Index count);

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// Elementwise product of equal-shape tensors.
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& input, T factor);

/// Adds `bias` along the last axis; a single-element bias is added everywhere.
template <typename T>
BasicTensor<T> add_bias(const BasicTensor<T>& input, const BasicTensor<T>& bias);

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& input);

/// Same values, new extents; shares storage.
template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& input, Shape shape);

/// N x C x H x W -> N x (H*W) x C.
template <typename T>
BasicTensor<T> to_channels_last(const BasicTensor<T>& input);

/// N x (H*W) x C -> N x C x H x W.
template <typename T>
BasicTensor<T> from_channels_last(const BasicTensor<T>& input, Index height, Index width);

/// Channel c = g*k + j (of `groups` groups of k) moves to j*groups + g.
template <typename T>
BasicTensor<T> channel_shuffle(const BasicTensor<T>& input, Index groups);

/// Global average pooling, N x C x H x W -> N x C.
template <typename T>
BasicTensor<T> gap(const BasicTensor<T>& input);

/// Learned spatial pooling: per sample and channel, <flattened map, weight> + bias.
/// weight has H*W entries shared across channels; bias is a single value or null.
template <typename T>
BasicTensor<T> spatial_attention(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                                 const BasicTensor<T>* bias);

/// x[N,K] * w[K,P] + b[P].
template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>* bias);

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernel, std::nullptr_t, Index stride,
                      Index pad, Index groups) {
  return conv2d<T>(input, kernel, static_cast<const BasicTensor<T>*>(nullptr), stride, pad, groups);
}

template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& input, const BasicTensor<T>& weight, std::nullptr_t) {
  return linear<T>(input, weight, static_cast<const BasicTensor<T>*>(nullptr));
}

}  // namespace ops
}  // namespace upanets
