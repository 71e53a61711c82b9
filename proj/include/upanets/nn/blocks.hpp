#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "upanets/nn/attention.hpp"

namespace upanets::nn {

struct UpaBlockConfig {
  Index in_channels = 0;
  Index out_channels = 0;
  Index stride = 1;
  bool use_cpa = true;
  Index groups = 1;
  bool shuffle = false;

  /// Throws ConfigError on stride outside {1,2} or groups not dividing the conv widths.
  void validate() const;
};

/// Intermediate outputs of one block, for feature-map inspection.
template <typename T>
struct BlockParts {
  BasicTensor<T> conv;       // conv path after its last batchnorm (pooled when stride 2)
  BasicTensor<T> attention;  // CPA output; undefined when CPA is disabled
  BasicTensor<T> sum;        // conv + attention, before the block layernorm
  BasicTensor<T> output;
};

/// Inverted-triangle conv path (3x3 in -> 2*out, BN, ReLU, [shuffle], 3x3 2*out -> out, BN)
/// in parallel with channel pixel attention, summed and layer-normalized.
template <typename T>
class UpaBlock : public Module<T> {
 public:
  UpaBlock(const UpaBlockConfig& config, InitRng& rng);

  BasicTensor<T> forward(const BasicTensor<T>& x);
  BlockParts<T> forward_parts(const BasicTensor<T>& x);

  [[nodiscard]] const UpaBlockConfig& config() const { return config_; }
  [[nodiscard]] CpaLayer<T>* cpa() { return cpa_.get(); }

  BasicTensor<T> conv1;
  BatchNorm2d<T> bn1;
  BasicTensor<T> conv2;
  BatchNorm2d<T> bn2;

 private:
  UpaBlockConfig config_;
  std::unique_ptr<CpaLayer<T>> cpa_;
};

/// Width arithmetic of one densely-connected layer.
struct UpaLayerPlan {
  Index in_width = 0;
  /// Number of concatenating growth blocks after the transition block.
  Index blocks = 0;
  /// Channels each growth block appends.
  Index growth = 0;
  bool downsample_first = false;

  [[nodiscard]] Index out_width() const { return in_width + blocks * growth; }
};

/// growth = in_width / blocks, exactly; throws ConfigError naming `layer_name` otherwise.
UpaLayerPlan plan_layer(Index in_width, Index blocks, const std::string& layer_name = "layer");

/// Per-block overrides used by the ablation variants.
struct BlockOverrides {
  bool use_cpa = true;
  Index groups = 1;
  bool shuffle = false;
};

/// A transition block (in -> in, stride 2 when downsampling) followed by
/// `blocks` stride-1 blocks, each concatenating `growth` new channels onto the
/// running tensor. Output width is 2 * in_width.
template <typename T>
class UpaLayer : public Module<T> {
 public:
  using OverrideFn = std::function<BlockOverrides(Index block_index)>;

  UpaLayer(const UpaLayerPlan& plan, const OverrideFn& overrides, InitRng& rng);

  /// `hook(block_index, block, input)` runs before each block, if set.
  using Hook = std::function<void(Index, UpaBlock<T>&, const BasicTensor<T>&)>;
  BasicTensor<T> forward(const BasicTensor<T>& x, const Hook& hook = {});

  [[nodiscard]] const UpaLayerPlan& plan() const { return plan_; }
  [[nodiscard]] Index block_count() const { return static_cast<Index>(blocks_.size()); }
  [[nodiscard]] UpaBlock<T>& block(Index i) { return *blocks_[static_cast<std::size_t>(i)]; }

 private:
  UpaLayerPlan plan_;
  std::vector<std::unique_ptr<UpaBlock<T>>> blocks_;
};

extern template class UpaBlock<float>;
extern template class UpaBlock<double>;
extern template class UpaLayer<float>;
extern template class UpaLayer<double>;

}  // namespace upanets::nn
