#include "upanets/nn/blocks.hpp"

#include <string>

#include "upanets/errors.hpp"

namespace upanets::nn {

void UpaBlockConfig::validate() const {
  if (in_channels < 1 || out_channels < 1) throw ConfigError("UPA block widths must be positive");
  if (stride != 1 && stride != 2) throw ConfigError("UPA block stride must be 1 or 2, got " + std::to_string(stride));
  if (groups < 1 || in_channels % groups != 0 || out_channels % groups != 0) {
    throw ConfigError("UPA block groups=" + std::to_string(groups) + " must divide widths " +
                      std::to_string(in_channels) + " -> " + std::to_string(2 * out_channels) + " -> " +
                      std::to_string(out_channels));
  }
}

template <typename T>
UpaBlock<T>::UpaBlock(const UpaBlockConfig& config, InitRng& rng)
    : bn1(2 * config.out_channels), bn2(config.out_channels), config_(config) {
  config_.validate();
  const Index in = config.in_channels;
  const Index mid = 2 * config.out_channels;
  const Index out = config.out_channels;
  const Index g = config.groups;
  BasicTensor<T> k1(Shape{mid, in / g, 3, 3});
  BasicTensor<T> k2(Shape{out, mid / g, 3, 3});
  fill_fan_in_normal(k1, in / g * 9, rng);
  fill_fan_in_normal(k2, mid / g * 9, rng);
  conv1 = this->register_parameter("conv1.weight", k1);
  this->register_module("bn1", bn1);
  conv2 = this->register_parameter("conv2.weight", k2);
  this->register_module("bn2", bn2);
  if (config.use_cpa) {
    cpa_ = std::make_unique<CpaLayer<T>>(in, out, config.stride == 2, rng);
    this->register_module("cpa", *cpa_);
  }
}

template <typename T>
BlockParts<T> UpaBlock<T>::forward_parts(const BasicTensor<T>& x) {
  if (x.rank() != 4 || x.dim(1) != config_.in_channels) {
    throw DimensionError("UPA block expects " + std::to_string(config_.in_channels) + " channels, got " +
                         x.shape().str());
  }
  BlockParts<T> parts;
  auto h = ops::relu(bn1.forward(ops::conv2d<T>(x, conv1, nullptr, 1, 1, config_.groups)));
  if (config_.shuffle && config_.groups > 1) h = ops::channel_shuffle(h, config_.groups);
  parts.conv = bn2.forward(ops::conv2d<T>(h, conv2, nullptr, 1, 1, config_.groups));
  if (config_.stride == 2) parts.conv = ops::avgpool2d(parts.conv, 2, 2);
  if (cpa_) {
    parts.attention = cpa_->forward(x);
    parts.sum = ops::add(parts.conv, parts.attention);
  } else {
    parts.sum = parts.conv;
  }
  parts.output = ops::layernorm<T>(parts.sum, nullptr, nullptr, 3);
  return parts;
}

template <typename T>
BasicTensor<T> UpaBlock<T>::forward(const BasicTensor<T>& x) {
  return forward_parts(x).output;
}

UpaLayerPlan plan_layer(Index in_width, Index blocks, const std::string& layer_name) {
  if (in_width < 1 || blocks < 1) {
    throw ConfigError(layer_name + ": width and block count must be positive");
  }
  if (in_width % blocks != 0) {
    throw ConfigError(layer_name + ": input width " + std::to_string(in_width) + " is not divisible by " +
                      std::to_string(blocks) + " blocks");
  }
  return UpaLayerPlan{in_width, blocks, in_width / blocks, false};
}

template <typename T>
UpaLayer<T>::UpaLayer(const UpaLayerPlan& plan, const OverrideFn& overrides, InitRng& rng) : plan_(plan) {
  for (Index b = 0; b <= plan.blocks; ++b) {
    const BlockOverrides o = overrides ? overrides(b) : BlockOverrides{};
    UpaBlockConfig cfg;
    if (b == 0) {
      cfg.in_channels = plan.in_width;
      cfg.out_channels = plan.in_width;
      cfg.stride = plan.downsample_first ? 2 : 1;
    } else {
      cfg.in_channels = plan.in_width + (b - 1) * plan.growth;
      cfg.out_channels = plan.growth;
    }
    cfg.use_cpa = o.use_cpa;
    cfg.groups = o.groups;
    cfg.shuffle = o.shuffle;
    blocks_.push_back(std::make_unique<UpaBlock<T>>(cfg, rng));
    this->register_module("block" + std::to_string(b), *blocks_.back());
  }
}

template <typename T>
BasicTensor<T> UpaLayer<T>::forward(const BasicTensor<T>& x, const Hook& hook) {
  if (x.rank() != 4 || x.dim(1) != plan_.in_width) {
    throw DimensionError("UPA layer expects " + std::to_string(plan_.in_width) + " channels, got " + x.shape().str());
  }
  BasicTensor<T> running = x;
  for (Index b = 0; b < block_count(); ++b) {
    auto& blk = block(b);
    if (hook) hook(b, blk, running);
    BasicTensor<T> out;
    try {
      out = blk.forward(running);
    } catch (const DimensionError& e) {
      throw DimensionError("block" + std::to_string(b) + ": " + e.what());
    }
    if (b == 0) {
      running = out;
    } else {
      const BasicTensor<T> parts[] = {running, out};
      running = ops::concat_channels<T>(parts);
    }
  }
  return running;
}

template class UpaBlock<float>;
template class UpaBlock<double>;
template class UpaLayer<float>;
template class UpaLayer<double>;

}  // namespace upanets::nn
