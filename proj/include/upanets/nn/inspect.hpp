#pragma once

#include <cstdint>
#include <string_view>

#include "upanets/nn/upanets.hpp"

namespace upanets::nn {

/// Block intermediates for the first image of a batch: conv path, CPA output
/// and their sum before the block layernorm, each C x H x W.
struct FeatureCapture {
  Tensor conv;
  Tensor attention;  // undefined when the block has no CPA path
  Tensor sum;
};

/// Runs the model up to block `path` and returns its parts, without tape.
/// Uses eval-mode batchnorm when `mode` is Eval. Throws ConfigError listing
/// the valid block paths when `path` is unknown.
FeatureCapture capture_block(UpaNets<float>& model, std::string_view path, const Tensor& images, Mode mode);

/// N x 3 x size x size standard-normal input.
Tensor noise_images(Index count, Index size, std::uint64_t seed);

}  // namespace upanets::nn
