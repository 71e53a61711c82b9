#pragma once

#include <cstdint>
#include <random>
#include <span>

#include "upanets/data/dataset.hpp"

namespace upanets::data {

/// Zero-pad, random crop, random horizontal flip, per-channel normalization.
struct AugmentSpec {
  int pad = 4;
  int crop = 32;
  double hflip_prob = 0.5;
  Normalization norm;

  void validate() const;
};

/// One draw of the random part of the pipeline.
struct CropFlip {
  int offset_y = 0;  // in [0, 2 * pad]
  int offset_x = 0;
  bool flip = false;
};

using AugmentRng = std::mt19937_64;

/// Stream seed for one image of one epoch; independent of worker assignment.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t epoch, std::uint64_t index);

CropFlip draw_crop_flip(const AugmentSpec& spec, AugmentRng& rng);

/// Pads `image` by spec.pad zeros, takes the crop at the given offset, flips if
/// asked, then normalizes. `out` holds 3 x crop x crop values.
void apply_crop_flip(std::span<const float> image, const AugmentSpec& spec, const CropFlip& choice,
                     std::span<float> out);

void augment(std::span<const float> image, const AugmentSpec& spec, AugmentRng& rng, std::span<float> out);

/// Evaluation pipeline: normalization only.
void normalize(std::span<const float> image, const Normalization& norm, std::span<float> out);

}  // namespace upanets::data
