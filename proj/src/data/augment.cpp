#include "upanets/data/augment.hpp"

#include <string>

#include "upanets/errors.hpp"

namespace upanets::data {

void AugmentSpec::validate() const {
  if (pad < 0) throw ConfigError("augment pad must be >= 0, got " + std::to_string(pad));
  if (crop != kSide) throw ConfigError("augment crop must be 32, got " + std::to_string(crop));
  if (hflip_prob < 0.0 || hflip_prob > 1.0) throw ConfigError("hflip probability must lie in [0, 1]");
  for (float s : norm.std) {
    if (!(s > 0.0F)) throw ConfigError("normalization std must be positive");
  }
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t epoch, std::uint64_t index) {
  // splitmix64 finalizer over a combined key.
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ epoch) ^ index);
}

CropFlip draw_crop_flip(const AugmentSpec& spec, AugmentRng& rng) {
  std::uniform_int_distribution<int> offset(0, 2 * spec.pad);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  CropFlip choice;
  choice.offset_y = offset(rng);
  choice.offset_x = offset(rng);
  choice.flip = coin(rng) < spec.hflip_prob;
  return choice;
}

void apply_crop_flip(std::span<const float> image, const AugmentSpec& spec, const CropFlip& choice,
                     std::span<float> out) {
  if (static_cast<Index>(image.size()) != kImageValues || static_cast<Index>(out.size()) != kImageValues) {
    throw DimensionError("augment expects 3x32x32 buffers");
  }
  const int side = static_cast<int>(kSide);
  for (int c = 0; c < kChannels; ++c) {
    const float mean = spec.norm.mean[c];
    const float inv_std = 1.0F / spec.norm.std[c];
    const float* src = image.data() + c * side * side;
    float* dst = out.data() + c * side * side;
    for (int y = 0; y < side; ++y) {
      const int sy = y + choice.offset_y - spec.pad;
      for (int x = 0; x < side; ++x) {
        const int px = choice.flip ? side - 1 - x : x;
        const int sx = px + choice.offset_x - spec.pad;
        const bool inside = sy >= 0 && sy < side && sx >= 0 && sx < side;
        const float v = inside ? src[sy * side + sx] : 0.0F;
        dst[y * side + x] = (v - mean) * inv_std;
      }
    }
  }
}

void augment(std::span<const float> image, const AugmentSpec& spec, AugmentRng& rng, std::span<float> out) {
  apply_crop_flip(image, spec, draw_crop_flip(spec, rng), out);
}

void normalize(std::span<const float> image, const Normalization& norm, std::span<float> out) {
  AugmentSpec spec;
  spec.pad = 0;
  spec.norm = norm;
  apply_crop_flip(image, spec, CropFlip{}, out);
}

}  // namespace upanets::data
