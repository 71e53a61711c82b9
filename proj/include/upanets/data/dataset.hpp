#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "upanets/shape.hpp"

namespace upanets::data {

inline constexpr Index kChannels = 3;
inline constexpr Index kSide = 32;
inline constexpr Index kImageValues = kChannels * kSide * kSide;

/// One 3 x 32 x 32 image with values in [0, 1], channel-major.
struct LabeledImage {
  int label = 0;
  std::vector<float> pixels;
};

/// Contiguous N x 3 x 32 x 32 pixels in [0, 1] plus labels.
struct ImageSet {
  int classes = 0;
  std::vector<float> pixels;
  std::vector<int> labels;

  [[nodiscard]] Index size() const { return static_cast<Index>(labels.size()); }
  [[nodiscard]] std::span<const float> image(Index i) const {
    return std::span<const float>(pixels).subspan(static_cast<std::size_t>(i * kImageValues), kImageValues);
  }
  void append(const LabeledImage& img);
  /// First `count` images (all when count exceeds the size).
  [[nodiscard]] ImageSet head(Index count) const;
};

struct DatasetSplits {
  ImageSet train;
  ImageSet test;
};

/// Per-channel statistics used for input normalization.
struct Normalization {
  std::array<float, 3> mean{0.0F, 0.0F, 0.0F};
  std::array<float, 3> std{1.0F, 1.0F, 1.0F};

  /// Channel means and population standard deviations over every pixel of `set`.
  static Normalization compute(const ImageSet& set);
  /// Text form: "mean r g b" and "std r g b" lines.
  void save(const std::filesystem::path& path) const;
  static Normalization load(const std::filesystem::path& path);
  /// Cached file beside the data when present, else computed from `train` and written there.
  static Normalization cached(const std::filesystem::path& data_dir, const ImageSet& train);
};

}  // namespace upanets::data
