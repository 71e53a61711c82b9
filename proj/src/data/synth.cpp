#include "upanets/data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "upanets/errors.hpp"

namespace upanets::data {

namespace {

struct ClassPattern {
  std::array<float, 3> colour;
  float cy;
  float cx;
};

ClassPattern pattern_for(int k, int classes) {
  // Low-discrepancy colours keep class means well apart for any class count.
  constexpr std::array<double, 3> step{0.6180339887, 0.7548776662, 0.5698402910};
  ClassPattern p{};
  for (int c = 0; c < 3; ++c) {
    const double u = std::fmod(0.5 + step[c] * k, 1.0);
    p.colour[c] = static_cast<float>(0.15 + 0.7 * u);
  }
  const double angle = 2.0 * std::acos(-1.0) * k / classes;
  p.cy = static_cast<float>(15.5 + 8.0 * std::sin(angle));
  p.cx = static_cast<float>(15.5 + 8.0 * std::cos(angle));
  return p;
}

ImageSet render(int classes, Index count, std::mt19937_64& rng) {
  ImageSet set;
  set.classes = classes;
  set.pixels.resize(static_cast<std::size_t>(count * kImageValues));
  set.labels.resize(static_cast<std::size_t>(count));
  std::normal_distribution<float> noise(0.0F, 0.05F);
  std::uniform_real_distribution<float> jitter(-2.0F, 2.0F);
  constexpr float kSigma2 = 2.0F * 5.0F * 5.0F;
  for (Index i = 0; i < count; ++i) {
    const int label = static_cast<int>(i % classes);
    set.labels[i] = label;
    const ClassPattern p = pattern_for(label, classes);
    const float cy = p.cy + jitter(rng);
    const float cx = p.cx + jitter(rng);
    float* img = set.pixels.data() + i * kImageValues;
    for (Index c = 0; c < kChannels; ++c) {
      for (Index y = 0; y < kSide; ++y) {
        for (Index x = 0; x < kSide; ++x) {
          const float dy = static_cast<float>(y) - cy;
          const float dx = static_cast<float>(x) - cx;
          const float bump = 0.3F * std::exp(-(dy * dy + dx * dx) / kSigma2);
          const float v = p.colour[c] + (c == label % 3 ? bump : -bump) + noise(rng);
          img[(c * kSide + y) * kSide + x] = std::clamp(v, 0.0F, 1.0F);
        }
      }
    }
  }
  return set;
}

}  // namespace

ImageSet synth_blobs(int classes, Index count, std::uint64_t seed) {
  if (classes < 2) throw ConfigError("synthetic data needs at least 2 classes, got " + std::to_string(classes));
  if (count < 0) throw ConfigError("synthetic sample count must be >= 0");
  std::mt19937_64 rng(seed);
  return render(classes, count, rng);
}

DatasetSplits synth_splits(int classes, Index train_count, Index test_count, std::uint64_t seed) {
  DatasetSplits splits;
  splits.train = synth_blobs(classes, train_count, seed);
  splits.test = synth_blobs(classes, test_count, seed ^ 0x5eed5eed5eed5eedULL);
  return splits;
}

}  // namespace upanets::data
