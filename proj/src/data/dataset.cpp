#include "upanets/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "upanets/errors.hpp"

namespace upanets::data {

void ImageSet::append(const LabeledImage& img) {
  if (static_cast<Index>(img.pixels.size()) != kImageValues) {
    throw DimensionError("image must hold 3x32x32 values, got " + std::to_string(img.pixels.size()));
  }
  pixels.insert(pixels.end(), img.pixels.begin(), img.pixels.end());
  labels.push_back(img.label);
}

ImageSet ImageSet::head(Index count) const {
  const Index n = std::min(count, size());
  ImageSet out;
  out.classes = classes;
  out.pixels.assign(pixels.begin(), pixels.begin() + n * kImageValues);
  out.labels.assign(labels.begin(), labels.begin() + n);
  return out;
}

Normalization Normalization::compute(const ImageSet& set) {
  if (set.size() == 0) throw InputError("cannot compute normalization of an empty set");
  constexpr Index plane = kSide * kSide;
  Normalization out;
  for (Index c = 0; c < kChannels; ++c) {
    double sum = 0.0;
    double sq = 0.0;
    for (Index i = 0; i < set.size(); ++i) {
      const float* p = set.pixels.data() + i * kImageValues + c * plane;
      for (Index k = 0; k < plane; ++k) {
        sum += p[k];
        sq += static_cast<double>(p[k]) * p[k];
      }
    }
    const double n = static_cast<double>(set.size() * plane);
    const double mean = sum / n;
    const double var = std::max(sq / n - mean * mean, 0.0);
    out.mean[c] = static_cast<float>(mean);
    out.std[c] = static_cast<float>(std::max(std::sqrt(var), 1e-6));
  }
  return out;
}

void Normalization::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write normalization file " + path.string());
  out.precision(9);
  out << "mean " << mean[0] << ' ' << mean[1] << ' ' << mean[2] << '\n';
  out << "std " << std[0] << ' ' << std[1] << ' ' << std[2] << '\n';
}

Normalization Normalization::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read normalization file " + path.string());
  Normalization out;
  bool have_mean = false;
  bool have_std = false;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::string key;
    fields >> key;
    auto& target = key == "mean" ? out.mean : out.std;
    if (key != "mean" && key != "std") continue;
    if (!(fields >> target[0] >> target[1] >> target[2])) {
      throw FormatError("malformed line in " + path.string() + ": " + line);
    }
    (key == "mean" ? have_mean : have_std) = true;
  }
  if (!have_mean || !have_std) throw FormatError("normalization file " + path.string() + " lacks mean or std");
  for (float s : out.std) {
    if (!(s > 0.0F)) throw FormatError("normalization std must be positive in " + path.string());
  }
  return out;
}

Normalization Normalization::cached(const std::filesystem::path& data_dir, const ImageSet& train) {
  const auto path = data_dir / "normalization.txt";
  if (std::filesystem::exists(path)) return load(path);
  Normalization norm = compute(train);
  try {
    norm.save(path);
  } catch (const DataError&) {
    // Read-only data directory: use the computed values without caching.
  }
  return norm;
}

}  // namespace upanets::data
