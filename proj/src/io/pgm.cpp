#include "upanets/io/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "upanets/errors.hpp"

namespace upanets::io {

std::vector<std::uint8_t> encode_pgm(Index width, Index height, std::span<const std::uint8_t> pixels) {
  if (width <= 0 || height <= 0 || static_cast<Index>(pixels.size()) != width * height) {
    throw DimensionError("graymap pixel count does not match " + std::to_string(width) + "x" + std::to_string(height));
  }
  const std::string header = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), pixels.begin(), pixels.end());
  return out;
}

void write_pgm(const std::filesystem::path& path, Index width, Index height, std::span<const std::uint8_t> pixels) {
  const auto bytes = encode_pgm(width, height, pixels);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write image " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<std::uint8_t> unit_to_gray(std::span<const double> values) {
  std::vector<std::uint8_t> out(values.size());
  std::transform(values.begin(), values.end(), out.begin(), [](double v) {
    const double c = std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 1.0;
    return static_cast<std::uint8_t>(std::lround(c * 255.0));
  });
  return out;
}

std::vector<std::uint8_t> minmax_to_gray(std::span<const float> values) {
  std::vector<std::uint8_t> out(values.size(), 0);
  if (values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = static_cast<double>(*hi) - static_cast<double>(*lo);
  if (!(range > 0.0)) return out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double u = (static_cast<double>(values[i]) - *lo) / range;
    out[i] = static_cast<std::uint8_t>(std::lround(u * 255.0));
  }
  return out;
}

}  // namespace upanets::io
