#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "upanets/shape.hpp"

namespace upanets::io {

/// Binary 8-bit portable graymap ("P5"), rows top to bottom.
std::vector<std::uint8_t> encode_pgm(Index width, Index height, std::span<const std::uint8_t> pixels);
void write_pgm(const std::filesystem::path& path, Index width, Index height, std::span<const std::uint8_t> pixels);

/// Values in [0, 1] (clamped) to 0..255 with rounding.
std::vector<std::uint8_t> unit_to_gray(std::span<const double> values);

/// Min-max scaled to 0..255; a constant plane maps to zeros.
std::vector<std::uint8_t> minmax_to_gray(std::span<const float> values);

}  // namespace upanets::io
