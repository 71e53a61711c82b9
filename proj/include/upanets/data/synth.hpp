#pragma once

#include <cstdint>

#include "upanets/data/dataset.hpp"

namespace upanets::data {

/// Class-conditional images: a per-class background colour plus a Gaussian
/// bump at a per-class position, with pixel noise. Classes are separable by
/// their colour means with a wide margin. Labels are assigned round-robin.
ImageSet synth_blobs(int classes, Index count, std::uint64_t seed);

/// Train and test sets drawn from disjoint streams of the same generator.
DatasetSplits synth_splits(int classes, Index train_count, Index test_count, std::uint64_t seed);

}  // namespace upanets::data
