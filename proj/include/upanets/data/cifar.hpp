#pragma once

#include <cstdint>
#include <filesystem>
#include <span>

#include "upanets/data/dataset.hpp"

namespace upanets::data {

/// CIFAR-10 records carry one label byte; CIFAR-100 carries coarse then fine.
enum class CifarFormat { Cifar10, Cifar100 };

[[nodiscard]] Index record_bytes(CifarFormat format);
[[nodiscard]] int class_count(CifarFormat format);

/// Parses one record: label byte(s), then 1024 red, 1024 green, 1024 blue bytes
/// row-major, scaled by 1/255. CIFAR-100 uses the fine label. `offset` is only
/// used in error messages.
LabeledImage load_cifar_record(std::span<const std::uint8_t> bytes, CifarFormat format, Index offset = 0);

/// Parses a whole batch buffer; its length must be a multiple of the record size.
ImageSet parse_cifar_batch(std::span<const std::uint8_t> bytes, CifarFormat format);
ImageSet load_cifar_file(const std::filesystem::path& path, CifarFormat format);

/// CIFAR-10: data_batch_1..5.bin and test_batch.bin. CIFAR-100: train.bin and
/// test.bin. Files are looked up in `dir` and in the archive's own subdirectory
/// (cifar-10-batches-bin / cifar-100-binary). Throws DataError naming the path.
DatasetSplits load_cifar_dir(const std::filesystem::path& dir, CifarFormat format);

}  // namespace upanets::data
