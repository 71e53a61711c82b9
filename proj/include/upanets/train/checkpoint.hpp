#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "upanets/data/dataset.hpp"
#include "upanets/nn/upanets.hpp"

namespace upanets::train {

/// On-disk layout, all integers little-endian:
///   "UPAC" | u32 version | u32 entry count |
///   per entry: u16 name length, name bytes, u8 dtype (0 = float32), u8 rank,
///              u32 extent x rank, float32 values.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  std::vector<std::uint32_t> extents;
  std::vector<float> values;
};

struct Checkpoint {
  std::uint32_t format_version = kCheckpointVersion;
  std::vector<CheckpointEntry> entries;

  /// Null when absent.
  [[nodiscard]] const CheckpointEntry* find(std::string_view name) const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint);
/// Throws FormatError on bad magic, unknown version or dtype, truncation or trailing bytes.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
/// Throws DataError when the file cannot be opened, FormatError when it is corrupt.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Everything besides tensors needed to rebuild and evaluate a model.
struct CheckpointMeta {
  nn::UpaNetsConfig config;
  int epoch = 0;
  double best_accuracy = 0.0;
  data::Normalization norm;
};

/// Model state (parameters then buffers) followed by "meta.*" entries.
Checkpoint make_checkpoint(const nn::UpaNets<float>& model, const CheckpointMeta& meta);
/// Same, from an already captured state list (e.g. the best epoch's snapshot).
Checkpoint make_checkpoint(const std::vector<nn::NamedTensor<float>>& state, const CheckpointMeta& meta);

CheckpointMeta read_meta(const Checkpoint& checkpoint);

/// Copies every state tensor from the checkpoint; names and extents must match exactly.
void load_state(nn::Module<float>& model, const Checkpoint& checkpoint);

/// Rebuilds the model described by the metadata and loads its state.
std::unique_ptr<nn::UpaNets<float>> model_from_checkpoint(const Checkpoint& checkpoint, CheckpointMeta* meta = nullptr);

/// Independent copies of the module's state tensors.
std::vector<nn::NamedTensor<float>> snapshot_state(const nn::Module<float>& model);
/// Writes a snapshot back into the module's storage.
void restore_state(nn::Module<float>& model, const std::vector<nn::NamedTensor<float>>& state);

}  // namespace upanets::train
