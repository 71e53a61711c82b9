#pragma once

#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "upanets/nn/blocks.hpp"

namespace upanets::nn {

/// Classifier-input wiring: final pooling only, or an extreme connection over every tap.
enum class ExcMode { FinalGap, FinalSpa, ExcGap, ExcSpa, ExcSpaAndGap };

std::string_view to_string(ExcMode mode);
/// Throws ConfigError for an unknown name.
ExcMode parse_exc_mode(std::string_view name);

struct UpaNetsConfig {
  Index base_width = 16;  // F
  Index depth = 1;        // d; each layer has 4d growth blocks
  Index classes = 10;
  Index image_size = 32;
  ExcMode exc_mode = ExcMode::ExcSpaAndGap;
  bool spa_bias = false;
  /// Applied to every block of layers 1-4; the root keeps groups = 1 (3 input channels).
  BlockOverrides ablation;
  /// Keyed by block path, e.g. "layer2.block0"; wins over `ablation`.
  std::map<std::string, BlockOverrides> block_overrides;

  void validate() const;
  /// Preset names upa16 / upa32 / upa64 (F = 16/32/64, d = 1).
  static UpaNetsConfig preset(std::string_view name, Index classes = 10);
};

/// One pooled summary source for the extreme connection.
struct TapSpec {
  std::string name;
  Index channels = 0;
  Index height = 0;
  Index width = 0;
};

/// Flatten-concatenate of per-tap pooled vectors. In the SPA & GAP mode each
/// tap contributes layernorm(SPA(tap)) + layernorm(GAP(tap)).
template <typename T>
class ExConnect : public Module<T> {
 public:
  ExConnect(std::vector<TapSpec> taps, ExcMode mode, bool spa_bias);

  BasicTensor<T> forward(std::span<const BasicTensor<T>> taps);

  [[nodiscard]] const std::vector<TapSpec>& taps() const { return taps_; }
  [[nodiscard]] Index output_width() const;
  [[nodiscard]] SpaLayer<T>* spa(std::size_t tap) { return spa_.empty() ? nullptr : spa_[tap].get(); }

 private:
  struct Norms {
    BasicTensor<T> spa_gain, spa_shift, gap_gain, gap_shift;
  };
  std::vector<TapSpec> taps_;
  ExcMode mode_;
  std::vector<std::unique_ptr<SpaLayer<T>>> spa_;
  std::vector<Norms> norms_;
};

/// Per-module row of the architecture summary.
struct SummaryRow {
  std::string path;
  Shape output;  // per-sample extents C x H x W (or features)
  Index parameters = 0;
};

/// Forward intermediates used by shape checks and inspection.
template <typename T>
struct ForwardTrace {
  std::vector<std::pair<std::string, BasicTensor<T>>> blocks;  // every block output, in order
  std::vector<BasicTensor<T>> taps;                            // root and layer outputs
  BasicTensor<T> features;
  BasicTensor<T> logits;
};

template <typename T>
class UpaNets : public Module<T> {
 public:
  UpaNets(const UpaNetsConfig& config, std::uint64_t seed);

  BasicTensor<T> forward(const BasicTensor<T>& images);
  ForwardTrace<T> forward_traced(const BasicTensor<T>& images);

  /// `hook(path, block, input)` runs before each block.
  using BlockHook = std::function<void(const std::string&, UpaBlock<T>&, const BasicTensor<T>&)>;
  BasicTensor<T> forward_with_hook(const BasicTensor<T>& images, const BlockHook& hook);

  [[nodiscard]] const UpaNetsConfig& config() const { return config_; }
  [[nodiscard]] std::vector<std::string> block_paths() const;
  /// Null when `path` names no block.
  [[nodiscard]] UpaBlock<T>* find_block(std::string_view path);
  [[nodiscard]] UpaLayer<T>& layer(std::size_t index) { return *layers_[index]; }
  [[nodiscard]] UpaBlock<T>& root() { return *root_; }
  [[nodiscard]] ExConnect<T>& exconnect() { return *exc_; }

  [[nodiscard]] std::vector<SummaryRow> summary() const;

  BasicTensor<T> head_weight;
  BasicTensor<T> head_bias;

 private:
  BasicTensor<T> forward_impl(const BasicTensor<T>& images, const BlockHook& hook, ForwardTrace<T>* trace);

  UpaNetsConfig config_;
  std::unique_ptr<UpaBlock<T>> root_;
  std::vector<std::unique_ptr<UpaLayer<T>>> layers_;
  std::unique_ptr<ExConnect<T>> exc_;
};

template <typename T>
std::unique_ptr<UpaNets<T>> build_upanets(const UpaNetsConfig& config, std::uint64_t seed = 0) {
  return std::make_unique<UpaNets<T>>(config, seed);
}

/// Plain-text table: module path, output shape, parameter count.
std::string format_summary(const std::vector<SummaryRow>& rows);

extern template class ExConnect<float>;
extern template class ExConnect<double>;
extern template class UpaNets<float>;
extern template class UpaNets<double>;

}  // namespace upanets::nn
