#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "upanets/data/augment.hpp"
#include "upanets/data/dataset.hpp"
#include "upanets/nn/upanets.hpp"

namespace upanets::train {

struct TrainConfig {
  double lr0 = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int epochs = 1;
  Index batch_size = 100;
  std::uint64_t seed = 0;
  /// Pad 4 / crop / flip; normalization is always applied.
  bool augment = true;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;             // 1-based
  double train_loss = 0.0;   // mean over the epoch's samples
  double train_top1 = 0.0;   // running accuracy on the augmented batches
  double test_top1 = 0.0;
  double lr = 0.0;           // rate used by the epoch's first step
};

struct EvalResult {
  double loss = 0.0;
  double top1 = 0.0;
};

/// Images [begin, begin + count) of `set`, normalized, as N x 3 x 32 x 32.
Tensor normalized_batch(const data::ImageSet& set, Index begin, Index count, const data::Normalization& norm);

/// Eval-mode pass without tape: mean cross-entropy and top-1 accuracy.
/// The model's mode is restored afterwards.
EvalResult evaluate(nn::UpaNets<float>& model, const data::ImageSet& set, const data::Normalization& norm,
                    Index batch_size = 100);

/// Eval-mode logits for every image, N x classes, row-major.
std::vector<float> predict(nn::UpaNets<float>& model, const data::ImageSet& set, const data::Normalization& norm,
                           Index batch_size = 100);

struct TrainResult {
  std::vector<EpochRecord> history;
  /// State of the epoch with the highest test accuracy (the initial state when no epoch ran).
  std::vector<nn::NamedTensor<float>> best_state;
  double best_top1 = 0.0;
  int best_epoch = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Per epoch: seeded shuffle, augmentation seeded per (seed, epoch, image),
/// forward/backward/SGD step with a per-step cosine rate, then test evaluation.
/// Throws NumericError with the global step index when the loss is not finite.
TrainResult train(nn::UpaNets<float>& model, const data::DatasetSplits& data, const data::Normalization& norm,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

/// "epoch,train_loss,test_top1,lr" with one row per record.
std::string history_csv(const std::vector<EpochRecord>& history);

/// Trailing moving average of train_loss over `window` epochs (shorter at the start).
std::vector<double> moving_average_loss(const std::vector<EpochRecord>& history, std::size_t window);

}  // namespace upanets::train
