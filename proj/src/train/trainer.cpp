#include "upanets/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "upanets/errors.hpp"
#include "upanets/kernels/parallel.hpp"
#include "upanets/ops.hpp"
#include "upanets/train/checkpoint.hpp"
#include "upanets/train/metrics.hpp"
#include "upanets/train/optim.hpp"

namespace upanets::train {

namespace {

class ModeGuard {
 public:
  ModeGuard(nn::Module<float>& module, Mode mode) : module_(module), previous_(module.mode()) { module.set_mode(mode); }
  ~ModeGuard() { module_.set_mode(previous_); }
  ModeGuard(const ModeGuard&) = delete;
  ModeGuard& operator=(const ModeGuard&) = delete;

 private:
  nn::Module<float>& module_;
  Mode previous_;
};

}  // namespace

Tensor normalized_batch(const data::ImageSet& set, Index begin, Index count, const data::Normalization& norm) {
  Tensor batch(Shape{count, data::kChannels, data::kSide, data::kSide});
  auto out = batch.values();
  kernels::parallel_for(0, count, [&](Index i) {
    data::normalize(set.image(begin + i), norm, out.subspan(i * data::kImageValues, data::kImageValues));
  });
  return batch;
}

void TrainConfig::validate() const {
  if (!(lr0 >= 0.0) || !std::isfinite(lr0)) throw ConfigError("learning rate must be finite and >= 0");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must lie in [0, 1)");
  if (weight_decay < 0.0) throw ConfigError("weight decay must be >= 0");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
}

std::vector<float> predict(nn::UpaNets<float>& model, const data::ImageSet& set, const data::Normalization& norm,
                           Index batch_size) {
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  ModeGuard mode(model, Mode::Eval);
  autograd::NoGradGuard no_grad;
  const Index classes = model.config().classes;
  std::vector<float> logits(static_cast<std::size_t>(set.size() * classes));
  for (Index begin = 0; begin < set.size(); begin += batch_size) {
    const Index count = std::min(batch_size, set.size() - begin);
    Tensor out = model.forward(normalized_batch(set, begin, count, norm));
    std::copy(out.values().begin(), out.values().end(), logits.begin() + begin * classes);
  }
  return logits;
}

EvalResult evaluate(nn::UpaNets<float>& model, const data::ImageSet& set, const data::Normalization& norm,
                    Index batch_size) {
  if (set.size() == 0) throw InputError("cannot evaluate on an empty set");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  ModeGuard mode(model, Mode::Eval);
  autograd::NoGradGuard no_grad;
  const Index classes = model.config().classes;
  double loss_sum = 0.0;
  double correct = 0.0;
  for (Index begin = 0; begin < set.size(); begin += batch_size) {
    const Index count = std::min(batch_size, set.size() - begin);
    Tensor logits = model.forward(normalized_batch(set, begin, count, norm));
    std::span<const int> labels(set.labels.data() + begin, static_cast<std::size_t>(count));
    loss_sum += static_cast<double>(ops::softmax_cross_entropy(logits, labels).item()) * static_cast<double>(count);
    correct += top1_accuracy(logits.values(), classes, labels) * static_cast<double>(count);
  }
  const auto n = static_cast<double>(set.size());
  return {loss_sum / n, correct / n};
}

TrainResult train(nn::UpaNets<float>& model, const data::DatasetSplits& data, const data::Normalization& norm,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  const Index n = data.train.size();
  if (n == 0) throw InputError("training split is empty");
  if (data.test.size() == 0) throw InputError("test split is empty");
  const Index classes = model.config().classes;
  for (int label : data.train.labels) {
    if (label < 0 || label >= classes) throw InputError("training label " + std::to_string(label) + " outside model classes");
  }

  data::AugmentSpec spec;
  spec.norm = norm;
  if (!config.augment) {
    spec.pad = 0;
    spec.hflip_prob = 0.0;
  }
  spec.validate();

  Sgd optimizer(model.parameters(), config.momentum, config.weight_decay);
  const Index steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const Index total_steps = steps_per_epoch * config.epochs;

  TrainResult result;
  result.best_state = snapshot_state(model);
  result.best_top1 = -1.0;

  std::vector<Index> order(static_cast<std::size_t>(n));
  Index step = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    model.set_mode(Mode::Train);
    std::iota(order.begin(), order.end(), Index{0});
    std::mt19937_64 shuffle_rng(data::derive_seed(config.seed, static_cast<std::uint64_t>(epoch), ~0ULL));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochRecord record;
    record.epoch = epoch;
    record.lr = cosine_lr(step, total_steps, config.lr0);
    double loss_sum = 0.0;
    double correct = 0.0;
    for (Index begin = 0; begin < n; begin += config.batch_size, ++step) {
      const Index count = std::min(config.batch_size, n - begin);
      Tensor batch(Shape{count, data::kChannels, data::kSide, data::kSide});
      std::vector<int> labels(static_cast<std::size_t>(count));
      auto out = batch.values();
      kernels::parallel_for(0, count, [&](Index i) {
        const Index idx = order[begin + i];
        data::AugmentRng rng(data::derive_seed(config.seed, static_cast<std::uint64_t>(epoch),
                                               static_cast<std::uint64_t>(idx)));
        data::augment(data.train.image(idx), spec, rng, out.subspan(i * data::kImageValues, data::kImageValues));
        labels[i] = data.train.labels[idx];
      });

      Tensor logits = model.forward(batch);
      Tensor loss = ops::softmax_cross_entropy(logits, std::span<const int>(labels));
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw NumericError("non-finite training loss at step " + std::to_string(step) + " (epoch " +
                           std::to_string(epoch) + ")");
      }
      loss.backward();
      optimizer.step(cosine_lr(step, total_steps, config.lr0));
      optimizer.zero_grad();

      loss_sum += value * static_cast<double>(count);
      correct += top1_accuracy(logits.values(), classes, labels) * static_cast<double>(count);
    }
    record.train_loss = loss_sum / static_cast<double>(n);
    record.train_top1 = correct / static_cast<double>(n);
    record.test_top1 = evaluate(model, data.test, norm, config.batch_size).top1;
    if (record.test_top1 > result.best_top1) {
      result.best_top1 = record.test_top1;
      result.best_epoch = epoch;
      result.best_state = snapshot_state(model);
    }
    result.history.push_back(record);
    if (on_epoch) on_epoch(record);
  }
  model.set_mode(Mode::Train);
  if (result.best_top1 < 0.0) result.best_top1 = 0.0;
  return result;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream out;
  out.precision(9);
  out << "epoch,train_loss,test_top1,lr\n";
  for (const auto& r : history) out << r.epoch << ',' << r.train_loss << ',' << r.test_top1 << ',' << r.lr << '\n';
  return out.str();
}

std::vector<double> moving_average_loss(const std::vector<EpochRecord>& history, std::size_t window) {
  if (window == 0) throw ConfigError("moving-average window must be >= 1");
  std::vector<double> out;
  double sum = 0.0;
  for (std::size_t i = 0; i < history.size(); ++i) {
    sum += history[i].train_loss;
    if (i >= window) sum -= history[i - window].train_loss;
    out.push_back(sum / static_cast<double>(std::min(i + 1, window)));
  }
  return out;
}

}  // namespace upanets::train
