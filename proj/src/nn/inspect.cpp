#include "upanets/nn/inspect.hpp"

#include <random>
#include <string>

#include "upanets/errors.hpp"
#include "upanets/ops.hpp"

namespace upanets::nn {

namespace {

Tensor first_sample(const Tensor& batch) {
  const Index per = batch.numel() / batch.dim(0);
  std::vector<float> v(batch.values().begin(), batch.values().begin() + per);
  return Tensor(Shape{batch.dim(1), batch.dim(2), batch.dim(3)}, std::move(v));
}

}  // namespace

FeatureCapture capture_block(UpaNets<float>& model, std::string_view path, const Tensor& images, Mode mode) {
  if (model.find_block(path) == nullptr) {
    std::string valid;
    for (const auto& p : model.block_paths()) valid += (valid.empty() ? "" : ", ") + p;
    throw ConfigError("unknown block '" + std::string(path) + "'; valid blocks: " + valid);
  }
  const Mode previous = model.mode();
  model.set_mode(mode);
  autograd::NoGradGuard no_grad;
  FeatureCapture capture;
  bool found = false;
  try {
    model.forward_with_hook(images, [&](const std::string& p, UpaBlock<float>& block, const Tensor& input) {
      if (found || p != path) return;
      found = true;
      BlockParts<float> parts = block.forward_parts(input);
      capture.conv = first_sample(parts.conv);
      if (parts.attention.defined()) capture.attention = first_sample(parts.attention);
      capture.sum = first_sample(parts.sum);
    });
  } catch (...) {
    model.set_mode(previous);
    throw;
  }
  model.set_mode(previous);
  return capture;
}

Tensor noise_images(Index count, Index size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0F, 1.0F);
  Tensor out(Shape{count, 3, size, size});
  for (auto& v : out.values()) v = normal(rng);
  return out;
}

}  // namespace upanets::nn
