#include "upanets/nn/upanets.hpp"

#include <algorithm>
#include <iomanip>
#include <set>
#include <sstream>

#include "upanets/errors.hpp"

namespace upanets::nn {

namespace {

constexpr std::pair<ExcMode, std::string_view> kExcNames[] = {
    {ExcMode::FinalGap, "final_gap"},
    {ExcMode::FinalSpa, "final_spa"},
    {ExcMode::ExcGap, "exc_gap"},
    {ExcMode::ExcSpa, "exc_spa"},
    {ExcMode::ExcSpaAndGap, "exc_spa_and_gap"},
};

bool uses_spa(ExcMode m) { return m == ExcMode::FinalSpa || m == ExcMode::ExcSpa || m == ExcMode::ExcSpaAndGap; }
bool uses_all_taps(ExcMode m) { return m != ExcMode::FinalGap && m != ExcMode::FinalSpa; }

constexpr int kLayers = 4;

}  // namespace

std::string_view to_string(ExcMode mode) {
  for (const auto& [m, name] : kExcNames) {
    if (m == mode) return name;
  }
  return "unknown";
}

ExcMode parse_exc_mode(std::string_view name) {
  for (const auto& [m, n] : kExcNames) {
    if (n == name) return m;
  }
  throw ConfigError("unknown exc mode '" + std::string(name) +
                    "' (expected final_gap, final_spa, exc_gap, exc_spa or exc_spa_and_gap)");
}

void UpaNetsConfig::validate() const {
  if (base_width < 1) throw ConfigError("base width F must be >= 1");
  if (depth < 1) throw ConfigError("depth multiplier d must be >= 1");
  if (classes < 1) throw ConfigError("class count must be >= 1");
  if (image_size < 8 || image_size % 8 != 0) {
    throw ConfigError("image size must be a positive multiple of 8, got " + std::to_string(image_size));
  }
  if (ablation.groups < 1) throw ConfigError("ablation groups must be >= 1");
}

UpaNetsConfig UpaNetsConfig::preset(std::string_view name, Index classes) {
  UpaNetsConfig cfg;
  cfg.classes = classes;
  if (name == "upa16") {
    cfg.base_width = 16;
  } else if (name == "upa32") {
    cfg.base_width = 32;
  } else if (name == "upa64") {
    cfg.base_width = 64;
  } else {
    throw ConfigError("unknown model preset '" + std::string(name) + "' (expected upa16, upa32 or upa64)");
  }
  return cfg;
}

template <typename T>
ExConnect<T>::ExConnect(std::vector<TapSpec> taps, ExcMode mode, bool spa_bias) : taps_(std::move(taps)), mode_(mode) {
  for (std::size_t i = 0; i < taps_.size(); ++i) {
    const auto& tap = taps_[i];
    const std::string prefix = "tap" + std::to_string(i) + ".";
    if (uses_spa(mode_)) {
      spa_.push_back(std::make_unique<SpaLayer<T>>(tap.height, tap.width, spa_bias));
      this->register_module(prefix + "spa", *spa_.back());
    }
    if (mode_ == ExcMode::ExcSpaAndGap) {
      Norms n;
      n.spa_gain = this->register_parameter(prefix + "ln_spa.weight", BasicTensor<T>(Shape{tap.channels}, T{1}));
      n.spa_shift = this->register_parameter(prefix + "ln_spa.bias", BasicTensor<T>(Shape{tap.channels}, T{0}));
      n.gap_gain = this->register_parameter(prefix + "ln_gap.weight", BasicTensor<T>(Shape{tap.channels}, T{1}));
      n.gap_shift = this->register_parameter(prefix + "ln_gap.bias", BasicTensor<T>(Shape{tap.channels}, T{0}));
      norms_.push_back(std::move(n));
    }
  }
}

template <typename T>
Index ExConnect<T>::output_width() const {
  Index total = 0;
  for (const auto& t : taps_) total += t.channels;
  return total;
}

template <typename T>
BasicTensor<T> ExConnect<T>::forward(std::span<const BasicTensor<T>> taps) {
  if (taps.size() != taps_.size()) {
    throw ConfigError("extreme connection expects " + std::to_string(taps_.size()) + " taps, got " +
                      std::to_string(taps.size()));
  }
  std::vector<BasicTensor<T>> pooled;
  pooled.reserve(taps.size());
  for (std::size_t i = 0; i < taps.size(); ++i) {
    const auto& x = taps[i];
    const auto& spec = taps_[i];
    if (x.rank() != 4 || x.dim(1) != spec.channels || x.dim(2) != spec.height || x.dim(3) != spec.width) {
      throw DimensionError("tap " + spec.name + " expects " + std::to_string(spec.channels) + "x" +
                           std::to_string(spec.height) + "x" + std::to_string(spec.width) + " maps, got " +
                           x.shape().str());
    }
    switch (mode_) {
      case ExcMode::FinalGap:
      case ExcMode::ExcGap:
        pooled.push_back(ops::gap(x));
        break;
      case ExcMode::FinalSpa:
      case ExcMode::ExcSpa:
        pooled.push_back(spa_[i]->forward(x));
        break;
      case ExcMode::ExcSpaAndGap: {
        const auto& n = norms_[i];
        auto s = ops::layernorm(spa_[i]->forward(x), &n.spa_gain, &n.spa_shift, 1);
        auto g = ops::layernorm(ops::gap(x), &n.gap_gain, &n.gap_shift, 1);
        pooled.push_back(ops::add(s, g));
        break;
      }
    }
  }
  return pooled.size() == 1 ? pooled.front() : ops::concat_channels<T>(pooled);
}

template <typename T>
UpaNets<T>::UpaNets(const UpaNetsConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  InitRng rng(seed);
  const Index f = config_.base_width;
  const Index s = config_.image_size;

  std::set<std::string> known;
  auto overrides_for = [&](const std::string& path) {
    known.insert(path);
    auto it = config_.block_overrides.find(path);
    return it != config_.block_overrides.end() ? it->second : config_.ablation;
  };

  BlockOverrides root_over = overrides_for("root");
  UpaBlockConfig root_cfg{3, f, 1, root_over.use_cpa, 1, false};
  root_ = std::make_unique<UpaBlock<T>>(root_cfg, rng);
  this->register_module("root", *root_);

  std::vector<TapSpec> taps{{"root", f, s, s}};
  Index width = f;
  Index size = s;
  for (int l = 1; l <= kLayers; ++l) {
    const std::string name = "layer" + std::to_string(l);
    UpaLayerPlan plan = plan_layer(width, 4 * config_.depth, name);
    plan.downsample_first = l > 1;
    layers_.push_back(std::make_unique<UpaLayer<T>>(
        plan, [&](Index b) { return overrides_for(name + ".block" + std::to_string(b)); }, rng));
    this->register_module(name, *layers_.back());
    if (plan.downsample_first) size /= 2;
    width = plan.out_width();
    taps.push_back({name, width, size, size});
  }
  for (const auto& [path, unused] : config_.block_overrides) {
    if (!known.count(path)) throw ConfigError("block override for unknown block '" + path + "'");
  }

  if (!uses_all_taps(config_.exc_mode)) taps.erase(taps.begin(), taps.end() - 1);
  exc_ = std::make_unique<ExConnect<T>>(std::move(taps), config_.exc_mode, config_.spa_bias);
  this->register_module("exc", *exc_);

  const Index features = exc_->output_width();
  BasicTensor<T> w(Shape{features, config_.classes});
  BasicTensor<T> b(Shape{config_.classes});
  fill_fan_in_uniform(w, features, rng);
  fill_fan_in_uniform(b, features, rng);
  head_weight = this->register_parameter("head.weight", w);
  head_bias = this->register_parameter("head.bias", b);
}

template <typename T>
BasicTensor<T> UpaNets<T>::forward_impl(const BasicTensor<T>& images, const BlockHook& hook, ForwardTrace<T>* trace) {
  if (images.rank() != 4 || images.dim(1) != 3 || images.dim(2) != config_.image_size ||
      images.dim(3) != config_.image_size) {
    throw DimensionError("UPANets expects N x 3 x " + std::to_string(config_.image_size) + " x " +
                         std::to_string(config_.image_size) + " images, got " + images.shape().str());
  }
  if (hook) hook("root", *root_, images);
  auto x = root_->forward(images);
  std::vector<BasicTensor<T>> taps{x};
  if (trace) trace->blocks.emplace_back("root", x);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::string name = "layer" + std::to_string(l + 1);
    typename UpaLayer<T>::Hook layer_hook;
    if (hook || trace) {
      layer_hook = [&](Index b, UpaBlock<T>& blk, const BasicTensor<T>& in) {
        const std::string path = name + ".block" + std::to_string(b);
        if (trace && b > 0) trace->blocks.emplace_back(name + ".block" + std::to_string(b - 1), in);
        if (hook) hook(path, blk, in);
      };
    }
    x = layers_[l]->forward(x, layer_hook);
    if (trace) trace->blocks.emplace_back(name + ".block" + std::to_string(layers_[l]->block_count() - 1), x);
    taps.push_back(x);
  }
  if (!uses_all_taps(config_.exc_mode)) taps.erase(taps.begin(), taps.end() - 1);
  auto features = exc_->forward(taps);
  auto logits = ops::linear(features, head_weight, &head_bias);
  if (trace) {
    trace->taps = std::move(taps);
    trace->features = features;
    trace->logits = logits;
  }
  return logits;
}

template <typename T>
BasicTensor<T> UpaNets<T>::forward(const BasicTensor<T>& images) {
  return forward_impl(images, {}, nullptr);
}

template <typename T>
ForwardTrace<T> UpaNets<T>::forward_traced(const BasicTensor<T>& images) {
  ForwardTrace<T> trace;
  forward_impl(images, {}, &trace);
  return trace;
}

template <typename T>
BasicTensor<T> UpaNets<T>::forward_with_hook(const BasicTensor<T>& images, const BlockHook& hook) {
  return forward_impl(images, hook, nullptr);
}

template <typename T>
std::vector<std::string> UpaNets<T>::block_paths() const {
  std::vector<std::string> paths{"root"};
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    for (Index b = 0; b < layers_[l]->block_count(); ++b) {
      paths.push_back("layer" + std::to_string(l + 1) + ".block" + std::to_string(b));
    }
  }
  return paths;
}

template <typename T>
UpaBlock<T>* UpaNets<T>::find_block(std::string_view path) {
  if (path == "root") return root_.get();
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    for (Index b = 0; b < layers_[l]->block_count(); ++b) {
      if (path == "layer" + std::to_string(l + 1) + ".block" + std::to_string(b)) return &layers_[l]->block(b);
    }
  }
  return nullptr;
}

template <typename T>
std::vector<SummaryRow> UpaNets<T>::summary() const {
  std::vector<SummaryRow> rows;
  const Index s = config_.image_size;
  rows.push_back({"root", Shape{config_.base_width, s, s}, root_->parameter_count()});
  Index size = s;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto& layer = *layers_[l];
    const auto& plan = layer.plan();
    if (plan.downsample_first) size /= 2;
    Index width = plan.in_width;
    for (Index b = 0; b < layer.block_count(); ++b) {
      if (b > 0) width += plan.growth;
      rows.push_back({"layer" + std::to_string(l + 1) + ".block" + std::to_string(b), Shape{width, size, size},
                      layer.block(b).parameter_count()});
    }
  }
  rows.push_back({"exc", Shape{exc_->output_width()}, exc_->parameter_count()});
  rows.push_back({"head", Shape{config_.classes}, head_weight.numel() + head_bias.numel()});
  return rows;
}

std::string format_summary(const std::vector<SummaryRow>& rows) {
  std::size_t width = 6;
  for (const auto& r : rows) width = std::max(width, r.path.size());
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(width) + 2) << "module" << std::setw(16) << "output"
      << "params\n";
  Index total = 0;
  for (const auto& r : rows) {
    out << std::left << std::setw(static_cast<int>(width) + 2) << r.path << std::setw(16) << r.output.str()
        << r.parameters << "\n";
    total += r.parameters;
  }
  out << std::left << std::setw(static_cast<int>(width) + 2) << "total" << std::setw(16) << "" << total << "\n";
  return out.str();
}

template class ExConnect<float>;
template class ExConnect<double>;
template class UpaNets<float>;
template class UpaNets<double>;

}  // namespace upanets::nn
