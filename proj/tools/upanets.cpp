#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "upanets/data/cifar.hpp"
#include "upanets/data/synth.hpp"
#include "upanets/errors.hpp"
#include "upanets/io/pgm.hpp"
#include "upanets/kernels/parallel.hpp"
#include "upanets/landscape/landscape.hpp"
#include "upanets/landscape/probes.hpp"
#include "upanets/nn/inspect.hpp"
#include "upanets/train/checkpoint.hpp"
#include "upanets/train/metrics.hpp"
#include "upanets/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace upanets;

namespace {

enum Exit : int { kOk = 0, kData = 2, kCheckpoint = 3, kUsage = 4 };

/// Carries a specific exit code out of a command.
struct Failure : std::runtime_error {
  Failure(int code, const std::string& what) : std::runtime_error(what), code(code) {}
  int code;
};

struct Options {
  std::string model = "upa16";
  Index classes = 10;
  std::string data_dir = "data";
  std::uint64_t seed = 0;
  std::string out = "out";
  Index depth = 1;
  Index width = 0;
  bool synthetic = false;
  int threads = 0;

  std::string exc_mode = "exc_spa_and_gap";
  bool no_cpa = false;
  Index groups = 1;
  bool shuffle = false;

  int epochs = 1;
  Index batch_size = 100;
  double lr = 0.1;
  Index train_size = 0;
  Index test_size = 0;
  bool no_augment = false;

  std::string checkpoint;
  double range = -1.0;
  Index steps = 25;
  std::string preset;
  Index eval_size = 1000;

  std::string tap = "layer2.block0";
  std::string source = "image";
  Index count = 32;

  double accuracy = -1.0;
};

constexpr Index kSynthTrain = 200;
constexpr Index kSynthTest = 100;
constexpr double kComparisonRange = 0.0375;
constexpr Index kComparisonSteps = 50;
const std::vector<double> kRangeCandidates{1.0, 0.5, 0.25, 0.1, 0.05, 0.0375, 0.01};

/// key=value lines echoing everything a run resolved.
class Manifest {
 public:
  template <typename V>
  void set(const std::string& key, const V& value) {
    if constexpr (std::is_floating_point_v<V>) {
      char buf[64];
      const auto end = std::to_chars(buf, buf + sizeof buf, value).ptr;
      lines_.emplace_back(key, std::string(buf, end));
    } else {
      std::ostringstream s;
      s << value;
      lines_.emplace_back(key, s.str());
    }
  }

  void write(const fs::path& path) const {
    std::ofstream out(path);
    if (!out) throw Failure(kData, "cannot write manifest " + path.string());
    for (const auto& [k, v] : lines_) out << k << "=" << v << "\n";
  }

 private:
  std::vector<std::pair<std::string, std::string>> lines_;
};

fs::path prepare_out(const Options& o) {
  fs::path out(o.out);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw Failure(kData, "cannot create output directory " + out.string() + ": " + ec.message());
  return out;
}

nn::UpaNetsConfig model_config(const Options& o) {
  auto cfg = nn::UpaNetsConfig::preset(o.model, o.classes);
  cfg.depth = o.depth;
  if (o.width > 0) cfg.base_width = o.width;
  cfg.exc_mode = nn::parse_exc_mode(o.exc_mode);
  cfg.ablation = {!o.no_cpa, o.groups, o.shuffle};
  cfg.validate();
  return cfg;
}

void record_config(Manifest& m, const nn::UpaNetsConfig& cfg) {
  m.set("model.base_width", cfg.base_width);
  m.set("model.depth", cfg.depth);
  m.set("model.classes", cfg.classes);
  m.set("model.image_size", cfg.image_size);
  m.set("model.exc_mode", nn::to_string(cfg.exc_mode));
  m.set("model.spa_bias", cfg.spa_bias);
  m.set("model.use_cpa", cfg.ablation.use_cpa);
  m.set("model.groups", cfg.ablation.groups);
  m.set("model.shuffle", cfg.ablation.shuffle);
  for (const auto& [path, ov] : cfg.block_overrides) {
    m.set("model.override." + path, std::to_string(ov.use_cpa) + "," + std::to_string(ov.groups) + "," +
                                        std::to_string(ov.shuffle));
  }
}

void record_common(Manifest& m, const std::string& command, const Options& o, int argc, char** argv) {
  std::string line;
  for (int i = 0; i < argc; ++i) line += (i ? " " : "") + std::string(argv[i]);
  m.set("command", command);
  m.set("argv", line);
  m.set("seed", o.seed);
  m.set("threads", kernels::max_threads());
  m.set("data.source", o.synthetic ? "synthetic" : "cifar");
  if (!o.synthetic) m.set("data.dir", o.data_dir);
}

struct LoadedData {
  data::DatasetSplits splits;
  data::Normalization norm;
};

/// Synthetic blobs, or CIFAR-10/100 chosen by the class count. Normalization
/// statistics always come from the full training split.
LoadedData load_data(const Options& o, Index classes, Manifest& m) {
  LoadedData d;
  if (o.synthetic) {
    const Index ntrain = o.train_size > 0 ? o.train_size : kSynthTrain;
    const Index ntest = o.test_size > 0 ? o.test_size : kSynthTest;
    d.splits = data::synth_splits(static_cast<int>(classes), ntrain, ntest, o.seed);
    d.norm = data::Normalization::compute(d.splits.train);
  } else {
    if (classes != 10 && classes != 100) {
      throw Failure(kUsage, "CIFAR data needs --classes 10 or 100 (got " + std::to_string(classes) + ")");
    }
    const auto format = classes == 100 ? data::CifarFormat::Cifar100 : data::CifarFormat::Cifar10;
    d.splits = data::load_cifar_dir(o.data_dir, format);
    d.norm = data::Normalization::cached(o.data_dir, d.splits.train);
    if (o.train_size > 0) d.splits.train = d.splits.train.head(o.train_size);
    if (o.test_size > 0) d.splits.test = d.splits.test.head(o.test_size);
  }
  m.set("data.train_size", d.splits.train.size());
  m.set("data.test_size", d.splits.test.size());
  for (int c = 0; c < 3; ++c) {
    m.set("data.mean" + std::to_string(c), d.norm.mean[c]);
    m.set("data.std" + std::to_string(c), d.norm.std[c]);
  }
  return d;
}

std::unique_ptr<nn::UpaNets<float>> load_model(const std::string& path, train::CheckpointMeta& meta) {
  try {
    return train::model_from_checkpoint(train::load_checkpoint(path), &meta);
  } catch (const Error& e) {
    throw Failure(kCheckpoint, "checkpoint " + path + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Failure(kData, "cannot write " + path.string());
  out << text;
}

std::string efficiency_text(const train::EfficiencyReport& r) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << "accuracy_percent=" << r.accuracy_percent
    << "\nparams_millions=" << std::setprecision(6) << r.params_millions << "\nefficiency=" << std::setprecision(4)
    << r.efficiency << "\n";
  return s.str();
}

int cmd_train(const Options& o, int argc, char** argv) {
  const auto out = prepare_out(o);
  Manifest m;
  record_common(m, "train", o, argc, argv);
  const auto cfg = model_config(o);
  record_config(m, cfg);
  train::TrainConfig tc;
  tc.lr0 = o.lr;
  tc.epochs = o.epochs;
  tc.batch_size = o.batch_size;
  tc.seed = o.seed;
  tc.augment = !o.no_augment;
  tc.validate();
  m.set("train.epochs", tc.epochs);
  m.set("train.batch_size", tc.batch_size);
  m.set("train.lr0", tc.lr0);
  m.set("train.momentum", tc.momentum);
  m.set("train.weight_decay", tc.weight_decay);
  m.set("train.augment", tc.augment);
  m.set("train.schedule", "cosine_per_step");

  auto data = load_data(o, cfg.classes, m);
  nn::UpaNets<float> model(cfg, o.seed);
  const Index params = model.parameter_count();
  m.set("model.parameters", params);
  m.write(out / "manifest.txt");

  auto result = train::train(model, data.splits, data.norm, tc, [](const train::EpochRecord& r) {
    std::printf("epoch %3d  lr %.5f  train_loss %.4f  train_top1 %.4f  test_top1 %.4f\n", r.epoch, r.lr,
                r.train_loss, r.train_top1, r.test_top1);
    std::fflush(stdout);
  });
  write_text(out / "history.csv", train::history_csv(result.history));
  train::save_checkpoint(out / "best.ckpt",
                         train::make_checkpoint(result.best_state, {cfg, result.best_epoch, result.best_top1, data.norm}));
  const auto report = train::efficiency(100.0 * result.best_top1, static_cast<double>(params) / 1e6);
  write_text(out / "efficiency.txt", "best_epoch=" + std::to_string(result.best_epoch) + "\n" + efficiency_text(report));
  m.set("result.best_epoch", result.best_epoch);
  m.set("result.best_top1", result.best_top1);
  m.set("result.efficiency", report.efficiency);
  m.write(out / "manifest.txt");
  std::printf("parameters %lld  best_top1 %.4f (epoch %d)  efficiency %.4f\n", static_cast<long long>(params),
              result.best_top1, result.best_epoch, report.efficiency);
  return kOk;
}

int cmd_eval(const Options& o, int argc, char** argv) {
  if (o.checkpoint.empty()) throw Failure(kUsage, "eval needs --checkpoint");
  const auto out = prepare_out(o);
  Manifest m;
  record_common(m, "eval", o, argc, argv);
  m.set("checkpoint", o.checkpoint);
  train::CheckpointMeta meta;
  auto model = load_model(o.checkpoint, meta);
  record_config(m, meta.config);
  auto data = load_data(o, meta.config.classes, m);
  const auto r = train::evaluate(*model, data.splits.test, meta.norm, o.batch_size);
  const auto report = train::efficiency(100.0 * r.top1, static_cast<double>(model->parameter_count()) / 1e6);
  m.set("model.parameters", model->parameter_count());
  m.set("result.loss", r.loss);
  m.set("result.top1", r.top1);
  m.set("result.efficiency", report.efficiency);
  m.write(out / "manifest.txt");
  std::printf("test_loss %.6f  test_top1 %.4f  efficiency %.4f\n", r.loss, r.top1, report.efficiency);
  return kOk;
}

void write_grid_image(const fs::path& path, const landscape::LandscapeGrid& scaled, bool loss) {
  const auto gray = io::unit_to_gray(loss ? scaled.loss : scaled.top1_error);
  io::write_pgm(path, scaled.steps, scaled.steps, gray);
}

int cmd_landscape(const Options& o, int argc, char** argv) {
  if (o.checkpoint.empty()) throw Failure(kUsage, "landscape needs --checkpoint");
  if (!o.preset.empty() && o.preset != "paper-comparison") {
    throw Failure(kUsage, "unknown preset '" + o.preset + "' (expected paper-comparison)");
  }
  const auto out = prepare_out(o);
  Manifest m;
  record_common(m, "landscape", o, argc, argv);
  m.set("checkpoint", o.checkpoint);
  train::CheckpointMeta meta;
  auto model = load_model(o.checkpoint, meta);
  record_config(m, meta.config);
  auto data = load_data(o, meta.config.classes, m);
  auto eval_set = std::make_shared<const data::ImageSet>(data.splits.test.head(o.eval_size));
  m.set("landscape.eval_size", eval_set->size());

  landscape::ModelProbe probe(*model, eval_set, meta.norm, o.batch_size);
  auto [delta, eta] = landscape::make_directions<float>(probe, o.seed);
  double range = o.range;
  Index steps = o.steps;
  std::string range_source = "flag";
  if (o.preset == "paper-comparison") {
    range = kComparisonRange;
    steps = kComparisonSteps;
    range_source = "preset";
  } else if (range < 0.0) {
    const auto choice = landscape::find_visualizable_range<float>(probe, delta, eta, kRangeCandidates);
    range = choice.range;
    range_source = choice.fallback ? "search_fallback" : "search";
  }
  m.set("landscape.preset", o.preset.empty() ? "none" : o.preset);
  m.set("landscape.range", range);
  m.set("landscape.range_source", range_source);
  m.set("landscape.steps", steps);
  m.set("landscape.direction_seed", o.seed);
  m.write(out / "manifest.txt");

  const auto grid = landscape::sample_grid<float>(probe, delta, eta, range, steps);
  std::ofstream csv(out / "landscape.csv");
  if (!csv) throw Failure(kData, "cannot write " + (out / "landscape.csv").string());
  landscape::write_grid_csv(csv, grid);
  const auto scaled = landscape::minmax_scale(grid);
  write_grid_image(out / "landscape_loss.pgm", scaled, true);
  write_grid_image(out / "landscape_top1_error.pgm", scaled, false);
  m.set("result.nonfinite_cells", grid.nonfinite_count);
  m.write(out / "manifest.txt");
  std::printf("range %.6g  steps %lld  nonfinite %lld\n", range, static_cast<long long>(steps),
              static_cast<long long>(grid.nonfinite_count));
  return kOk;
}

void write_channels(const fs::path& dir, const std::string& prefix, const Tensor& maps, Index count) {
  const Index h = maps.shape()[1], w = maps.shape()[2];
  for (Index c = 0; c < count; ++c) {
    const auto plane = maps.values().subspan(static_cast<std::size_t>(c * h * w), static_cast<std::size_t>(h * w));
    char name[64];
    std::snprintf(name, sizeof name, "%s_%02lld.pgm", prefix.c_str(), static_cast<long long>(c));
    io::write_pgm(dir / name, w, h, io::minmax_to_gray(plane));
  }
}

int cmd_inspect(const Options& o, int argc, char** argv) {
  if (o.source != "image" && o.source != "noise") throw Failure(kUsage, "--source must be image or noise");
  if (o.count < 1) throw Failure(kUsage, "--count must be >= 1");
  const auto out = prepare_out(o);
  Manifest m;
  record_common(m, "inspect", o, argc, argv);
  std::unique_ptr<nn::UpaNets<float>> model;
  data::Normalization norm;
  Mode mode = Mode::Train;
  if (!o.checkpoint.empty()) {
    train::CheckpointMeta meta;
    model = load_model(o.checkpoint, meta);
    norm = meta.norm;
    mode = meta.epoch > 0 ? Mode::Eval : Mode::Train;
    m.set("checkpoint", o.checkpoint);
  } else {
    model = std::make_unique<nn::UpaNets<float>>(model_config(o), o.seed);
  }
  record_config(m, model->config());
  // Batchnorm only has running statistics once the checkpoint has been trained.
  m.set("inspect.batchnorm", mode == Mode::Eval ? "running" : "batch");
  m.set("inspect.tap", o.tap);
  m.set("inspect.source", o.source);

  Tensor images;
  if (o.source == "noise") {
    images = nn::noise_images(1, model->config().image_size, o.seed);
  } else {
    auto data = load_data(o, model->config().classes, m);
    if (o.checkpoint.empty()) norm = data.norm;
    if (data.splits.test.size() == 0) throw Failure(kData, "no test images to inspect");
    images = train::normalized_batch(data.splits.test, 0, 1, norm);
  }

  nn::FeatureCapture cap;
  try {
    cap = nn::capture_block(*model, o.tap, images, mode);
  } catch (const ConfigError& e) {
    throw Failure(kUsage, e.what());
  }
  const Index channels = cap.conv.shape()[0];
  if (o.count > channels) {
    throw Failure(kUsage, "--count " + std::to_string(o.count) + " exceeds the " + std::to_string(channels) +
                              " channels of " + o.tap);
  }
  m.set("inspect.count", o.count);
  m.set("inspect.channels", channels);
  m.set("inspect.has_cpa", cap.attention.numel() > 0);
  m.write(out / "manifest.txt");
  write_channels(out, "conv", cap.conv, o.count);
  if (cap.attention.numel() > 0) {
    write_channels(out, "cpa", cap.attention, o.count);
  } else {
    std::fprintf(stderr, "note: %s has no CPA path; cpa_XX images skipped\n", o.tap.c_str());
  }
  write_channels(out, "sum", cap.sum, o.count);
  std::printf("wrote feature maps for %s (%lld channels) to %s\n", o.tap.c_str(), static_cast<long long>(o.count),
              out.string().c_str());
  return kOk;
}

int cmd_params(const Options& o) {
  const auto cfg = model_config(o);
  nn::UpaNets<float> model(cfg, o.seed);
  std::cout << nn::format_summary(model.summary());
  const Index total = model.parameter_count();
  std::printf("parameters %lld (%.3fM)\n", static_cast<long long>(total), static_cast<double>(total) / 1e6);
  if (o.accuracy >= 0.0) {
    const auto r = train::efficiency(o.accuracy, static_cast<double>(total) / 1e6);
    std::printf("efficiency %.4f (accuracy %.2f%% / %.6fM parameters)\n", r.efficiency, o.accuracy,
                r.params_millions);
  }
  return kOk;
}

void add_shared(CLI::App* cmd, Options& o) {
  cmd->add_option("--model", o.model, "Preset: upa16 | upa32 | upa64 (d = 1)")->capture_default_str();
  cmd->add_option("--classes", o.classes, "Number of classes")->capture_default_str();
  cmd->add_option("--data-dir", o.data_dir, "Directory holding the CIFAR binary batches")->capture_default_str();
  cmd->add_option("--seed", o.seed, "Seed for weights, data order, augmentation and directions")->capture_default_str();
  cmd->add_option("--out", o.out, "Output directory")->capture_default_str();
  cmd->add_flag("--synthetic", o.synthetic, "Use generated class-conditional blobs instead of CIFAR");
  cmd->add_option("--train-size", o.train_size, "Training images (0 = all; synthetic default 200)");
  cmd->add_option("--test-size", o.test_size, "Test images (0 = all; synthetic default 100)");
  cmd->add_option("--batch-size", o.batch_size, "Batch size")->capture_default_str();
  cmd->add_option("--threads", o.threads, "OpenMP threads (0 = runtime default)");
}

void add_arch(CLI::App* cmd, Options& o) {
  cmd->add_option("--depth", o.depth, "Depth multiplier d (4d blocks per layer)")->capture_default_str();
  cmd->add_option("--width", o.width, "Override the base width F");
  cmd->add_option("--exc-mode", o.exc_mode, "final_gap | final_spa | exc_gap | exc_spa | exc_spa_and_gap")
      ->capture_default_str();
  cmd->add_flag("--no-cpa", o.no_cpa, "Disable channel pixel attention in every block");
  cmd->add_option("--groups", o.groups, "Grouped convolutions in UPA blocks")->capture_default_str();
  cmd->add_flag("--shuffle", o.shuffle, "Channel shuffle after grouped convolutions");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"UPANets: train, evaluate, inspect and visualize"};
  app.require_subcommand(1);
  Options o;

  auto* train_cmd = app.add_subcommand("train", "Train a model and write history, checkpoint and efficiency");
  add_shared(train_cmd, o);
  add_arch(train_cmd, o);
  train_cmd->add_option("--epochs", o.epochs, "Epochs")->capture_default_str();
  train_cmd->add_option("--lr", o.lr, "Initial learning rate (cosine annealed per step)")->capture_default_str();
  train_cmd->add_flag("--no-augment", o.no_augment, "Disable crop and flip augmentation");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  add_shared(eval_cmd, o);
  eval_cmd->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();

  auto* land_cmd = app.add_subcommand("landscape", "Sample a filter-normalized 2-D loss landscape");
  add_shared(land_cmd, o);
  land_cmd->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
  land_cmd->add_option("--range", o.range, "Half-width r of [-r, r]^2 (default: largest finite candidate)");
  land_cmd->add_option("--steps", o.steps, "Samples per axis")->capture_default_str();
  land_cmd->add_option("--preset", o.preset, "paper-comparison: range 0.0375, 50 steps");
  land_cmd->add_option("--eval-size", o.eval_size, "Test images per cell")->capture_default_str();

  auto* params_cmd = app.add_subcommand("params", "Print per-module parameter counts");
  params_cmd->add_option("--model", o.model, "Preset: upa16 | upa32 | upa64")->capture_default_str();
  params_cmd->add_option("--classes", o.classes, "Number of classes")->capture_default_str();
  params_cmd->add_option("--seed", o.seed, "Seed")->capture_default_str();
  params_cmd->add_option("--accuracy", o.accuracy, "Accuracy percent for the efficiency printout");
  add_arch(params_cmd, o);

  auto* inspect_cmd = app.add_subcommand("inspect", "Write block feature maps as grayscale images");
  add_shared(inspect_cmd, o);
  add_arch(inspect_cmd, o);
  inspect_cmd->add_option("--checkpoint", o.checkpoint, "Checkpoint file (default: fresh model from flags)");
  inspect_cmd->add_option("--tap", o.tap, "Block path, e.g. layer2.block0")->capture_default_str();
  inspect_cmd->add_option("--source", o.source, "image | noise")->capture_default_str();
  inspect_cmd->add_option("--count", o.count, "Channels to write per group")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (o.threads > 0) kernels::set_num_threads(o.threads);
    if (*train_cmd) return cmd_train(o, argc, argv);
    if (*eval_cmd) return cmd_eval(o, argc, argv);
    if (*land_cmd) return cmd_landscape(o, argc, argv);
    if (*params_cmd) return cmd_params(o);
    if (*inspect_cmd) return cmd_inspect(o, argc, argv);
  } catch (const Failure& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.code;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "data format error: %s\n", e.what());
    return kData;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kUsage;
  } catch (const InputError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return kUsage;
}
