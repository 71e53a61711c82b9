#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "upanets/data/synth.hpp"
#include "upanets/errors.hpp"
#include "upanets/train/checkpoint.hpp"
#include "upanets/train/metrics.hpp"
#include "upanets/train/optim.hpp"
#include "upanets/train/trainer.hpp"

using namespace upanets;
using namespace upanets::train;

namespace {

nn::UpaNetsConfig tiny_config(Index classes = 2) {
  nn::UpaNetsConfig cfg;
  cfg.base_width = 4;
  cfg.classes = classes;
  return cfg;
}

TrainConfig quick_run(int epochs) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 20;
  cfg.seed = 7;
  return cfg;
}

std::vector<float> flat_state(const nn::Module<float>& m) {
  std::vector<float> out;
  for (const auto& t : m.state()) out.insert(out.end(), t.tensor.values().begin(), t.tensor.values().end());
  return out;
}

}  // namespace

TEST_SUITE("schedule and optimizer") {
  TEST_CASE("cosine schedule endpoints and midpoint") {
    CHECK(cosine_lr(0, 100, 0.1) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(cosine_lr(50, 100, 0.1) == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(cosine_lr(100, 100, 0.1) == 0.0);
    CHECK(cosine_lr(25, 100, 1.0) == doctest::Approx(0.5 * (1.0 + std::sqrt(0.5))));
    CHECK_THROWS_AS(cosine_lr(0, 0, 0.1), ConfigError);
    CHECK_THROWS_AS(cosine_lr(101, 100, 0.1), ConfigError);
  }

  TEST_CASE("plain step without momentum or decay") {
    std::vector<double> theta{1.0, -2.0}, grad{0.5, 0.25}, v(2, 0.0);
    sgd_step<double>(theta, grad, v, 0.1, 0.0, 0.0, "w");
    CHECK(theta[0] == doctest::Approx(0.95));
    CHECK(theta[1] == doctest::Approx(-2.025));
  }

  TEST_CASE("velocity decays geometrically under zero gradient") {
    std::vector<double> theta{0.0}, grad{1.0}, v{0.0};
    sgd_step<double>(theta, grad, v, 0.0, 0.9, 0.0, "w");
    grad[0] = 0.0;
    for (int k = 1; k <= 5; ++k) {
      sgd_step<double>(theta, grad, v, 0.0, 0.9, 0.0, "w");
      CHECK(v[0] == doctest::Approx(std::pow(0.9, k)).epsilon(1e-14));
    }
  }

  TEST_CASE("two steps on a quadratic follow the hand recurrence") {
    // f = theta^2 / 2, so g = theta.
    const double lr = 0.1, mu = 0.9, wd = 5e-4;
    std::vector<double> theta{2.0}, v{0.0};
    double t = 2.0, vel = 0.0;
    for (int step = 0; step < 2; ++step) {
      std::vector<double> g{theta[0]};
      sgd_step<double>(theta, g, v, lr, mu, wd, "theta");
      const double gp = t + wd * t;
      vel = mu * vel + gp;
      t -= lr * vel;
    }
    CHECK(std::abs(theta[0] - t) < 1e-12);
    CHECK(std::abs(theta[0] - 1.439730005) < 1e-6);
  }

  TEST_CASE("non-finite gradient names the parameter") {
    std::vector<float> theta{1.0F, 1.0F}, grad{0.0F, NAN}, v(2, 0.0F);
    try {
      sgd_step<float>(theta, grad, v, 0.1, 0.9, 0.0, "layer1.block2.conv.weight");
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("layer1.block2.conv.weight") != std::string::npos);
    }
  }

  TEST_CASE("Sgd treats a missing gradient as zero") {
    auto w = Tensor(Shape{2}, std::vector<float>{1.0F, 2.0F});
    w.set_requires_grad(true);
    Sgd opt({{"w", w}}, 0.9, 0.1);
    opt.step(1.0);
    CHECK(w.values()[0] == doctest::Approx(0.9));
    CHECK(w.values()[1] == doctest::Approx(1.8));
  }
}

TEST_SUITE("metrics") {
  TEST_CASE("top-1 accuracy") {
    const std::vector<float> logits{0.1F, 0.9F, 0.8F, 0.2F, 0.5F, 0.5F};
    CHECK(top1_accuracy(logits, 2, std::vector<int>{1, 0, 0}) == 1.0);
    CHECK(top1_accuracy(logits, 2, std::vector<int>{0, 1, 1}) == 0.0);
    CHECK(top1_accuracy(std::span(logits).subspan(4), 2, std::vector<int>{0}) == 1.0);
    CHECK_THROWS(top1_accuracy(logits, 2, std::vector<int>{0}));
  }

  TEST_CASE("a uniform random predictor scores near chance") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> u(0.0F, 1.0F);
    std::uniform_int_distribution<int> label(0, 9);
    std::vector<float> logits(10000);
    std::vector<int> labels(1000);
    for (auto& v : logits) v = u(rng);
    for (auto& l : labels) l = label(rng);
    CHECK(std::abs(top1_accuracy(logits, 10, labels) - 0.1) <= 0.03);
  }

  TEST_CASE("efficiency is accuracy per million parameters") {
    CHECK(efficiency(100.0, 2.0).efficiency == doctest::Approx(50.0));
    CHECK(efficiency(100.0, 4.0).efficiency == doctest::Approx(25.0));
    CHECK(std::abs(efficiency(94.90, 1.485).efficiency - 63.9) < 0.1);
    CHECK_THROWS_AS(efficiency(90.0, 0.0), InputError);
  }
}

TEST_SUITE("checkpoint") {
  TEST_CASE("round trip is bit-exact") {
    nn::UpaNets<float> model(tiny_config(), 5);
    CheckpointMeta meta{tiny_config(), 3, 0.875, {}};
    meta.norm.mean = {0.1F, 0.2F, 0.3F};
    auto ckpt = make_checkpoint(model, meta);
    const auto bytes = encode_checkpoint(ckpt);
    auto back = decode_checkpoint(bytes);
    CHECK(encode_checkpoint(back) == bytes);
    CheckpointMeta read;
    auto rebuilt = model_from_checkpoint(back, &read);
    CHECK(flat_state(*rebuilt) == flat_state(model));
    CHECK(read.epoch == 3);
    CHECK(read.best_accuracy == doctest::Approx(0.875));
    CHECK(read.norm.mean == meta.norm.mean);
    CHECK(read.config.base_width == 4);
  }

  TEST_CASE("ablation settings and overrides survive") {
    auto cfg = tiny_config();
    cfg.base_width = 8;
    cfg.ablation = {false, 2, true};
    cfg.block_overrides["layer2.block0"] = {true, 1, false};
    cfg.exc_mode = nn::ExcMode::ExcGap;
    nn::UpaNets<float> model(cfg, 1);
    CheckpointMeta read;
    auto rebuilt = model_from_checkpoint(decode_checkpoint(encode_checkpoint(make_checkpoint(model, {cfg}))), &read);
    CHECK(read.config.ablation.use_cpa == false);
    CHECK(read.config.ablation.groups == 2);
    CHECK(read.config.ablation.shuffle);
    CHECK(read.config.exc_mode == nn::ExcMode::ExcGap);
    REQUIRE(read.config.block_overrides.count("layer2.block0") == 1);
    CHECK(read.config.block_overrides.at("layer2.block0").use_cpa);
    CHECK(rebuilt->parameter_count() == model.parameter_count());
  }

  TEST_CASE("corruption raises FormatError") {
    nn::UpaNets<float> model(tiny_config(), 5);
    auto bytes = encode_checkpoint(make_checkpoint(model, {tiny_config()}));
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(bad_magic), FormatError);
    auto truncated = bytes;
    truncated.resize(bytes.size() / 2);
    CHECK_THROWS_AS(decode_checkpoint(truncated), FormatError);
    auto trailing = bytes;
    trailing.push_back(0);
    CHECK_THROWS_AS(decode_checkpoint(trailing), FormatError);
    auto bad_version = bytes;
    bad_version[4] = 9;
    CHECK_THROWS_AS(decode_checkpoint(bad_version), FormatError);
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/upanets.ckpt"), DataError);
  }

  TEST_CASE("loading into a different architecture fails") {
    nn::UpaNets<float> small(tiny_config(), 5);
    auto cfg = tiny_config();
    cfg.base_width = 8;
    nn::UpaNets<float> wide(cfg, 5);
    CHECK_THROWS_AS(load_state(wide, make_checkpoint(small, {tiny_config()})), FormatError);
  }

  TEST_CASE("file save and load; evaluation identical after reload") {
    auto splits = data::synth_splits(2, 40, 20, 1);
    auto norm = data::Normalization::compute(splits.train);
    nn::UpaNets<float> model(tiny_config(), 2);
    train::train(model, splits, norm, quick_run(1));
    const auto before = evaluate(model, splits.test, norm);
    auto path = std::filesystem::temp_directory_path() / "upanets_test.ckpt";
    save_checkpoint(path, make_checkpoint(model, {tiny_config(), 1, before.top1, norm}));
    auto reloaded = model_from_checkpoint(load_checkpoint(path));
    const auto after = evaluate(*reloaded, splits.test, norm);
    CHECK(after.top1 == before.top1);
    CHECK(after.loss == before.loss);
    std::filesystem::remove(path);
  }
}

TEST_SUITE("training loop") {
  TEST_CASE("zero learning rate leaves parameters unchanged") {
    auto splits = data::synth_splits(2, 40, 20, 1);
    auto norm = data::Normalization::compute(splits.train);
    nn::UpaNets<float> model(tiny_config(), 2);
    std::vector<float> before;
    for (const auto& p : model.parameters()) before.insert(before.end(), p.tensor.values().begin(), p.tensor.values().end());
    auto cfg = quick_run(1);
    cfg.lr0 = 0.0;
    train::train(model, splits, norm, cfg);
    std::vector<float> after;
    for (const auto& p : model.parameters()) after.insert(after.end(), p.tensor.values().begin(), p.tensor.values().end());
    CHECK(before == after);
  }

  TEST_CASE("same seed, bit-identical history; best is at least final") {
    auto splits = data::synth_splits(2, 40, 20, 1);
    auto norm = data::Normalization::compute(splits.train);
    auto run = [&] {
      nn::UpaNets<float> model(tiny_config(), 2);
      int calls = 0;
      auto result = train::train(model, splits, norm, quick_run(2), [&](const EpochRecord&) { ++calls; });
      CHECK(calls == 2);
      return std::pair{result, flat_state(model)};
    };
    auto [a, sa] = run();
    auto [b, sb] = run();
    REQUIRE(a.history.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(a.history[i].train_loss == b.history[i].train_loss);
      CHECK(a.history[i].test_top1 == b.history[i].test_top1);
      CHECK(a.history[i].epoch == static_cast<int>(i + 1));
    }
    CHECK(sa == sb);
    CHECK(a.best_top1 >= a.history.back().test_top1);
    CHECK(a.history[0].lr == doctest::Approx(0.1));
    CHECK(a.history[1].lr < 0.1);
  }

  TEST_CASE("history CSV and trailing moving average") {
    std::vector<EpochRecord> h{{1, 4.0, 0, 0.5, 0.1}, {2, 2.0, 0, 0.6, 0.05}, {3, 0.0, 0, 0.7, 0.01}};
    const auto csv = history_csv(h);
    CHECK(csv.rfind("epoch,train_loss,test_top1,lr\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
    auto ma = moving_average_loss(h, 2);
    REQUIRE(ma.size() == 3);
    CHECK(ma[0] == 4.0);
    CHECK(ma[1] == 3.0);
    CHECK(ma[2] == 1.0);
  }

  TEST_CASE("invalid configurations") {
    auto cfg = quick_run(1);
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = quick_run(-1);
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }

  TEST_CASE("a non-finite loss stops training with the step index") {
    auto splits = data::synth_splits(2, 40, 20, 1);
    auto norm = data::Normalization::compute(splits.train);
    nn::UpaNets<float> model(tiny_config(), 2);
    model.head_weight.values()[0] = INFINITY;
    try {
      train::train(model, splits, norm, quick_run(1));
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("at step 0") != std::string::npos);
    }
  }
}
