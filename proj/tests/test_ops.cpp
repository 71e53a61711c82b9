#include <cmath>
#include <numeric>

#include "doctest.h"
#include "oracles.hpp"
#include "upanets/errors.hpp"
#include "upanets/gradcheck.hpp"
#include "upanets/ops.hpp"

using namespace upanets;

namespace {

// Weighted sum with fixed pseudo-random weights: a scalar probe that exercises
// every output coordinate with a distinct sensitivity.
TensorD probe_sum(const TensorD& t, std::uint64_t seed = 99) {
  return ops::sum(ops::mul(t, oracle::random_tensor(t.shape(), seed)));
}

void check_grad(const std::string& name, const ScalarFunction<double>& fn, std::vector<TensorD> inputs,
                double tol = 1e-4) {
  const auto report = grad_check<double>(name, fn, std::move(inputs));
  INFO(name << " max_rel_error=" << report.max_rel_error << " at " << report.worst_index);
  CHECK(report.max_rel_error < tol);
}

}  // namespace

TEST_SUITE("conv2d") {
  TEST_CASE("all-ones 3x3 with pad 1 counts overlaps") {
    TensorD x(Shape{1, 1, 3, 3}, 1.0);
    TensorD k(Shape{1, 1, 3, 3}, 1.0);
    auto y = ops::conv2d(x, k, nullptr, 1, 1, 1);
    CHECK(y.shape() == Shape{1, 1, 3, 3});
    CHECK(y.values()[4] == 9.0);
    for (int corner : {0, 2, 6, 8}) CHECK(y.values()[corner] == 4.0);
  }

  TEST_CASE("centre-tap kernel is the identity") {
    auto x = oracle::random_tensor(Shape{2, 1, 5, 5}, 1);
    TensorD k(Shape{1, 1, 3, 3}, 0.0);
    k.values()[4] = 1.0;
    auto y = ops::conv2d(x, k, nullptr, 1, 1, 1);
    CHECK(oracle::values(y) == oracle::values(x));
  }

  TEST_CASE("matches six-loop direct summation") {
    auto x = oracle::random_tensor(Shape{2, 3, 5, 5}, 2);
    auto k = oracle::random_tensor(Shape{4, 3, 3, 3}, 3);
    auto b = oracle::random_tensor(Shape{4}, 4);
    for (int stride : {1, 2}) {
      for (int pad : {0, 1}) {
        auto y = ops::conv2d(x, k, &b, stride, pad, 1);
        const auto bias = oracle::values(b);
        const auto expect = oracle::conv2d(oracle::values(x), 2, 3, 5, 5, oracle::values(k), 4, 3, 3, stride, pad, 1, &bias);
        CHECK(oracle::max_abs_diff(oracle::values(y), expect) < 1e-12);
      }
    }
  }

  TEST_CASE("grouped conv equals independent convs on channel slices") {
    for (Index g : {1, 2, 4}) {
      auto x = oracle::random_tensor(Shape{2, 8, 6, 6}, 10 + g);
      auto k = oracle::random_tensor(Shape{8, 8 / g, 3, 3}, 20 + g);
      auto y = ops::conv2d(x, k, nullptr, 1, 1, g);
      std::vector<TensorD> parts;
      const Index per = 8 / g;
      for (Index gi = 0; gi < g; ++gi) {
        auto xs = ops::slice_channels(x, gi * per, per);
        auto kv = k.values().subspan(static_cast<std::size_t>(gi * per * per * 9), static_cast<std::size_t>(per * per * 9));
        TensorD ks(Shape{per, per, 3, 3}, std::vector<double>(kv.begin(), kv.end()));
        parts.push_back(ops::conv2d(xs, ks, nullptr, 1, 1, 1));
      }
      auto joined = ops::concat_channels<double>(parts);
      CHECK(oracle::max_abs_diff(oracle::values(y), oracle::values(joined)) < 1e-12);
    }
  }

  TEST_CASE("errors") {
    TensorD x(Shape{1, 3, 4, 4}, 1.0);
    CHECK_THROWS_AS(ops::conv2d(x, TensorD(Shape{2, 2, 3, 3}), nullptr, 1, 1, 1), DimensionError);
    CHECK_THROWS_AS(ops::conv2d(x, TensorD(Shape{2, 1, 3, 3}), nullptr, 1, 1, 2), ConfigError);
    CHECK_THROWS_AS(ops::conv2d(TensorD(Shape{1, 1, 4, 4}), TensorD(Shape{1, 1, 3, 3}), nullptr, 2, 0, 1), ConfigError);
    CHECK_THROWS_AS(ops::conv2d(x, TensorD(Shape{1, 3, 7, 7}), nullptr, 1, 1, 1), DimensionError);
  }

  TEST_CASE("gradients match finite differences") {
    auto x = oracle::random_tensor(Shape{1, 2, 4, 4}, 5);
    auto k = oracle::random_tensor(Shape{3, 2, 3, 3}, 6);
    auto b = oracle::random_tensor(Shape{3}, 7);
    check_grad("conv2d", [](std::span<const TensorD> in) { return probe_sum(ops::conv2d(in[0], in[1], &in[2], 1, 1, 1)); },
               {x, k, b});
    auto kg = oracle::random_tensor(Shape{4, 1, 3, 3}, 8);
    check_grad("conv2d_grouped_stride2",
               [](std::span<const TensorD> in) { return probe_sum(ops::conv2d(in[0], in[1], nullptr, 2, 1, 2)); },
               {oracle::random_tensor(Shape{2, 2, 5, 5}, 9), kg});
  }
}

TEST_SUITE("avgpool2d") {
  TEST_CASE("2x2 mean") {
    TensorD x(Shape{1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
    CHECK(ops::avgpool2d(x, 2, 2).item() == 2.5);
  }

  TEST_CASE("constant input halves resolution") {
    auto y = ops::avgpool2d(TensorD(Shape{2, 3, 8, 8}, 1.75), 2, 2);
    CHECK(y.shape() == Shape{2, 3, 4, 4});
    for (double v : y.values()) CHECK(v == 1.75);
  }

  TEST_CASE("matches direct window mean") {
    auto x = oracle::random_tensor(Shape{1, 2, 4, 4}, 11);
    auto y = ops::avgpool2d(x, 2, 2);
    CHECK(oracle::max_abs_diff(oracle::values(y), oracle::window_mean(oracle::values(x), 2, 4, 4, 2, 2)) < 1e-12);
  }

  TEST_CASE("indivisible extent is a configuration error") {
    CHECK_THROWS_AS(ops::avgpool2d(TensorD(Shape{1, 1, 5, 5}), 2, 2), ConfigError);
  }

  TEST_CASE("gradient") {
    check_grad("avgpool2d", [](std::span<const TensorD> in) { return probe_sum(ops::avgpool2d(in[0], 2, 2)); },
               {oracle::random_tensor(Shape{2, 2, 4, 4}, 12)});
  }
}

TEST_SUITE("matmul") {
  TEST_CASE("identity right factor") {
    auto a = oracle::random_tensor(Shape{3, 4}, 13);
    TensorD eye(Shape{4, 4}, 0.0);
    for (int i = 0; i < 4; ++i) eye.values()[i * 5] = 1.0;
    CHECK(oracle::values(ops::matmul(a, eye)) == oracle::values(a));
  }

  TEST_CASE("hand example") {
    TensorD a(Shape{2, 2}, std::vector<double>{1, 2, 3, 4});
    TensorD b(Shape{2, 1}, std::vector<double>{1, 1});
    CHECK(oracle::values(ops::matmul(a, b)) == std::vector<double>{3, 7});
  }

  TEST_CASE("matches triple loop, including batched left factor") {
    auto a = oracle::random_tensor(Shape{3, 4}, 14);
    auto b = oracle::random_tensor(Shape{4, 2}, 15);
    CHECK(oracle::max_abs_diff(oracle::values(ops::matmul(a, b)), oracle::matmul(oracle::values(a), oracle::values(b), 3, 4, 2)) < 1e-12);
    auto a3 = oracle::random_tensor(Shape{2, 3, 4}, 16);
    CHECK(oracle::max_abs_diff(oracle::values(ops::matmul(a3, b)), oracle::matmul(oracle::values(a3), oracle::values(b), 6, 4, 2)) < 1e-12);
  }

  TEST_CASE("inner mismatch") {
    CHECK_THROWS_AS(ops::matmul(TensorD(Shape{2, 3}), TensorD(Shape{2, 2})), DimensionError);
  }

  TEST_CASE("gradient") {
    check_grad("matmul", [](std::span<const TensorD> in) { return probe_sum(ops::matmul(in[0], in[1])); },
               {oracle::random_tensor(Shape{2, 3, 4}, 17), oracle::random_tensor(Shape{4, 5}, 18)});
  }
}

TEST_SUITE("batchnorm2d") {
  TEST_CASE("constant channels normalize to zero") {
    TensorD x(Shape{2, 2, 3, 3}, 0.0);
    for (Index i = 0; i < x.numel(); ++i) x.values()[i] = ((i / 9) % 2 == 0) ? 3.0 : -1.0;
    BatchNormStats<double> stats(2);
    auto y = ops::batchnorm2d(x, TensorD(Shape{2}, 1.0), TensorD(Shape{2}, 0.0), stats, Mode::Train);
    for (double v : y.values()) CHECK(v == doctest::Approx(0.0));
  }

  TEST_CASE("zero gain gives the shift") {
    BatchNormStats<double> stats(2);
    TensorD beta(Shape{2}, std::vector<double>{0.5, -2.0});
    auto y = ops::batchnorm2d(oracle::random_tensor(Shape{2, 2, 3, 3}, 19), TensorD(Shape{2}, 0.0), beta, stats, Mode::Train);
    for (Index i = 0; i < y.numel(); ++i) CHECK(y.values()[i] == beta.values()[(i / 9) % 2]);
  }

  TEST_CASE("train-mode moments and running-stat update") {
    auto x = oracle::random_tensor(Shape{4, 3, 5, 5}, 20, -2.0, 3.0);
    BatchNormStats<double> stats(3);
    auto y = ops::batchnorm2d(x, TensorD(Shape{3}, 1.0), TensorD(Shape{3}, 0.0), stats, Mode::Train);
    for (int c = 0; c < 3; ++c) {
      double s = 0.0, sq = 0.0, xs = 0.0, xsq = 0.0;
      const int m = 4 * 25;
      for (int n = 0; n < 4; ++n)
        for (int p = 0; p < 25; ++p) {
          const std::size_t i = (n * 3 + c) * 25 + p;
          s += y.values()[i];
          sq += y.values()[i] * y.values()[i];
          xs += x.values()[i];
          xsq += x.values()[i] * x.values()[i];
        }
      CHECK(std::abs(s / m) < 1e-5);
      CHECK(std::abs(sq / m - 1.0) < 1e-5);
      const double mean = xs / m;
      const double unbiased = (xsq - m * mean * mean) / (m - 1);
      CHECK(stats.running_mean.values()[c] == doctest::Approx(0.1 * mean).epsilon(1e-12));
      CHECK(stats.running_var.values()[c] == doctest::Approx(0.9 + 0.1 * unbiased).epsilon(1e-12));
    }
    CHECK(stats.initialized());
  }

  TEST_CASE("eval uses running statistics and rejects uninitialized stats") {
    BatchNormStats<double> fresh(1);
    TensorD g(Shape{1}, 1.0), b(Shape{1}, 0.0);
    CHECK_THROWS_AS(ops::batchnorm2d(TensorD(Shape{1, 1, 2, 2}, 1.0), g, b, fresh, Mode::Eval), StateError);
    BatchNormStats<double> stats(1);
    stats.running_mean.values()[0] = 2.0;
    stats.running_var.values()[0] = 4.0;
    stats.tracked.values()[0] = 1.0;
    auto y = ops::batchnorm2d(TensorD(Shape{1, 1, 1, 1}, 6.0), g, b, stats, Mode::Eval);
    CHECK(y.item() == doctest::Approx(4.0 / std::sqrt(4.0 + 1e-5)));
    CHECK(stats.running_mean.values()[0] == 2.0);
  }

  TEST_CASE("gain length mismatch") {
    BatchNormStats<double> stats(3);
    CHECK_THROWS_AS(ops::batchnorm2d(TensorD(Shape{1, 3, 2, 2}), TensorD(Shape{2}), TensorD(Shape{3}), stats, Mode::Train),
                    DimensionError);
  }

  TEST_CASE("train-mode gradient") {
    check_grad("batchnorm2d",
               [](std::span<const TensorD> in) {
                 BatchNormStats<double> stats(2);
                 return probe_sum(ops::batchnorm2d(in[0], in[1], in[2], stats, Mode::Train));
               },
               {oracle::random_tensor(Shape{2, 2, 3, 3}, 21), oracle::random_tensor(Shape{2}, 22, 0.5, 1.5),
                oracle::random_tensor(Shape{2}, 23)});
  }
}

TEST_SUITE("layernorm") {
  TEST_CASE("normalizes the last extent") {
    auto x = oracle::random_tensor(Shape{1, 2, 3, 4}, 24, -3.0, 5.0);
    TensorD g(Shape{4}, 1.0), b(Shape{4}, 0.0);
    auto y = ops::layernorm(x, &g, &b, 1);
    for (int row = 0; row < 6; ++row) {
      double s = 0.0, sq = 0.0;
      for (int j = 0; j < 4; ++j) {
        s += y.values()[row * 4 + j];
        sq += y.values()[row * 4 + j] * y.values()[row * 4 + j];
      }
      CHECK(std::abs(s / 4) < 1e-6);
      // eps = 1e-5 against a variance of order 1 leaves a deviation near 1e-5 * (1/var).
      CHECK(std::abs(sq / 4 - 1.0) < 1e-4);
    }
  }

  TEST_CASE("zero gain, shift 5") {
    TensorD g(Shape{3, 4}, 0.0), b(Shape{3, 4}, 5.0);
    auto y = ops::layernorm(oracle::random_tensor(Shape{2, 3, 4}, 25), &g, &b, 2);
    for (double v : y.values()) CHECK(v == 5.0);
  }

  TEST_CASE("affine-free layernorm of a standardized vector is unchanged") {
    auto x = oracle::random_tensor(Shape{1, 16}, 26);
    double mean = 0.0;
    for (double v : x.values()) mean += v / 16;
    double var = 0.0;
    for (double v : x.values()) var += (v - mean) * (v - mean) / 16;
    for (double& v : x.values()) v = (v - mean) / std::sqrt(var);
    auto y = ops::layernorm<double>(x, nullptr, nullptr, 1, 1e-12);
    CHECK(oracle::max_abs_diff(oracle::values(y), oracle::values(x)) < 1e-6);
  }

  TEST_CASE("extent mismatch") {
    TensorD g(Shape{3}, 1.0);
    CHECK_THROWS_AS(ops::layernorm(TensorD(Shape{2, 4}), &g, &g, 1), DimensionError);
  }

  TEST_CASE("gradient, with and without affine") {
    check_grad("layernorm",
               [](std::span<const TensorD> in) { return probe_sum(ops::layernorm(in[0], &in[1], &in[2], 2)); },
               {oracle::random_tensor(Shape{2, 3, 4}, 27), oracle::random_tensor(Shape{3, 4}, 28),
                oracle::random_tensor(Shape{3, 4}, 29)});
    check_grad("layernorm_plain",
               [](std::span<const TensorD> in) { return probe_sum(ops::layernorm<double>(in[0], nullptr, nullptr, 3)); },
               {oracle::random_tensor(Shape{2, 2, 3, 3}, 30)});
  }
}

TEST_SUITE("activations and loss") {
  TEST_CASE("relu") {
    TensorD x(Shape{4}, std::vector<double>{-1, 0, 2, -3});
    CHECK(oracle::values(ops::relu(x)) == std::vector<double>{0, 0, 2, 0});
    check_grad("relu", [](std::span<const TensorD> in) { return probe_sum(ops::relu(in[0])); },
               {TensorD(Shape{4}, std::vector<double>{-1.3, 0.7, 2.1, -0.2})});
  }

  TEST_CASE("uniform logits give ln K") {
    std::vector<int> labels{3, 7};
    auto loss = ops::softmax_cross_entropy(TensorD(Shape{2, 10}, 0.25), labels);
    CHECK(loss.item() == doctest::Approx(std::log(10.0)).epsilon(1e-12));
  }

  TEST_CASE("loss vanishes as the margin grows") {
    std::vector<int> labels{1};
    double previous = INFINITY;
    for (double margin : {1.0, 10.0, 100.0, 1000.0}) {
      TensorD z(Shape{1, 3}, 0.0);
      z.values()[1] = margin;
      const double loss = ops::softmax_cross_entropy(z, labels).item();
      CHECK(loss <= previous);
      CHECK(std::isfinite(loss));
      previous = loss;
    }
    CHECK(previous < 1e-300);
  }

  TEST_CASE("matches explicit log-sum-exp") {
    auto z = oracle::random_tensor(Shape{4, 10}, 31, -3.0, 3.0);
    std::vector<int> labels{0, 9, 4, 4};
    CHECK(std::abs(ops::softmax_cross_entropy(z, labels).item() - oracle::cross_entropy(oracle::values(z), 4, 10, labels)) < 1e-10);
    check_grad("softmax_cross_entropy",
               [labels](std::span<const TensorD> in) { return ops::softmax_cross_entropy(in[0], labels); }, {z});
  }

  TEST_CASE("out-of-range label") {
    std::vector<int> labels{10};
    CHECK_THROWS_AS(ops::softmax_cross_entropy(TensorD(Shape{1, 10}), labels), InputError);
    labels[0] = -1;
    CHECK_THROWS_AS(ops::softmax_cross_entropy(TensorD(Shape{1, 10}), labels), InputError);
  }
}

TEST_SUITE("concat and slicing") {
  TEST_CASE("single part is the identity") {
    auto x = oracle::random_tensor(Shape{2, 3, 2, 2}, 32);
    std::vector<TensorD> parts{x};
    CHECK(oracle::values(ops::concat_channels<double>(parts)) == oracle::values(x));
  }

  TEST_CASE("order preserved and slices recover parts exactly") {
    auto a = oracle::random_tensor(Shape{2, 2, 3, 3}, 33);
    auto b = oracle::random_tensor(Shape{2, 3, 3, 3}, 34);
    std::vector<TensorD> parts{a, b};
    auto joined = ops::concat_channels<double>(parts);
    CHECK(joined.shape() == Shape{2, 5, 3, 3});
    CHECK(oracle::values(ops::slice_channels(joined, 0, 2)) == oracle::values(a));
    CHECK(oracle::values(ops::slice_channels(joined, 2, 3)) == oracle::values(b));
  }

  TEST_CASE("spatial mismatch") {
    std::vector<TensorD> parts{TensorD(Shape{1, 2, 3, 3}), TensorD(Shape{1, 2, 4, 3})};
    CHECK_THROWS_AS(ops::concat_channels<double>(parts), DimensionError);
  }

  TEST_CASE("sum-loss gradient splits back to the parts") {
    TensorD a(Shape{1, 2, 2, 2}, 1.0), b(Shape{1, 3, 2, 2}, 2.0);
    a.set_requires_grad(true);
    b.set_requires_grad(true);
    std::vector<TensorD> parts{a, b};
    ops::sum(ops::concat_channels<double>(parts)).backward();
    for (double g : a.grad()) CHECK(g == 1.0);
    for (double g : b.grad()) CHECK(g == 1.0);
    check_grad("concat_channels",
               [](std::span<const TensorD> in) {
                 std::vector<TensorD> p(in.begin(), in.end());
                 return probe_sum(ops::concat_channels<double>(p));
               },
               {oracle::random_tensor(Shape{2, 2, 2, 2}, 35), oracle::random_tensor(Shape{2, 1, 2, 2}, 36)});
    check_grad("slice_channels", [](std::span<const TensorD> in) { return probe_sum(ops::slice_channels(in[0], 1, 2)); },
               {oracle::random_tensor(Shape{2, 4, 2, 2}, 37)});
  }
}

TEST_SUITE("layout and pooling helpers") {
  TEST_CASE("channel shuffle transposes group and index") {
    TensorD x(Shape{1, 6, 1, 1}, std::vector<double>{0, 1, 2, 3, 4, 5});
    // Groups of 3 channels: (0,1,2)(3,4,5) -> 0,3,1,4,2,5.
    CHECK(oracle::values(ops::channel_shuffle(x, 2)) == std::vector<double>{0, 3, 1, 4, 2, 5});
    CHECK(oracle::values(ops::channel_shuffle(x, 1)) == oracle::values(x));
    CHECK_THROWS_AS(ops::channel_shuffle(x, 4), ConfigError);
    check_grad("channel_shuffle", [](std::span<const TensorD> in) { return probe_sum(ops::channel_shuffle(in[0], 2)); },
               {oracle::random_tensor(Shape{2, 4, 2, 2}, 38)});
  }

  TEST_CASE("channels-last round trip") {
    auto x = oracle::random_tensor(Shape{2, 3, 2, 4}, 39);
    auto cl = ops::to_channels_last(x);
    CHECK(cl.shape() == Shape{2, 8, 3});
    CHECK(cl.values()[(1 * 8 + 5) * 3 + 2] == x.values()[((1 * 3 + 2) * 2 + 1) * 4 + 1]);
    CHECK(oracle::values(ops::from_channels_last(cl, 2, 4)) == oracle::values(x));
    check_grad("channels_last", [](std::span<const TensorD> in) { return probe_sum(ops::to_channels_last(in[0])); },
               {oracle::random_tensor(Shape{2, 3, 2, 2}, 40)});
  }

  TEST_CASE("gap and spatial attention") {
    TensorD x(Shape{1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
    CHECK(ops::gap(x).item() == 2.5);
    TensorD selector(Shape{4}, std::vector<double>{1, 0, 0, 0});
    CHECK(ops::spatial_attention<double>(x, selector, nullptr).item() == 1.0);
    TensorD bias(Shape{1}, 0.5);
    CHECK(ops::spatial_attention<double>(x, selector, &bias).item() == 1.5);
    CHECK_THROWS_AS(ops::spatial_attention<double>(x, TensorD(Shape{3}), nullptr), DimensionError);
    check_grad("gap", [](std::span<const TensorD> in) { return probe_sum(ops::gap(in[0])); },
               {oracle::random_tensor(Shape{2, 3, 2, 2}, 41)});
    check_grad("spatial_attention",
               [](std::span<const TensorD> in) { return probe_sum(ops::spatial_attention(in[0], in[1], &in[2])); },
               {oracle::random_tensor(Shape{2, 3, 2, 2}, 42), oracle::random_tensor(Shape{4}, 43), TensorD(Shape{1}, 0.1)});
  }

  TEST_CASE("elementwise, bias and reductions") {
    check_grad("add", [](std::span<const TensorD> in) { return probe_sum(ops::add(in[0], in[1])); },
               {oracle::random_tensor(Shape{2, 3}, 44), oracle::random_tensor(Shape{2, 3}, 45)});
    check_grad("mul", [](std::span<const TensorD> in) { return probe_sum(ops::mul(in[0], in[1])); },
               {oracle::random_tensor(Shape{2, 3}, 46), oracle::random_tensor(Shape{2, 3}, 47)});
    check_grad("add_bias", [](std::span<const TensorD> in) { return probe_sum(ops::add_bias(in[0], in[1])); },
               {oracle::random_tensor(Shape{2, 3}, 48), oracle::random_tensor(Shape{3}, 49)});
    check_grad("linear", [](std::span<const TensorD> in) { return probe_sum(ops::linear(in[0], in[1], &in[2])); },
               {oracle::random_tensor(Shape{2, 3}, 50), oracle::random_tensor(Shape{3, 4}, 51), oracle::random_tensor(Shape{4}, 52)});
    check_grad("mean", [](std::span<const TensorD> in) { return ops::mean(ops::mul(in[0], in[0])); },
               {oracle::random_tensor(Shape{5}, 53)});
    check_grad("reshape", [](std::span<const TensorD> in) { return probe_sum(ops::reshape(in[0], Shape{3, 2})); },
               {oracle::random_tensor(Shape{2, 3}, 54)});
  }
}

TEST_CASE("forward passes are bit-identical on repeat") {
  auto x = oracle::random_tensor<float>(Shape{4, 8, 16, 16}, 55);
  auto k = oracle::random_tensor<float>(Shape{16, 8, 3, 3}, 56);
  auto a = ops::conv2d(x, k, nullptr, 1, 1, 1);
  auto b = ops::conv2d(x, k, nullptr, 1, 1, 1);
  CHECK(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
}
