#include <filesystem>
#include <fstream>
#include <map>

#include "doctest.h"
#include "upanets/data/augment.hpp"
#include "upanets/data/cifar.hpp"
#include "upanets/data/synth.hpp"
#include "upanets/errors.hpp"

using namespace upanets;
using namespace upanets::data;

namespace {

std::vector<std::uint8_t> record(std::uint8_t label, std::uint8_t fill, CifarFormat format) {
  std::vector<std::uint8_t> r;
  if (format == CifarFormat::Cifar100) r.push_back(3);  // coarse label, ignored
  r.push_back(label);
  r.resize(static_cast<std::size_t>(record_bytes(format)), fill);
  return r;
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("upanets_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<float> ramp_image() {
  std::vector<float> img(kImageValues);
  for (Index i = 0; i < kImageValues; ++i) img[i] = static_cast<float>(i % 97) / 97.0F;
  return img;
}

}  // namespace

TEST_SUITE("cifar records") {
  TEST_CASE("label byte then 255s") {
    auto img = load_cifar_record(record(7, 255, CifarFormat::Cifar10), CifarFormat::Cifar10);
    CHECK(img.label == 7);
    REQUIRE(img.pixels.size() == 3072);
    for (float v : img.pixels) CHECK(v == 1.0F);
  }

  TEST_CASE("zero pixels") {
    auto img = load_cifar_record(record(0, 0, CifarFormat::Cifar10), CifarFormat::Cifar10);
    for (float v : img.pixels) CHECK(v == 0.0F);
  }

  TEST_CASE("planar channel order and 1/255 scaling") {
    auto r = record(1, 0, CifarFormat::Cifar10);
    r[1] = 51;            // red (0, 0)
    r[1 + 1024 + 33] = 102;  // green (1, 1)
    r[1 + 2048 + 1023] = 255;  // blue (31, 31)
    auto img = load_cifar_record(r, CifarFormat::Cifar10);
    CHECK(img.pixels[0] == doctest::Approx(0.2));
    CHECK(img.pixels[1024 + 33] == doctest::Approx(0.4));
    CHECK(img.pixels[3071] == 1.0F);
  }

  TEST_CASE("CIFAR-100 uses the fine label") {
    auto img = load_cifar_record(record(88, 10, CifarFormat::Cifar100), CifarFormat::Cifar100);
    CHECK(img.label == 88);
  }

  TEST_CASE("wrong length reports the offset") {
    std::vector<std::uint8_t> shortr(3000, 0);
    try {
      load_cifar_record(shortr, CifarFormat::Cifar10, 6146);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("6146") != std::string::npos);
    }
    auto batch = record(1, 1, CifarFormat::Cifar10);
    batch.resize(batch.size() + 100);
    CHECK_THROWS_AS(parse_cifar_batch(batch, CifarFormat::Cifar10), FormatError);
  }

  TEST_CASE("batch of 10000 records") {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(10000 * 3073);
    for (int i = 0; i < 10000; ++i) {
      auto r = record(static_cast<std::uint8_t>(i % 10), static_cast<std::uint8_t>(i % 256), CifarFormat::Cifar10);
      bytes.insert(bytes.end(), r.begin(), r.end());
    }
    CHECK(bytes.size() == 10000u * 3073u);
    auto set = parse_cifar_batch(bytes, CifarFormat::Cifar10);
    CHECK(set.size() == 10000);
    for (int label : set.labels) CHECK((label >= 0 && label < 10));
    CHECK(set.image(9999)[0] == doctest::Approx((9999 % 256) / 255.0));
  }

  TEST_CASE("directory loader finds files and names missing paths") {
    auto dir = scratch_dir("cifar");
    CHECK_THROWS_AS(load_cifar_dir(dir, CifarFormat::Cifar10), DataError);
    auto sub = dir / "cifar-10-batches-bin";
    std::filesystem::create_directories(sub);
    for (int b = 1; b <= 5; ++b) write_bytes(sub / ("data_batch_" + std::to_string(b) + ".bin"), record(static_cast<std::uint8_t>(b), 9, CifarFormat::Cifar10));
    try {
      load_cifar_dir(dir, CifarFormat::Cifar10);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("test_batch.bin") != std::string::npos);
    }
    write_bytes(sub / "test_batch.bin", record(0, 9, CifarFormat::Cifar10));
    auto splits = load_cifar_dir(dir, CifarFormat::Cifar10);
    CHECK(splits.train.size() == 5);
    CHECK(splits.train.labels == std::vector<int>{1, 2, 3, 4, 5});
    CHECK(splits.test.size() == 1);
    std::filesystem::remove_all(dir);
  }
}

TEST_SUITE("normalization") {
  TEST_CASE("statistics from the training split and text round trip") {
    ImageSet set;
    set.classes = 2;
    LabeledImage a{0, std::vector<float>(kImageValues, 0.0F)};
    LabeledImage b{1, std::vector<float>(kImageValues, 1.0F)};
    set.append(a);
    set.append(b);
    auto norm = Normalization::compute(set);
    for (int c = 0; c < 3; ++c) {
      CHECK(norm.mean[c] == doctest::Approx(0.5));
      CHECK(norm.std[c] == doctest::Approx(0.5));
    }
    auto dir = scratch_dir("norm");
    norm.save(dir / "n.txt");
    std::ifstream in(dir / "n.txt");
    std::string first;
    std::getline(in, first);
    CHECK(first.rfind("mean ", 0) == 0);
    auto loaded = Normalization::load(dir / "n.txt");
    CHECK(loaded.mean == norm.mean);
    CHECK(loaded.std == norm.std);
    auto cached = Normalization::cached(dir, set);
    CHECK(std::filesystem::exists(dir / "normalization.txt"));
    CHECK(Normalization::cached(dir, ImageSet{}).mean == cached.mean);
    std::filesystem::remove_all(dir);
  }
}

TEST_SUITE("augmentation") {
  TEST_CASE("pad 0, no flip, identity normalization is the identity") {
    AugmentSpec spec;
    spec.pad = 0;
    spec.hflip_prob = 0.0;
    const auto img = ramp_image();
    std::vector<float> out(kImageValues);
    AugmentRng rng(1);
    augment(img, spec, rng, out);
    CHECK(out == img);
  }

  TEST_CASE("forced flip twice is the identity") {
    AugmentSpec spec;
    spec.pad = 0;
    const auto img = ramp_image();
    std::vector<float> once(kImageValues), twice(kImageValues);
    apply_crop_flip(img, spec, {0, 0, true}, once);
    apply_crop_flip(once, spec, {0, 0, true}, twice);
    CHECK(once != img);
    CHECK(twice == img);
    CHECK(once[31] == img[0]);
  }

  TEST_CASE("crop offset (0,0) of the padded image leaves a 4-pixel zero border top-left") {
    AugmentSpec spec;
    const auto img = ramp_image();
    std::vector<float> out(kImageValues);
    apply_crop_flip(img, spec, {0, 0, false}, out);
    for (Index c = 0; c < 3; ++c)
      for (Index y = 0; y < 32; ++y)
        for (Index x = 0; x < 32; ++x) {
          const float v = out[(c * 32 + y) * 32 + x];
          if (y < 4 || x < 4) {
            CHECK(v == 0.0F);
          } else {
            CHECK(v == img[(c * 32 + y - 4) * 32 + x - 4]);
          }
        }
  }

  TEST_CASE("normalization is per channel") {
    AugmentSpec spec;
    spec.pad = 0;
    spec.norm.mean = {0.5F, 0.0F, 1.0F};
    spec.norm.std = {0.5F, 2.0F, 1.0F};
    std::vector<float> img(kImageValues, 1.0F), out(kImageValues);
    apply_crop_flip(img, spec, {}, out);
    CHECK(out[0] == 1.0F);
    CHECK(out[1024] == 0.5F);
    CHECK(out[2048] == 0.0F);
  }

  TEST_CASE("draws cover the offset range and flip roughly half the time") {
    AugmentSpec spec;
    AugmentRng rng(5);
    std::map<int, int> offsets;
    int flips = 0;
    for (int i = 0; i < 4000; ++i) {
      auto d = draw_crop_flip(spec, rng);
      offsets[d.offset_x]++;
      flips += d.flip;
    }
    CHECK(offsets.size() == 9);
    CHECK(offsets.begin()->first == 0);
    CHECK(offsets.rbegin()->first == 8);
    CHECK(flips > 1800);
    CHECK(flips < 2200);
  }

  TEST_CASE("reproducible under a derived seed") {
    AugmentSpec spec;
    const auto img = ramp_image();
    std::vector<float> a(kImageValues), b(kImageValues);
    AugmentRng r1(derive_seed(3, 2, 17)), r2(derive_seed(3, 2, 17));
    augment(img, spec, r1, a);
    augment(img, spec, r2, b);
    CHECK(a == b);
    CHECK(derive_seed(3, 2, 17) != derive_seed(3, 2, 18));
    CHECK(derive_seed(3, 2, 17) != derive_seed(3, 3, 17));
  }

  TEST_CASE("invalid specs") {
    AugmentSpec spec;
    spec.pad = -1;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    spec.pad = 4;
    spec.norm.std[1] = 0.0F;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
  }
}

TEST_SUITE("synthetic blobs") {
  TEST_CASE("same seed, same data; labels balanced") {
    auto a = synth_blobs(3, 100, 9);
    auto b = synth_blobs(3, 100, 9);
    CHECK(a.pixels == b.pixels);
    CHECK(a.labels == b.labels);
    std::map<int, int> hist;
    for (int l : a.labels) hist[l]++;
    CHECK(hist.size() == 3);
    for (auto [label, count] : hist) CHECK(std::abs(count - 100 / 3) <= 1);
    CHECK(synth_blobs(3, 100, 10).pixels != a.pixels);
    for (float v : a.pixels) CHECK((v >= 0.0F && v <= 1.0F));
    CHECK_THROWS_AS(synth_blobs(1, 10, 0), ConfigError);
  }

  TEST_CASE("a linear probe on raw pixels separates two classes perfectly") {
    auto set = synth_blobs(2, 200, 4);
    // Perceptron on flattened pixels plus a bias; separability guarantees convergence.
    std::vector<double> w(kImageValues, 0.0);
    double bias = 0.0;
    int errors = 1;
    for (int epoch = 0; epoch < 100 && errors > 0; ++epoch) {
      errors = 0;
      for (Index i = 0; i < set.size(); ++i) {
        const auto x = set.image(i);
        double s = bias;
        for (Index j = 0; j < kImageValues; ++j) s += w[j] * x[j];
        const double y = set.labels[i] == 1 ? 1.0 : -1.0;
        if (s * y <= 0.0) {
          ++errors;
          for (Index j = 0; j < kImageValues; ++j) w[j] += y * x[j];
          bias += y;
        }
      }
    }
    CHECK(errors == 0);
  }
}
