#include "upanets/data/cifar.hpp"

#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "upanets/errors.hpp"

namespace upanets::data {

Index record_bytes(CifarFormat format) { return format == CifarFormat::Cifar10 ? 3073 : 3074; }

int class_count(CifarFormat format) { return format == CifarFormat::Cifar10 ? 10 : 100; }

LabeledImage load_cifar_record(std::span<const std::uint8_t> bytes, CifarFormat format, Index offset) {
  const Index expected = record_bytes(format);
  if (static_cast<Index>(bytes.size()) != expected) {
    throw FormatError("record at byte offset " + std::to_string(offset) + " has " + std::to_string(bytes.size()) +
                      " bytes, expected " + std::to_string(expected));
  }
  const std::size_t header = format == CifarFormat::Cifar10 ? 1 : 2;
  LabeledImage img;
  img.label = bytes[header - 1];
  if (img.label >= class_count(format)) {
    throw FormatError("record at byte offset " + std::to_string(offset) + " has label " + std::to_string(img.label));
  }
  img.pixels.resize(kImageValues);
  for (Index i = 0; i < kImageValues; ++i) img.pixels[i] = static_cast<float>(bytes[header + i]) / 255.0F;
  return img;
}

ImageSet parse_cifar_batch(std::span<const std::uint8_t> bytes, CifarFormat format) {
  const auto record = static_cast<std::size_t>(record_bytes(format));
  if (bytes.size() % record != 0) {
    const std::size_t tail = bytes.size() - bytes.size() % record;
    throw FormatError("truncated record at byte offset " + std::to_string(tail) + " (" +
                      std::to_string(bytes.size() % record) + " trailing bytes)");
  }
  ImageSet set;
  set.classes = class_count(format);
  const std::size_t count = bytes.size() / record;
  set.pixels.reserve(count * kImageValues);
  set.labels.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    set.append(load_cifar_record(bytes.subspan(i * record, record), format, static_cast<Index>(i * record)));
  }
  return set;
}

ImageSet load_cifar_file(const std::filesystem::path& path, CifarFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_cifar_batch(bytes, format);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

namespace {

std::filesystem::path locate(const std::filesystem::path& dir, const std::string& archive_dir,
                             const std::string& file) {
  for (const auto& candidate : {dir / file, dir / archive_dir / file}) {
    if (std::filesystem::is_regular_file(candidate)) return candidate;
  }
  throw DataError("missing dataset file " + (dir / file).string() + " (also looked in " +
                  (dir / archive_dir).string() + ")");
}

void extend(ImageSet& into, const ImageSet& part) {
  into.classes = part.classes;
  into.pixels.insert(into.pixels.end(), part.pixels.begin(), part.pixels.end());
  into.labels.insert(into.labels.end(), part.labels.begin(), part.labels.end());
}

}  // namespace

DatasetSplits load_cifar_dir(const std::filesystem::path& dir, CifarFormat format) {
  DatasetSplits splits;
  if (format == CifarFormat::Cifar10) {
    const std::string archive = "cifar-10-batches-bin";
    for (int b = 1; b <= 5; ++b) {
      extend(splits.train, load_cifar_file(locate(dir, archive, "data_batch_" + std::to_string(b) + ".bin"), format));
    }
    splits.test = load_cifar_file(locate(dir, archive, "test_batch.bin"), format);
  } else {
    const std::string archive = "cifar-100-binary";
    splits.train = load_cifar_file(locate(dir, archive, "train.bin"), format);
    splits.test = load_cifar_file(locate(dir, archive, "test.bin"), format);
  }
  return splits;
}

}  // namespace upanets::data
