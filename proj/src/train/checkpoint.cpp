#include "upanets/train/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "upanets/errors.hpp"

namespace upanets::train {

namespace {

constexpr std::uint8_t kMagic[4] = {'U', 'P', 'A', 'C'};
constexpr std::uint8_t kFloat32 = 0;
constexpr std::string_view kMetaPrefix = "meta.";
constexpr std::string_view kOverridePrefix = "meta.override.";

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  template <typename U>
  void le(U value) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
  }
  void f32(float value) { le(std::bit_cast<std::uint32_t>(value)); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::span<const std::uint8_t> bytes(std::size_t n, const char* what) {
    if (in_.size() - pos_ < n) {
      throw FormatError("checkpoint truncated while reading " + std::string(what) + " at byte " +
                        std::to_string(pos_));
    }
    auto out = in_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  template <typename U>
  U le(const char* what) {
    auto b = bytes(sizeof(U), what);
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(static_cast<U>(b[i]) << (8 * i));
    return value;
  }
  [[nodiscard]] std::size_t position() const { return pos_; }
  [[nodiscard]] std::size_t remaining() const { return in_.size() - pos_; }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

void add_meta(Checkpoint& ck, const std::string& name, std::vector<float> values) {
  ck.entries.push_back({name, {static_cast<std::uint32_t>(values.size())}, std::move(values)});
}

std::vector<float> override_values(const nn::BlockOverrides& o) {
  return {o.use_cpa ? 1.0F : 0.0F, static_cast<float>(o.groups), o.shuffle ? 1.0F : 0.0F};
}

const std::vector<float>& meta_values(const Checkpoint& ck, std::string_view key, std::size_t length) {
  const std::string name = std::string(kMetaPrefix) + std::string(key);
  const CheckpointEntry* e = ck.find(name);
  if (e == nullptr) throw FormatError("checkpoint lacks metadata entry " + name);
  if (e->values.size() != length) throw FormatError("checkpoint metadata entry " + name + " has wrong length");
  return e->values;
}

nn::BlockOverrides parse_override(const std::vector<float>& v, const std::string& name) {
  if (v.size() != 3) throw FormatError("checkpoint override entry " + name + " has wrong length");
  nn::BlockOverrides o;
  o.use_cpa = v[0] != 0.0F;
  o.groups = static_cast<Index>(v[1]);
  o.shuffle = v[2] != 0.0F;
  return o;
}

}  // namespace

const CheckpointEntry* Checkpoint::find(std::string_view name) const {
  auto it = std::find_if(entries.begin(), entries.end(), [&](const CheckpointEntry& e) { return e.name == name; });
  return it == entries.end() ? nullptr : &*it;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint) {
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.le<std::uint32_t>(checkpoint.format_version);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(checkpoint.entries.size()));
  for (const auto& e : checkpoint.entries) {
    if (e.name.empty() || e.name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw FormatError("checkpoint entry name must have 1..65535 bytes");
    }
    if (e.extents.size() > std::numeric_limits<std::uint8_t>::max()) throw FormatError("rank too large: " + e.name);
    std::size_t count = 1;
    for (auto x : e.extents) count *= x;
    if (count != e.values.size()) throw FormatError("entry " + e.name + " extents disagree with value count");
    w.le<std::uint16_t>(static_cast<std::uint16_t>(e.name.size()));
    w.bytes(e.name.data(), e.name.size());
    w.le<std::uint8_t>(kFloat32);
    w.le<std::uint8_t>(static_cast<std::uint8_t>(e.extents.size()));
    for (auto x : e.extents) w.le<std::uint32_t>(x);
    for (float v : e.values) w.f32(v);
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  auto magic = r.bytes(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), std::begin(kMagic))) throw FormatError("not a checkpoint: bad magic");
  Checkpoint ck;
  ck.format_version = r.le<std::uint32_t>("version");
  if (ck.format_version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(ck.format_version));
  }
  const auto count = r.le<std::uint32_t>("entry count");
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    const auto name_len = r.le<std::uint16_t>("name length");
    if (name_len == 0) throw FormatError("empty entry name at byte " + std::to_string(r.position()));
    auto name = r.bytes(name_len, "name");
    e.name.assign(name.begin(), name.end());
    const auto dtype = r.le<std::uint8_t>("dtype");
    if (dtype != kFloat32) throw FormatError("entry " + e.name + " has unknown dtype " + std::to_string(dtype));
    const auto rank = r.le<std::uint8_t>("rank");
    std::uint64_t total = 1;
    for (std::uint8_t k = 0; k < rank; ++k) {
      e.extents.push_back(r.le<std::uint32_t>("extent"));
      total *= e.extents.back();
      if (total > r.remaining() / 4) throw FormatError("entry " + e.name + " extends past end of checkpoint");
    }
    e.values.resize(total);
    for (auto& v : e.values) v = std::bit_cast<float>(r.le<std::uint32_t>("values"));
    if (ck.find(e.name) != nullptr) throw FormatError("duplicate checkpoint entry " + e.name);
    ck.entries.push_back(std::move(e));
  }
  if (r.remaining() != 0) {
    throw FormatError("checkpoint has " + std::to_string(r.remaining()) + " trailing bytes");
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const auto bytes = encode_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

Checkpoint make_checkpoint(const std::vector<nn::NamedTensor<float>>& state, const CheckpointMeta& meta) {
  Checkpoint ck;
  for (const auto& t : state) {
    CheckpointEntry e;
    e.name = t.name;
    for (auto x : t.tensor.shape().dims()) e.extents.push_back(static_cast<std::uint32_t>(x));
    e.values.assign(t.tensor.values().begin(), t.tensor.values().end());
    ck.entries.push_back(std::move(e));
  }
  const auto& c = meta.config;
  add_meta(ck, "meta.architecture",
           {static_cast<float>(c.base_width), static_cast<float>(c.depth), static_cast<float>(c.classes),
            static_cast<float>(c.image_size), static_cast<float>(static_cast<int>(c.exc_mode)),
            c.spa_bias ? 1.0F : 0.0F});
  add_meta(ck, "meta.ablation", override_values(c.ablation));
  for (const auto& [path, o] : c.block_overrides) add_meta(ck, std::string(kOverridePrefix) + path, override_values(o));
  add_meta(ck, "meta.epoch", {static_cast<float>(meta.epoch)});
  add_meta(ck, "meta.best_accuracy", {static_cast<float>(meta.best_accuracy)});
  add_meta(ck, "meta.normalization",
           {meta.norm.mean[0], meta.norm.mean[1], meta.norm.mean[2], meta.norm.std[0], meta.norm.std[1],
            meta.norm.std[2]});
  return ck;
}

Checkpoint make_checkpoint(const nn::UpaNets<float>& model, const CheckpointMeta& meta) {
  return make_checkpoint(model.state(), meta);
}

CheckpointMeta read_meta(const Checkpoint& checkpoint) {
  CheckpointMeta meta;
  const auto& arch = meta_values(checkpoint, "architecture", 6);
  auto& c = meta.config;
  c.base_width = static_cast<Index>(arch[0]);
  c.depth = static_cast<Index>(arch[1]);
  c.classes = static_cast<Index>(arch[2]);
  c.image_size = static_cast<Index>(arch[3]);
  const int mode = static_cast<int>(arch[4]);
  if (mode < 0 || mode > static_cast<int>(nn::ExcMode::ExcSpaAndGap)) throw FormatError("checkpoint has bad exc mode");
  c.exc_mode = static_cast<nn::ExcMode>(mode);
  c.spa_bias = arch[5] != 0.0F;
  c.ablation = parse_override(meta_values(checkpoint, "ablation", 3), "meta.ablation");
  for (const auto& e : checkpoint.entries) {
    if (e.name.starts_with(kOverridePrefix)) {
      c.block_overrides[e.name.substr(kOverridePrefix.size())] = parse_override(e.values, e.name);
    }
  }
  meta.epoch = static_cast<int>(meta_values(checkpoint, "epoch", 1)[0]);
  meta.best_accuracy = meta_values(checkpoint, "best_accuracy", 1)[0];
  const auto& norm = meta_values(checkpoint, "normalization", 6);
  for (int k = 0; k < 3; ++k) {
    meta.norm.mean[k] = norm[k];
    meta.norm.std[k] = norm[3 + k];
  }
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint describes an invalid model: ") + e.what());
  }
  return meta;
}

void load_state(nn::Module<float>& model, const Checkpoint& checkpoint) {
  std::size_t tensor_entries = 0;
  for (const auto& e : checkpoint.entries) {
    if (!e.name.starts_with(kMetaPrefix)) ++tensor_entries;
  }
  auto state = model.state();
  if (tensor_entries != state.size()) {
    throw FormatError("checkpoint holds " + std::to_string(tensor_entries) + " tensors, model expects " +
                      std::to_string(state.size()));
  }
  for (auto& t : state) {
    const CheckpointEntry* e = checkpoint.find(t.name);
    if (e == nullptr) throw FormatError("checkpoint lacks tensor " + t.name);
    const auto dims = t.tensor.shape().dims();
    if (!std::equal(dims.begin(), dims.end(), e->extents.begin(), e->extents.end(),
                    [](Index a, std::uint32_t b) { return a == static_cast<Index>(b); })) {
      throw FormatError("checkpoint tensor " + t.name + " has extents incompatible with " + t.tensor.shape().str());
    }
    std::copy(e->values.begin(), e->values.end(), t.tensor.values().begin());
  }
}

std::unique_ptr<nn::UpaNets<float>> model_from_checkpoint(const Checkpoint& checkpoint, CheckpointMeta* meta) {
  CheckpointMeta m = read_meta(checkpoint);
  auto model = nn::build_upanets<float>(m.config, 0);
  load_state(*model, checkpoint);
  if (meta != nullptr) *meta = m;
  return model;
}

std::vector<nn::NamedTensor<float>> snapshot_state(const nn::Module<float>& model) {
  auto state = model.state();
  for (auto& t : state) t.tensor = t.tensor.clone();
  return state;
}

void restore_state(nn::Module<float>& model, const std::vector<nn::NamedTensor<float>>& state) {
  auto live = model.state();
  if (live.size() != state.size()) throw DimensionError("state snapshot does not match the model");
  for (std::size_t i = 0; i < live.size(); ++i) {
    if (live[i].name != state[i].name || live[i].tensor.shape() != state[i].tensor.shape()) {
      throw DimensionError("state snapshot entry " + state[i].name + " does not match " + live[i].name);
    }
    std::copy(state[i].tensor.values().begin(), state[i].tensor.values().end(), live[i].tensor.values().begin());
  }
}

}  // namespace upanets::train
