#include "sfseg/segnet.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

namespace sfseg {

void ModelConfig::validate() const {
  if (class_count < 2) throw ConfigError("class_count", "must be at least 2, got " + std::to_string(class_count));
  if (class_count > 256) throw ConfigError("class_count", "must be at most 256");
  if (canvas_width < 32 || canvas_width % 32 != 0) {
    throw ConfigError("canvas", "width must be a positive multiple of 32, got " + std::to_string(canvas_width));
  }
  if (canvas_height < 32 || canvas_height % 32 != 0) {
    throw ConfigError("canvas", "height must be a positive multiple of 32, got " + std::to_string(canvas_height));
  }
  if (width_num < 1 || width_den < 1) throw ConfigError("width_multiplier", "numerator and denominator must be >= 1");
  for (int base : {64, 128, 256, 512}) {
    if ((base * width_num) % width_den != 0) {
      throw ConfigError("width_multiplier", std::to_string(width_num) + "/" + std::to_string(width_den) +
                                                " does not divide the channel width " + std::to_string(base));
    }
  }
  for (int b : blocks) {
    if (b < 1) throw ConfigError("blocks", "every stage needs at least one block");
  }
  // The localization conv needs a 3x3 map at the stage resolution.
  for (int s = 0; s < 3; ++s) {
    const int div = 8 << s;
    if (ate_enabled[s] && (canvas_width / div < 3 || canvas_height / div < 3)) {
      throw ConfigError("ate", "stage " + std::to_string(s + 1) + " is smaller than 3x3 at this canvas");
    }
  }
}

std::int64_t ModelConfig::channels(int base) const {
  return static_cast<std::int64_t>(base) * width_num / width_den;
}

template <typename T>
void Model<T>::visit(const ParamVisitor<T>& fn) {
  stem.visit("stem.conv", fn);
  if (stem_bn) stem_bn->visit("stem.bn", fn);
  for (std::size_t i = 0; i < stage1.size(); ++i) stage1[i].visit("stage1." + std::to_string(i), fn);
  for (std::size_t i = 0; i < stage2.size(); ++i) stage2[i].visit("stage2." + std::to_string(i), fn);
  for (std::size_t i = 0; i < stage3.size(); ++i) stage3[i].visit("stage3." + std::to_string(i), fn);
  for (std::size_t s = 0; s < 3; ++s) {
    if (ates[s]) ates[s]->visit("ate" + std::to_string(s + 1), fn);
  }
  for (std::size_t s = 0; s < 3; ++s) heads[s].visit("score" + std::to_string(s + 1), fn);
}

template <typename T>
void Model<T>::visit_buffers(const BufferVisitor<T>& fn) {
  if (stem_bn) stem_bn->visit_buffers("stem.bn", fn);
  for (std::size_t i = 0; i < stage1.size(); ++i) stage1[i].visit_buffers("stage1." + std::to_string(i), fn);
  for (std::size_t i = 0; i < stage2.size(); ++i) stage2[i].visit_buffers("stage2." + std::to_string(i), fn);
  for (std::size_t i = 0; i < stage3.size(); ++i) stage3[i].visit_buffers("stage3." + std::to_string(i), fn);
}

template <typename T>
std::vector<Tensor<T>> Model<T>::parameters() {
  std::vector<Tensor<T>> out;
  visit([&](const std::string&, Tensor<T>& p) { out.push_back(p); });
  return out;
}

template <typename T>
std::size_t Model<T>::parameter_count() {
  std::size_t n = 0;
  visit([&](const std::string&, Tensor<T>& p) { n += p.numel(); });
  return n;
}

namespace {

enum Stream : std::uint64_t { kStem = 1, kAte = 10, kHead = 20, kStage1 = 1000, kStage2 = 2000, kStage3 = 3000 };

template <typename T>
std::vector<ResidualBlock<T>> make_blocks(std::int64_t cin, std::int64_t cout, int count, int first_stride,
                                          bool bn, std::uint64_t seed, std::uint64_t stream) {
  std::vector<ResidualBlock<T>> out;
  for (int i = 0; i < count; ++i) {
    Rng rng(Rng::derive(seed, stream + static_cast<std::uint64_t>(i)));
    out.push_back(ResidualBlock<T>::make(i == 0 ? cin : cout, cout, i == 0 ? first_stride : 1, bn, rng));
  }
  return out;
}

}  // namespace

template <typename T>
Model<T> build_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  if (config.precision != precision_of<T>()) {
    throw ConfigError("precision", "model scalar type does not match the configured precision");
  }
  Model<T> m;
  m.config = config;
  const bool bn = config.batchnorm;
  const auto c64 = config.channels(64), c128 = config.channels(128), c256 = config.channels(256),
             c512 = config.channels(512);
  {
    Rng rng(Rng::derive(seed, kStem));
    m.stem = ConvLayer<T>::he_uniform(3, c64, 7, {2, 3}, !bn, rng);
    if (bn) m.stem_bn = BatchNormLayer<T>::identity(c64);
  }
  m.stage1 = make_blocks<T>(c64, c64, config.blocks[0], 1, bn, seed, kStage1);
  auto wide = make_blocks<T>(c64, c128, config.blocks[1], 2, bn, seed, kStage1 + 100);
  m.stage1.insert(m.stage1.end(), wide.begin(), wide.end());
  m.stage2 = make_blocks<T>(c128, c256, config.blocks[2], 2, bn, seed, kStage2);
  m.stage3 = make_blocks<T>(c256, c512, config.blocks[3], 2, bn, seed, kStage3);

  const std::array<std::int64_t, 3> widths{c128, c256, c512};
  for (std::size_t s = 0; s < 3; ++s) {
    if (config.ate_enabled[s]) {
      Rng rng(Rng::derive(seed, kAte + s));
      m.ates[s] = AteParams<T>::make(widths[s], rng);
    }
    Rng rng(Rng::derive(seed, kHead + s));
    m.heads[s] = ConvLayer<T>::he_uniform(widths[s], config.class_count, 1, {1, 0}, true, rng);
  }
  return m;
}

template <typename T>
StageOutputs<T> forward_stages(Model<T>& model, const Tensor<T>& batch, Mode mode, Tape<T>* tape) {
  const auto& cfg = model.config;
  if (batch.rank() != 4 || batch.dim(1) != 3 || batch.dim(2) != cfg.canvas_height ||
      batch.dim(3) != cfg.canvas_width) {
    throw DimensionError("forward: expected [N,3," + std::to_string(cfg.canvas_height) + "," +
                         std::to_string(cfg.canvas_width) + "], got " + shape_str(batch.shape()));
  }
  auto x = model.stem.forward(batch, tape);
  if (model.stem_bn) x = model.stem_bn->forward(x, mode, tape);
  x = maxpool2d(relu(x, tape), 3, 2, tape);

  StageOutputs<T> out;
  std::array<Tensor<T>*, 3> feats{&out.f1, &out.f2, &out.f3};
  std::array<Tensor<T>*, 3> scores{&out.s1, &out.s2, &out.s3};
  std::array<std::vector<ResidualBlock<T>>*, 3> stages{&model.stage1, &model.stage2, &model.stage3};
  for (std::size_t s = 0; s < 3; ++s) {
    for (auto& block : *stages[s]) x = residual_block(x, block, mode, tape);
    *feats[s] = x;
    auto branch = x;
    if (model.ates[s]) {
      branch = ate_apply(x, *model.ates[s], tape);
      if (cfg.ate_placement == AtePlacement::Trunk) x = branch;
    }
    *scores[s] = model.heads[s].forward(branch, tape);
  }
  auto s23 = add(out.s2, bilinear_upsample(out.s3, 2, tape), tape);
  auto s12 = add(out.s1, bilinear_upsample(s23, 2, tape), tape);
  out.scores = bilinear_upsample(s12, 8, tape);
  return out;
}

template <typename T>
Tensor<T> forward(Model<T>& model, const Tensor<T>& batch, Mode mode, Tape<T>* tape) {
  return forward_stages(model, batch, mode, tape).scores;
}

template <typename T>
std::vector<LabelMap> predict_labels(const Tensor<T>& scores, std::shared_ptr<const Palette> palette) {
  if (scores.rank() != 4) throw DimensionError("predict_labels: scores must be [N,C,H,W]");
  if (!palette) palette = builtin_palette();
  const auto n = scores.dim(0), c = scores.dim(1), h = scores.dim(2), w = scores.dim(3);
  if (c < 1 || static_cast<std::size_t>(c) > palette->size()) {
    throw DimensionError("predict_labels: " + std::to_string(c) + " classes but palette has " +
                         std::to_string(palette->size()));
  }
  const T* d = scores.data().data();
  std::vector<LabelMap> out;
  for (std::int64_t b = 0; b < n; ++b) {
    LabelMap lm(static_cast<int>(w), static_cast<int>(h), palette);
    for (std::int64_t p = 0; p < h * w; ++p) {
      std::int64_t best = 0;
      T best_v = d[(b * c) * h * w + p];
      for (std::int64_t k = 1; k < c; ++k) {
        const T v = d[(b * c + k) * h * w + p];
        if (v > best_v) {
          best_v = v;
          best = k;
        }
      }
      lm.labels[static_cast<std::size_t>(p)] = static_cast<ClassIndex>(best);
    }
    out.push_back(std::move(lm));
  }
  return out;
}

// Checkpoint I/O

namespace {

constexpr char kMagic[4] = {'S', 'F', 'S', 'G'};

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot write checkpoint " + path.string());
  }
  template <typename U>
  void uint(U v) {
    unsigned char bytes[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
    out_.write(reinterpret_cast<const char*>(bytes), sizeof(U));
  }
  void raw(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  template <typename T>
  void values(std::span<const T> vals) {
    for (T v : vals) {
      if constexpr (sizeof(T) == 4) {
        uint(std::bit_cast<std::uint32_t>(v));
      } else {
        uint(std::bit_cast<std::uint64_t>(v));
      }
    }
  }
  void finish() {
    out_.flush();
    if (!out_) throw IoError("checkpoint write failed");
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
    if (!in_) throw CheckpointError("cannot open checkpoint " + path.string());
  }
  void raw(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw CheckpointError("checkpoint is truncated");
  }
  template <typename U>
  U uint() {
    unsigned char bytes[sizeof(U)];
    raw(bytes, sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(bytes[i]) << (8 * i));
    return v;
  }
  template <typename T>
  void values(std::span<T> out) {
    for (auto& v : out) {
      if constexpr (sizeof(T) == 4) {
        v = std::bit_cast<T>(uint<std::uint32_t>());
      } else {
        v = std::bit_cast<T>(uint<std::uint64_t>());
      }
    }
  }
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::ifstream in_;
};

void write_config(Writer& w, const ModelConfig& c) {
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(c.class_count));
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(c.canvas_width));
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(c.canvas_height));
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(c.width_num));
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(c.width_den));
  for (bool a : c.ate_enabled) w.uint<std::uint8_t>(a ? 1 : 0);
  w.uint<std::uint8_t>(static_cast<std::uint8_t>(c.ate_placement));
  for (int b : c.blocks) w.uint<std::uint32_t>(static_cast<std::uint32_t>(b));
  w.uint<std::uint8_t>(c.batchnorm ? 1 : 0);
  w.uint<std::uint8_t>(static_cast<std::uint8_t>(c.precision));
}

ModelConfig read_config(Reader& r) {
  ModelConfig c;
  c.class_count = static_cast<int>(r.uint<std::uint32_t>());
  c.canvas_width = static_cast<int>(r.uint<std::uint32_t>());
  c.canvas_height = static_cast<int>(r.uint<std::uint32_t>());
  c.width_num = static_cast<int>(r.uint<std::uint32_t>());
  c.width_den = static_cast<int>(r.uint<std::uint32_t>());
  for (auto& a : c.ate_enabled) a = r.uint<std::uint8_t>() != 0;
  const auto placement = r.uint<std::uint8_t>();
  if (placement > 1) throw CheckpointError("checkpoint has an unknown ATE placement");
  c.ate_placement = static_cast<AtePlacement>(placement);
  for (auto& b : c.blocks) b = static_cast<int>(r.uint<std::uint32_t>());
  c.batchnorm = r.uint<std::uint8_t>() != 0;
  const auto precision = r.uint<std::uint8_t>();
  if (precision > 1) throw CheckpointError("checkpoint has an unknown precision");
  c.precision = static_cast<Precision>(precision);
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint holds an invalid config: ") + e.what());
  }
  return c;
}

ModelConfig read_header(Reader& r) {
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw CheckpointError("not a checkpoint file (bad magic)");
  const auto version = r.uint<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint format version " + std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));
  }
  return read_config(r);
}

// First differing field, or empty.
std::string config_mismatch(const ModelConfig& got, const ModelConfig& want) {
  if (got.class_count != want.class_count) return "class_count";
  if (got.canvas_width != want.canvas_width) return "canvas_width";
  if (got.canvas_height != want.canvas_height) return "canvas_height";
  if (got.width_num * want.width_den != want.width_num * got.width_den) return "width_multiplier";
  if (got.ate_enabled != want.ate_enabled) return "ate_enabled";
  if (got.ate_placement != want.ate_placement) return "ate_placement";
  if (got.blocks != want.blocks) return "blocks";
  if (got.batchnorm != want.batchnorm) return "batchnorm";
  if (got.precision != want.precision) return "precision";
  return {};
}

struct Record {
  Shape shape;
  std::size_t offset = 0;
};

}  // namespace

template <typename T>
void save_checkpoint(Model<T>& model, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  Writer w(path);
  w.raw(kMagic, 4);
  w.uint<std::uint32_t>(kCheckpointVersion);
  write_config(w, model.config);

  std::uint32_t count = 0;
  model.visit([&](const std::string&, Tensor<T>&) { ++count; });
  model.visit_buffers([&](const std::string&, std::vector<T>&) { ++count; });
  w.uint<std::uint32_t>(count);

  auto record = [&](const std::string& name, const Shape& shape, std::span<const T> vals) {
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.raw(name.data(), name.size());
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) w.uint<std::uint64_t>(static_cast<std::uint64_t>(d));
    w.values<T>(vals);
  };
  model.visit([&](const std::string& name, Tensor<T>& p) { record(name, p.shape(), p.data()); });
  model.visit_buffers([&](const std::string& name, std::vector<T>& b) {
    record(name, {static_cast<std::int64_t>(b.size())}, b);
  });
  w.finish();
}

ModelConfig read_checkpoint_config(const std::filesystem::path& path) {
  Reader r(path);
  return read_header(r);
}

template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected) {
  Reader r(path);
  const ModelConfig config = read_header(r);
  if (expected) {
    const auto field = config_mismatch(config, *expected);
    if (!field.empty()) throw CheckpointError("checkpoint config field '" + field + "' differs from the expected config");
  }
  if (config.precision != precision_of<T>()) {
    throw CheckpointError("checkpoint config field 'precision' does not match the requested scalar type");
  }

  // Read everything before touching a model so a bad file yields nothing.
  const auto count = r.uint<std::uint32_t>();
  std::map<std::string, Record> records;
  std::vector<T> payload;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.uint<std::uint32_t>();
    if (len > 4096) throw CheckpointError("checkpoint record name too long");
    std::string name(len, '\0');
    r.raw(name.data(), len);
    const auto rank = r.uint<std::uint32_t>();
    if (rank > 8) throw CheckpointError("checkpoint record '" + name + "' has rank " + std::to_string(rank));
    Record rec;
    for (std::uint32_t k = 0; k < rank; ++k) rec.shape.push_back(static_cast<std::int64_t>(r.uint<std::uint64_t>()));
    const auto n = static_cast<std::size_t>(shape_numel(rec.shape));
    if (n > (std::size_t{1} << 32)) throw CheckpointError("checkpoint record '" + name + "' is implausibly large");
    rec.offset = payload.size();
    payload.resize(payload.size() + n);
    r.values<T>(std::span<T>(payload.data() + rec.offset, n));
    if (!records.emplace(name, std::move(rec)).second) throw CheckpointError("duplicate checkpoint record '" + name + "'");
  }
  if (!r.at_end()) throw CheckpointError("trailing bytes after the last checkpoint record");

  Model<T> model = build_model<T>(config, 0);
  std::size_t used = 0;
  auto fetch = [&](const std::string& name, const Shape& shape) -> const T* {
    auto it = records.find(name);
    if (it == records.end()) throw CheckpointError("checkpoint lacks record '" + name + "'");
    if (it->second.shape != shape) {
      throw CheckpointError("checkpoint record '" + name + "' has shape " + shape_str(it->second.shape) +
                            ", expected " + shape_str(shape));
    }
    ++used;
    return payload.data() + it->second.offset;
  };
  model.visit([&](const std::string& name, Tensor<T>& p) {
    const T* src = fetch(name, p.shape());
    std::copy(src, src + p.numel(), p.data().begin());
  });
  model.visit_buffers([&](const std::string& name, std::vector<T>& b) {
    const T* src = fetch(name, {static_cast<std::int64_t>(b.size())});
    std::copy(src, src + b.size(), b.begin());
  });
  if (used != records.size()) throw CheckpointError("checkpoint has records the model does not use");
  return model;
}

#define SFSEG_INSTANTIATE_SEGNET(T)                                                                         \
  template struct Model<T>;                                                                                 \
  template Model<T> build_model<T>(const ModelConfig&, std::uint64_t);                                     \
  template StageOutputs<T> forward_stages<T>(Model<T>&, const Tensor<T>&, Mode, Tape<T>*);                 \
  template Tensor<T> forward<T>(Model<T>&, const Tensor<T>&, Mode, Tape<T>*);                              \
  template std::vector<LabelMap> predict_labels<T>(const Tensor<T>&, std::shared_ptr<const Palette>);      \
  template void save_checkpoint<T>(Model<T>&, const std::filesystem::path&);                               \
  template Model<T> load_checkpoint<T>(const std::filesystem::path&, const ModelConfig*);

SFSEG_INSTANTIATE_SEGNET(float)
SFSEG_INSTANTIATE_SEGNET(double)

}  // namespace sfseg
