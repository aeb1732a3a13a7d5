#include <gtest/gtest.h>

#include <fstream>
#include <map>

#include "sfseg/segnet.hpp"
#include "test_support.hpp"

using namespace sfseg;
using sfseg::testing::grad_check_sampled;
using sfseg::testing::projection_loss;
using sfseg::testing::random_tensor;
using sfseg::testing::random_weights;
using sfseg::testing::TempDir;

namespace {

ModelConfig desk(int canvas = 96) {
  ModelConfig c;
  c.canvas_width = c.canvas_height = canvas;
  c.width_num = 1;
  c.width_den = 8;
  return c;
}

// Smallest model that still has every component.
ModelConfig tiny(Precision p = Precision::F64) {
  ModelConfig c = desk(96);
  c.class_count = 4;
  c.width_den = 16;
  c.blocks = {1, 1, 1, 1};
  c.precision = p;
  return c;
}

template <typename T>
std::map<std::string, std::vector<T>> snapshot(Model<T>& m) {
  std::map<std::string, std::vector<T>> out;
  m.visit([&](const std::string& name, Tensor<T>& p) { out[name].assign(p.data().begin(), p.data().end()); });
  return out;
}

template <typename T>
void expect_same(const Tensor<T>& a, const Tensor<T>& b) {
  ASSERT_EQ(a.shape(), b.shape());
  for (size_t i = 0; i < a.numel(); ++i) ASSERT_EQ(a.data()[i], b.data()[i]) << "at " << i;
}

void expect_error_names(const std::function<void()>& fn, const std::string& field) {
  try {
    fn();
    FAIL() << "no error thrown";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), field);
  }
}

}  // namespace

TEST(ModelConfig, DefaultsAreValid) {
  ModelConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.channels(512), 512);
  EXPECT_EQ(desk().channels(64), 8);
}

TEST(ModelConfig, ErrorsNameTheField) {
  expect_error_names([] { ModelConfig c; c.class_count = 1; c.validate(); }, "class_count");
  expect_error_names([] { ModelConfig c; c.canvas_width = 100; c.validate(); }, "canvas");
  expect_error_names([] { ModelConfig c; c.canvas_height = 0; c.validate(); }, "canvas");
  expect_error_names([] { ModelConfig c; c.width_den = 0; c.validate(); }, "width_multiplier");
  expect_error_names([] { ModelConfig c; c.width_den = 128; c.validate(); }, "width_multiplier");
  expect_error_names([] { ModelConfig c; c.blocks[2] = 0; c.validate(); }, "blocks");
  expect_error_names([] { build_model<double>(ModelConfig{}, 1); }, "precision");
  expect_error_names([] { ModelConfig c; c.canvas_width = 64; c.validate(); }, "ate");
}

TEST(ShapeLadder, FullCanvasGeometry) {
  // Full-width 800 is covered by the acceptance suite; widths do not affect sizes.
  auto cfg = desk(800);
  auto model = build_model<float>(cfg, 1);
  Tensor<float> x({1, 3, 800, 800}, 0.f);
  auto out = forward_stages(model, x);
  EXPECT_EQ(out.f1.shape(), (Shape{1, cfg.channels(128), 100, 100}));
  EXPECT_EQ(out.f2.shape(), (Shape{1, cfg.channels(256), 50, 50}));
  EXPECT_EQ(out.f3.shape(), (Shape{1, cfg.channels(512), 25, 25}));
  EXPECT_EQ(out.s1.shape(), (Shape{1, 25, 100, 100}));
  EXPECT_EQ(out.s3.shape(), (Shape{1, 25, 25, 25}));
  EXPECT_EQ(out.scores.shape(), (Shape{1, 25, 800, 800}));
}

TEST(ShapeLadder, DeskAndRectangularCanvases) {
  for (auto [w, h] : {std::pair{96, 96}, {96, 160}, {128, 96}}) {
    auto cfg = desk();
    cfg.canvas_width = w;
    cfg.canvas_height = h;
    auto model = build_model<float>(cfg, 2);
    Rng rng(3);
    auto out = forward_stages(model, random_tensor<float>({2, 3, h, w}, rng, 0, 1));
    EXPECT_EQ(out.s1.shape(), (Shape{2, 25, h / 8, w / 8}));
    EXPECT_EQ(out.s2.shape(), (Shape{2, 25, h / 16, w / 16}));
    EXPECT_EQ(out.s3.shape(), (Shape{2, 25, h / 32, w / 32}));
    EXPECT_EQ(out.scores.shape(), (Shape{2, 25, h, w}));
  }
}

TEST(ShapeLadder, SmallestCanvasWithoutAtes) {
  auto cfg = desk(32);
  cfg.ate_enabled = {false, false, false};
  auto model = build_model<float>(cfg, 2);
  auto out = forward_stages(model, Tensor<float>({1, 3, 32, 32}, 0.5f));
  EXPECT_EQ(out.s1.shape(), (Shape{1, 25, 4, 4}));
  EXPECT_EQ(out.s3.shape(), (Shape{1, 25, 1, 1}));
  EXPECT_EQ(out.scores.shape(), (Shape{1, 25, 32, 32}));
}

TEST(Forward, SpatialMismatch) {
  auto model = build_model<float>(desk(), 1);
  EXPECT_THROW(forward(model, Tensor<float>({1, 3, 64, 64})), DimensionError);
  EXPECT_THROW(forward(model, Tensor<float>({1, 1, 96, 96})), DimensionError);
}

TEST(BuildModel, SameSeedIsBitIdentical) {
  auto a = build_model<float>(desk(), 42), b = build_model<float>(desk(), 42), c = build_model<float>(desk(), 43);
  EXPECT_EQ(snapshot(a), snapshot(b));
  EXPECT_NE(snapshot(a), snapshot(c));
  EXPECT_EQ(a.parameter_count(), b.parameter_count());
}

TEST(BuildModel, AteToggleLeavesOtherParametersAlone) {
  auto on_cfg = desk(), off_cfg = desk();
  off_cfg.ate_enabled = {false, true, false};
  auto on = build_model<float>(on_cfg, 5), off = build_model<float>(off_cfg, 5);
  auto a = snapshot(on), b = snapshot(off);
  EXPECT_GT(a.size(), b.size());
  for (const auto& [name, values] : b) {
    ASSERT_TRUE(a.count(name)) << name;
    EXPECT_EQ(a[name], values) << name;
  }
  EXPECT_TRUE(b.count("ate2.fc.bias"));
  EXPECT_FALSE(b.count("ate1.fc.bias"));
}

TEST(BuildModel, NoBatchnormMeansStemBias) {
  auto cfg = desk();
  cfg.batchnorm = false;
  auto m = build_model<float>(cfg, 1);
  EXPECT_FALSE(m.stem_bn.has_value());
  EXPECT_TRUE(m.stem.bias.defined());
  EXPECT_FALSE(build_model<float>(desk(), 1).stem.bias.defined());
}

TEST(Forward, ZeroHeadsGiveZeroScores) {
  auto model = build_model<float>(desk(), 7);
  for (auto& h : model.heads) {
    for (auto& v : h.weight.data()) v = 0;
    for (auto& v : h.bias.data()) v = 0;
  }
  Rng rng(8);
  auto y = forward(model, random_tensor<float>({2, 3, 96, 96}, rng, 0, 1));
  for (float v : y.data()) ASSERT_EQ(v, 0.f);
}

TEST(Forward, FusionIsLinearInHeadOutputs) {
  auto model = build_model<double>(tiny(), 9);
  Rng rng(10);
  for (auto& h : model.heads)
    for (auto& v : h.bias.data()) v = rng.uniform(-1, 1);
  auto x = random_tensor<double>({1, 3, 96, 96}, rng, 0, 1);
  auto y1 = forward(model, x);
  for (auto& h : model.heads) {
    for (auto& v : h.weight.data()) v *= 2;
    for (auto& v : h.bias.data()) v *= 2;
  }
  auto y2 = forward(model, x);
  for (size_t i = 0; i < y1.numel(); ++i) ASSERT_NEAR(y2.data()[i], 2 * y1.data()[i], 1e-6);
}

TEST(Forward, IdentityAtesMatchDisabledBitExactly) {
  for (auto placement : {AtePlacement::ScoreBranch, AtePlacement::Trunk}) {
    auto on_cfg = desk();
    on_cfg.ate_placement = placement;
    auto off_cfg = on_cfg;
    off_cfg.ate_enabled = {false, false, false};
    auto on = build_model<float>(on_cfg, 11), off = build_model<float>(off_cfg, 11);
    Rng rng(12);
    auto x = random_tensor<float>({2, 3, 96, 96}, rng, 0, 1);
    expect_same(forward(on, x), forward(off, x));
    expect_same(forward(on, x, Mode::Train), forward(off, x, Mode::Train));
  }
}

TEST(Forward, PerturbedAteChangesOutput) {
  auto model = build_model<double>(tiny(), 13);
  Rng rng(14);
  auto x = random_tensor<double>({1, 3, 96, 96}, rng, 0, 1);
  auto before = forward(model, x);
  for (auto& v : model.ates[0]->fc_weight.data()) v = rng.uniform(-0.5, 0.5);
  auto after = forward(model, x);
  double diff = 0;
  for (size_t i = 0; i < before.numel(); ++i) diff = std::max(diff, std::abs(after.data()[i] - before.data()[i]));
  EXPECT_GT(diff, 0.0);
}

TEST(Forward, DeskGradientCheck) {
  auto cfg = desk();
  cfg.precision = Precision::F64;
  cfg.class_count = 5;
  auto model = build_model<double>(cfg, 15);
  Rng rng(16);
  // Move ATEs off identity: the sampler has a kink exactly on pixel centres.
  for (auto& a : model.ates)
    for (auto& v : a->fc_weight.data()) v = rng.uniform(-0.2, 0.2);
  auto x = random_tensor<double>({2, 3, 96, 96}, rng, 0, 1);
  const auto w = random_weights(2 * 5 * 96 * 96, rng);
  auto params = model.parameters();
  auto r = grad_check_sampled(
      params, [&](Tape<double>* t) { return projection_loss(forward(model, x, Mode::Train, t), w, t); }, 3, rng, 1e-6);
  EXPECT_LT(r.rel_error, 1e-3);
}

TEST(PredictLabels, StrictMaxAndTies) {
  Tensor<float> s({1, 4, 3, 2}, 0.f);
  auto ties = predict_labels(s);
  ASSERT_EQ(ties.size(), 1u);
  for (auto l : ties[0].labels) EXPECT_EQ(l, 0);
  for (int i = 0; i < 6; ++i) s.data()[2 * 6 + i] = 1.f;
  auto two = predict_labels(s);
  EXPECT_EQ(two[0].width, 2);
  EXPECT_EQ(two[0].height, 3);
  for (auto l : two[0].labels) EXPECT_EQ(l, 2);
}

TEST(PredictLabels, ScalarArgmaxOracleAndShiftInvariance) {
  Rng rng(17);
  const int n = 3, c = 6, h = 5, w = 7;
  auto s = random_tensor<double>({n, c, h, w}, rng, -3, 3);
  for (size_t i = 0; i < s.numel(); i += 5) s.data()[i] = std::round(s.data()[i]);  // some ties
  auto shifted = s.clone();
  auto labels = predict_labels(s);
  for (int i = 0; i < n; ++i)
    for (int p = 0; p < h * w; ++p) {
      const double k = rng.uniform(-4, 4);
      for (int ch = 0; ch < c; ++ch) shifted.data()[(i * c + ch) * h * w + p] += k;
      int best = 0;
      for (int ch = 1; ch < c; ++ch)
        if (s.data()[(i * c + ch) * h * w + p] > s.data()[(i * c + best) * h * w + p]) best = ch;
      EXPECT_EQ(labels[i].labels[p], best);
    }
  // Shifting by an exactly representable constant keeps every comparison.
  auto s2 = s.clone();
  for (auto& v : s2.data()) v += 8.0;
  auto l2 = predict_labels(s2);
  for (int i = 0; i < n; ++i) EXPECT_EQ(l2[i].labels, labels[i].labels);
  // Per-pixel constants; rounding is monotone and the gaps here are far above one ulp.
  auto l3 = predict_labels(shifted);
  for (int i = 0; i < n; ++i) EXPECT_EQ(l3[i].labels, labels[i].labels);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  TempDir dir("ckpt");
  for (auto placement : {AtePlacement::ScoreBranch, AtePlacement::Trunk}) {
    auto cfg = desk();
    cfg.ate_placement = placement;
    cfg.ate_enabled = {true, false, true};
    auto model = build_model<float>(cfg, 18);
    Rng rng(19);
    auto x = random_tensor<float>({2, 3, 96, 96}, rng, 0, 1);
    forward(model, x, Mode::Train);  // moves the running statistics
    save_checkpoint(model, dir / "m.sfsg");
    EXPECT_EQ(read_checkpoint_config(dir / "m.sfsg"), cfg);
    auto loaded = load_checkpoint<float>(dir / "m.sfsg", &cfg);
    EXPECT_EQ(loaded.config, cfg);
    EXPECT_EQ(snapshot(loaded), snapshot(model));
    expect_same(forward(loaded, x), forward(model, x));
  }
}

TEST(Checkpoint, DoublePrecisionRoundTrip) {
  TempDir dir("ckpt64");
  auto model = build_model<double>(tiny(), 20);
  save_checkpoint(model, dir / "m.sfsg");
  auto loaded = load_checkpoint<double>(dir / "m.sfsg");
  EXPECT_EQ(snapshot(loaded), snapshot(model));
  EXPECT_THROW(load_checkpoint<float>(dir / "m.sfsg"), CheckpointError);
}

TEST(Checkpoint, CorruptFilesAreRejected) {
  TempDir dir("ckbad");
  auto model = build_model<double>(tiny(), 21);
  save_checkpoint(model, dir / "m.sfsg");
  std::ifstream in(dir / "m.sfsg", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  auto write = [&](const std::string& name, const std::string& content) {
    std::ofstream(dir / name, std::ios::binary) << content;
    return dir / name;
  };
  for (size_t cut : {size_t{0}, size_t{3}, size_t{10}, bytes.size() / 2, bytes.size() - 1})
    EXPECT_THROW(load_checkpoint<double>(write("cut.sfsg", bytes.substr(0, cut))), CheckpointError) << cut;
  EXPECT_THROW(load_checkpoint<double>(write("tail.sfsg", bytes + "x")), CheckpointError);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(load_checkpoint<double>(write("magic.sfsg", bad_magic)), CheckpointError);
  auto bad_version = bytes;
  bad_version[4] = 9;
  EXPECT_THROW(load_checkpoint<double>(write("version.sfsg", bad_version)), CheckpointError);
  EXPECT_THROW(load_checkpoint<double>(dir / "missing.sfsg"), CheckpointError);
}

TEST(Checkpoint, MismatchNamesTheField) {
  TempDir dir("ckmis");
  auto cfg = tiny();
  auto model = build_model<double>(cfg, 22);
  save_checkpoint(model, dir / "m.sfsg");
  auto expect_field = [&](ModelConfig other, const std::string& field) {
    try {
      load_checkpoint<double>(dir / "m.sfsg", &other);
      FAIL() << field;
    } catch (const CheckpointError& e) {
      EXPECT_NE(std::string(e.what()).find("'" + field + "'"), std::string::npos) << e.what();
    }
  };
  auto other = cfg;
  other.class_count = 25;
  expect_field(other, "class_count");
  other = cfg;
  other.canvas_width = 128;
  expect_field(other, "canvas_width");
  other = cfg;
  other.ate_enabled[1] = false;
  expect_field(other, "ate_enabled");
  other = cfg;
  other.batchnorm = false;
  expect_field(other, "batchnorm");
}
