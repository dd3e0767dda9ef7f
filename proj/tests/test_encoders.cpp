#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "bmr/encoders.hpp"
#include "gradcheck.hpp"

using namespace bmr;

namespace {

EncoderConfig small_cfg() {
  EncoderConfig c;
  c.d = 8;
  c.vocab = 20;
  c.image_rows = 8;
  c.image_cols = 8;
  c.patch = 4;
  c.max_len = 6;
  return c;
}

RawNews item(std::size_t rows, std::size_t cols, std::vector<std::int64_t> text, double fill = 0.5) {
  Image img{rows, cols, std::vector<double>(rows * cols, fill)};
  return {img, std::move(text), Label::kFake};
}

}  // namespace

TEST(Clean, SmallImageBecomesCanonicalZeroGrid) {
  CleanRules r{64, 5, 16, 16};
  auto out = clean(item(32, 100, {5, 6, 7, 8, 9}), r);
  EXPECT_EQ(out.image, Image::zeros(16, 16));
  EXPECT_EQ(out.text, (std::vector<std::int64_t>{5, 6, 7, 8, 9}));
}

TEST(Clean, ShortTextBecomesPlaceholder) {
  CleanRules r{64, 5, 16, 16};
  auto out = clean(item(64, 64, {5, 6, 7}), r);
  EXPECT_EQ(out.text, (std::vector<std::int64_t>{2, 3, 4}));
  EXPECT_EQ(out.image.rows, 64u);  // large enough images are kept
}

TEST(Clean, BoundaryValuesAreKept) {
  CleanRules r{64, 5, 16, 16};
  auto out = clean(item(64, 64, {5, 6, 7, 8, 9}, 0.25), r);
  EXPECT_EQ(out.image.pixels[0], 0.25);
  EXPECT_EQ(out.text.size(), 5u);
}

TEST(Resize, ConstantImageStaysConstant) {
  auto img = resize(item(37, 53, {}, 0.7).image, 16, 16);
  ASSERT_EQ(img.pixels.size(), 256u);
  for (double p : img.pixels) EXPECT_NEAR(p, 0.7, 1e-12);
}

TEST(Resize, IdentityAtSameSize) {
  Image img{2, 2, {0.1, 0.2, 0.3, 0.4}};
  EXPECT_EQ(resize(img, 2, 2), img);
}

TEST(Resize, DownsampleByTwoAveragesPairs) {
  // align-corners=false sampling at 2x lands exactly between source pixels
  Image img{1, 4, {0.0, 1.0, 2.0, 3.0}};
  auto out = resize(img, 1, 2);
  EXPECT_NEAR(out.pixels[0], 0.5, 1e-12);
  EXPECT_NEAR(out.pixels[1], 2.5, 1e-12);
}

TEST(FitLength, PadsAndTruncates) {
  std::vector<std::int64_t> ids{5, 6, 7};
  EXPECT_EQ(fit_length(ids, 5), (std::vector<std::int64_t>{5, 6, 7, 0, 0}));
  EXPECT_EQ(fit_length(ids, 2), (std::vector<std::int64_t>{5, 6}));
}

TEST(BatchLayout, ImagesIdsAndLabels) {
  auto cfg = small_cfg();
  std::vector<RawNews> items{item(8, 8, {5, 6}, 0.1), item(8, 8, {7}, 0.2)};
  items[1].label = Label::kReal;
  auto b = Batch::from(std::span<const RawNews>(items), cfg);
  EXPECT_EQ(b.size, 2u);
  EXPECT_EQ(b.images.size(), 2u * 64u);
  EXPECT_EQ(b.images[64], 0.2);
  EXPECT_EQ(b.ids, (std::vector<std::int64_t>{5, 6, 0, 0, 0, 0, 7, 0, 0, 0, 0, 0}));
  EXPECT_EQ(b.labels, (std::vector<double>{1.0, 0.0}));
}

TEST(BatchLayout, WrongImageSizeThrows) {
  auto cfg = small_cfg();
  std::vector<RawNews> items{item(8, 9, {5})};
  EXPECT_THROW(Batch::from(std::span<const RawNews>(items), cfg), DimensionError);
}

TEST(Bayar, ProjectionRestoresConstraint) {
  Rng rng(3);
  BayarFilter f(rng);
  auto k = f.kernel.mutable_data();
  for (std::size_t i = 0; i < 9; ++i) k[i] = static_cast<double>(i) - 2.0;
  f.project();
  EXPECT_DOUBLE_EQ(f.kernel.data()[4], -1.0);
  EXPECT_NEAR(f.off_centre_sum(), 1.0, 1e-12);
}

TEST(Bayar, FreshFilterSatisfiesConstraint) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    BayarFilter f(rng);
    EXPECT_DOUBLE_EQ(f.kernel.data()[4], -1.0);
    EXPECT_NEAR(f.off_centre_sum(), 1.0, 1e-12);
  }
}

TEST(Bayar, ResidualOfConstantImageIsZero) {
  Rng rng(4);
  BayarFilter f(rng);
  Tensor img = Tensor::full({1, 5, 5}, 0.37);
  auto r = f(img);
  ASSERT_EQ(r.shape(), (Shape{1, 3, 3}));
  for (double v : r.data()) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(PatternEncoder, OutputShapeAndGradients) {
  auto cfg = small_cfg();
  Rng rng(5);
  PatternEncoder enc(cfg, rng);
  EXPECT_EQ(enc.cells(), 4u);
  Rng data_rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> px(3 * 64);
  for (auto& p : px) p = u(data_rng);
  Tensor images = Tensor::from({3, 8, 8}, px);
  auto out = enc.forward(images, NormMode::kTrain);
  EXPECT_EQ(out.shape(), (Shape{3, 8}));

  StateList st;
  enc.enumerate("p", st);
  auto params = trainable(st);
  // sum of squares is constant under batch norm; use fixed random weights instead
  std::vector<double> wv(3 * 8);
  for (auto& w : wv) w = u(data_rng) - 0.5;
  Tensor w = Tensor::from({3, 8}, wv);
  auto loss = [&] {
    auto y = enc.forward(images, NormMode::kTrain);
    return sum(mul(mul(y, y), w));
  };
  auto r = bmr::testing::check_gradients(params, loss, 1e-4);
  EXPECT_EQ(r.failed, 0u) << r.worst;
}

TEST(PatternEncoder, EnergyIgnoresWhichHalfIsBright) {
  // squared residual energy is symmetric under swapping the bright half
  auto cfg = small_cfg();
  Rng rng(7);
  PatternEncoder enc(cfg, rng);
  std::vector<double> top(64), bottom(64);
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j) {
      top[i * 8 + j] = i < 4 ? 0.8 : 0.2;
      bottom[i * 8 + j] = i < 4 ? 0.2 : 0.8;
    }
  NoGradGuard g;
  auto a = enc.forward(Tensor::from({1, 8, 8}, top), NormMode::kEval);
  auto b = enc.forward(Tensor::from({1, 8, 8}, bottom), NormMode::kEval);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a.data()[i], b.data()[i], 1e-12);
}

TEST(SemanticsEncoder, PatchTokensWithPositions) {
  auto cfg = small_cfg();
  Rng rng(8);
  SemanticsEncoder enc(cfg, rng);
  std::vector<RawNews> items{item(8, 8, {5}, 0.0)};
  auto b = Batch::from(std::span<const RawNews>(items), cfg);
  auto out = enc.forward(b);
  ASSERT_EQ(out.shape(), (Shape{1, 4, 8}));
  // zero image: every token is bias + its position encoding
  auto pos = sinusoidal_positions(4, 8);
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t k = 0; k < 8; ++k)
      EXPECT_NEAR(out.data()[t * 8 + k], enc.projection().bias.data()[k] + pos.data()[t * 8 + k], 1e-12);
}

TEST(SemanticsEncoder, FrozenByDefault) {
  auto cfg = small_cfg();
  Rng rng(9);
  SemanticsEncoder frozen(cfg, rng);
  StateList st;
  frozen.enumerate("s", st);
  for (auto& e : st) EXPECT_EQ(e.kind, StateEntry::Kind::kFrozen);
  EXPECT_TRUE(trainable(st).empty());

  cfg.frozen_semantics = false;
  SemanticsEncoder live(cfg, rng);
  StateList st2;
  live.enumerate("s", st2);
  EXPECT_EQ(trainable(st2).size(), 2u);
}

TEST(SemanticsEncoder, PatchMustTileImage) {
  auto cfg = small_cfg();
  cfg.patch = 3;
  Rng rng(1);
  EXPECT_THROW(SemanticsEncoder(cfg, rng), DimensionError);
}

TEST(TextEncoder, PlaceholderAndPaddingLookups) {
  auto cfg = small_cfg();
  Rng rng(10);
  TextEncoder enc(cfg, rng);
  std::vector<std::int64_t> ids(std::begin(token::kPlaceholder), std::end(token::kPlaceholder));
  auto out = enc.encode(ids);
  ASSERT_EQ(out.shape(), (Shape{1, 6, 8}));
  auto pos = sinusoidal_positions(6, 8);
  const auto table = enc.table().data();
  for (std::size_t t = 0; t < 6; ++t) {
    const std::size_t id = t < 3 ? static_cast<std::size_t>(ids[t]) : 0;
    for (std::size_t k = 0; k < 8; ++k)
      EXPECT_NEAR(out.data()[t * 8 + k], table[id * 8 + k] + pos.data()[t * 8 + k], 1e-12);
  }
}

TEST(TextEncoder, OutOfVocabularyIdThrows) {
  auto cfg = small_cfg();
  Rng rng(11);
  TextEncoder enc(cfg, rng);
  std::vector<std::int64_t> ids{static_cast<std::int64_t>(cfg.vocab)};
  EXPECT_THROW(enc.encode(ids), std::out_of_range);
}

TEST(SinusoidalPositions, KnownValues) {
  auto p = sinusoidal_positions(3, 4);
  // pe[t, 2i] = sin(t / 10000^(2i/d)), pe[t, 2i+1] = cos(...)
  EXPECT_NEAR(p.data()[0], 0.0, 1e-15);
  EXPECT_NEAR(p.data()[1], 1.0, 1e-15);
  EXPECT_NEAR(p.data()[4], std::sin(1.0), 1e-15);
  EXPECT_NEAR(p.data()[5], std::cos(1.0), 1e-15);
  EXPECT_NEAR(p.data()[6], std::sin(1.0 / 100.0), 1e-15);
  EXPECT_NEAR(p.data()[7], std::cos(1.0 / 100.0), 1e-15);
}
