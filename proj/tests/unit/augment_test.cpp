#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "bpa/augment.hpp"
#include "bpa/error.hpp"

using namespace bpa;
using namespace bpa::eval;

namespace {

ImageTensor gradient_image(int64_t h, int64_t w) {
  ImageTensor img(h, w, PixelRange::kUnit);
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      img.at(y, x, 0) = static_cast<double>(x) / static_cast<double>(w - 1);
      img.at(y, x, 1) = static_cast<double>(y) / static_cast<double>(h - 1);
      img.at(y, x, 2) = 0.5 * static_cast<double>((x + y) % 7) / 6.0;
    }
  return img;
}

bool same(const ImageTensor& a, const ImageTensor& b) {
  if (a.height() != b.height() || a.width() != b.width()) return false;
  for (size_t i = 0; i < a.data().size(); ++i) {
    if (a.data()[i] != b.data()[i]) return false;
  }
  return true;
}

AugmentPolicy degenerate_policy(int64_t size) {
  AugmentPolicy p;
  p.input_size = size;
  p.crop_scale_min = p.crop_scale_max = 1.0;
  p.crop_ratio_min = p.crop_ratio_max = 1.0;
  p.flip_probability = 0.0;
  p.randaugment_n = 0;
  return p;
}

}  // namespace

TEST(Augment, DisabledPolicyIsPlainResize) {
  const ImageTensor img = gradient_image(48, 40);
  AugmentPolicy p;
  p.enabled = false;
  p.input_size = 24;
  Rng rng(1);
  EXPECT_TRUE(same(augment(img, p, rng), resize(img, 24, 24)));
}

TEST(Augment, DegeneratePolicyIsPlainResize) {
  const ImageTensor img = gradient_image(32, 32);
  Rng rng(2);
  for (int i = 0; i < 5; ++i) EXPECT_TRUE(same(augment(img, degenerate_policy(20), rng), resize(img, 20, 20)));
}

TEST(Augment, OutputShapeAndRangeForAnyAspect) {
  AugmentPolicy p;
  p.input_size = 28;
  Rng rng(3);
  for (auto [h, w] : {std::pair<int64_t, int64_t>{32, 32}, {20, 64}, {64, 20}, {28, 28}, {100, 37}}) {
    for (int i = 0; i < 10; ++i) {
      const ImageTensor out = augment(gradient_image(h, w), p, rng);
      ASSERT_EQ(out.height(), 28);
      ASSERT_EQ(out.width(), 28);
      for (double v : out.data()) {
        ASSERT_GE(v, 0.0);
        ASSERT_LE(v, 1.0);
      }
    }
  }
}

TEST(Augment, DeterministicGivenRngState) {
  const ImageTensor img = gradient_image(32, 32);
  AugmentPolicy p;
  p.input_size = 32;
  Rng a(7), b(7);
  for (int i = 0; i < 10; ++i) EXPECT_TRUE(same(augment(img, p, a), augment(img, p, b)));
}

TEST(Augment, FlipFrequency) {
  const ImageTensor img = gradient_image(16, 16);
  AugmentPolicy p = degenerate_policy(16);
  p.flip_probability = 0.5;
  const ImageTensor flipped = flip_horizontal(resize(img, 16, 16));
  Rng rng(2024);
  int count = 0;
  for (int i = 0; i < 1000; ++i) count += same(augment(img, p, rng), flipped) ? 1 : 0;
  EXPECT_GE(count, 450);
  EXPECT_LE(count, 550);
}

TEST(Augment, CropBoxesStayInsideAndRespectScale) {
  AugmentPolicy p;
  Rng rng(4);
  for (int i = 0; i < 500; ++i) {
    const CropBox b = sample_crop(40, 50, p, rng);
    ASSERT_GE(b.x, 0);
    ASSERT_GE(b.y, 0);
    ASSERT_LE(b.x + b.width, 50);
    ASSERT_LE(b.y + b.height, 40);
    const double frac = static_cast<double>(b.width * b.height) / 2000.0;
    EXPECT_GE(frac, 0.45);
    EXPECT_LE(frac, 1.0);
  }
}

TEST(Augment, EveryOpKeepsShapeAndRange) {
  const ImageTensor img = gradient_image(24, 24);
  EXPECT_EQ(randaugment_ops().size(), 13u);
  for (AugmentOp op : randaugment_ops()) {
    for (int sign : {-1, 1}) {
      for (double m : {0.0, 5.0, 10.0}) {
        const ImageTensor out = apply_op(img, op, m, sign);
        ASSERT_EQ(out.height(), 24) << to_string(op);
        ASSERT_EQ(out.width(), 24) << to_string(op);
        for (double v : out.data()) {
          ASSERT_GE(v, 0.0) << to_string(op);
          ASSERT_LE(v, 1.0) << to_string(op);
        }
      }
    }
  }
}

TEST(Augment, ZeroMagnitudeLeavesImageAlone) {
  const ImageTensor img = gradient_image(24, 24);
  for (AugmentOp op : {AugmentOp::kIdentity, AugmentOp::kBrightness, AugmentOp::kColor, AugmentOp::kContrast,
                       AugmentOp::kRotate, AugmentOp::kShearX, AugmentOp::kTranslateY}) {
    const ImageTensor out = apply_op(img, op, 0.0, 1);
    for (size_t i = 0; i < img.data().size(); ++i) ASSERT_NEAR(out.data()[i], img.data()[i], 1e-9) << to_string(op);
  }
}

TEST(Augment, PolicyValidationAndJson) {
  AugmentPolicy p;
  EXPECT_NO_THROW(p.validate());
  const nlohmann::json j = p;
  const auto back = j.get<AugmentPolicy>();
  EXPECT_EQ(back.randaugment_n, 6);
  EXPECT_EQ(back.randaugment_m, 8);
  EXPECT_EQ(back.input_size, 240);

  AugmentPolicy bad = p;
  bad.crop_scale_min = 0.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = p;
  bad.crop_scale_max = 1.5;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = p;
  bad.input_size = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = p;
  bad.randaugment_n = -1;
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_THROW((nlohmann::json{{"bogus", 1}}.get<AugmentPolicy>()), ConfigError);
}
