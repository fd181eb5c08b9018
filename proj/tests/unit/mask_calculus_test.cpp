#include <gtest/gtest.h>

#include <cmath>

#include "holefill/errors.hpp"
#include "holefill/mask_calculus.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace holefill {
namespace {

using testing::brute_dilate;
using testing::brute_erode;
using testing::brute_valid;
using testing::random_mask;
using testing::rect_mask;

bool subset(const Mask& a, const Mask& b) {
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x)
      if (a(y, x) && !b(y, x)) return false;
  return true;
}

class MorphologyProperty : public ::testing::TestWithParam<int> {};

TEST_P(MorphologyProperty, MatchesBruteForceAndDuality) {
  Rng rng = make_rng(100 + GetParam());
  std::uniform_int_distribution<int> dim(1, 24), rad(0, 5);
  std::uniform_real_distribution<double> p(0.0, 1.0);
  const Mask m = random_mask(dim(rng), dim(rng), p(rng), rng);
  const int r = rad(rng);
  for (auto e : {StructuringElement::Square, StructuringElement::Disc}) {
    const Mask d = dilate(m, r, e), er = erode(m, r, e);
    EXPECT_EQ(d, brute_dilate(m, r, e));
    EXPECT_EQ(er, brute_erode(m, r, e));
    EXPECT_EQ(d, erode(m.inverted(), r, e).inverted());
    EXPECT_TRUE(subset(er, m));
    EXPECT_TRUE(subset(m, d));
    // Adjunction: dilate(a) <= b iff a <= erode(b).
    const Mask b = random_mask(m.height(), m.width(), 0.7, rng);
    EXPECT_EQ(subset(d, b), subset(m, erode(b, r, e)));
  }
  EXPECT_EQ(dilate(m, 0, StructuringElement::Square), m);
  EXPECT_EQ(erode(m, 0, StructuringElement::Disc), m);
}

TEST_P(MorphologyProperty, ValidPatchMapMatchesBruteForceAndDilation) {
  Rng rng = make_rng(200 + GetParam());
  std::uniform_int_distribution<int> dim(1, 30), rf(0, 6);
  const Mask m = random_mask(dim(rng), dim(rng), 0.05, rng);
  const int k = 2 * rf(rng) + 1;
  const ValidityMap v = valid_patch_map(m, k);
  EXPECT_EQ(v.valid, brute_valid(m, k));
  EXPECT_EQ(v.valid, dilate(m, k / 2, StructuringElement::Square).inverted());
  EXPECT_TRUE(subset(v.valid, m.inverted()));
}

INSTANTIATE_TEST_SUITE_P(Random, MorphologyProperty, ::testing::Range(0, 40));

TEST(ValidPatchMap, SinglePixelExample) {
  Mask m(16, 16);
  m.set(8, 8, true);
  const ValidityMap v = valid_patch_map(m, 11);
  EXPECT_EQ(v.valid.count(), 256u - 121u);
  EXPECT_NEAR(valid_fraction(v), 135.0 / 256.0, 1e-12);
  EXPECT_FALSE(v.valid(3, 3));
  EXPECT_FALSE(v.valid(13, 13));
  EXPECT_TRUE(v.valid(2, 8));
  EXPECT_TRUE(v.valid(8, 14));
}

TEST(ValidPatchMap, Extremes) {
  EXPECT_TRUE(valid_patch_map(Mask(9, 12), 11).valid.all());
  EXPECT_TRUE(valid_patch_map(Mask(9, 12, 1), 11).valid.none());
  EXPECT_THROW(valid_patch_map(Mask(4, 4), 4), ValidationError);
  EXPECT_THROW(valid_patch_map(Mask(4, 4), 0), ValidationError);
}

std::vector<PyramidLevel> levels_of(const std::vector<Mask>& masks) {
  std::vector<PyramidLevel> levels;
  for (std::size_t n = 0; n < masks.size(); ++n) {
    PyramidLevel l;
    l.index = static_cast<int>(n);
    l.mask = masks[n];
    l.image = Image(masks[n].height(), masks[n].width());
    levels.push_back(l);
  }
  return levels;
}

TEST(ScaleSplit, FirstLevelBelowThreshold) {
  // Square holes of growing relative size.
  std::vector<Mask> masks;
  for (int n = 0; n < 5; ++n) {
    const int side = 40 - 6 * n;
    masks.push_back(rect_mask(side, side, side / 3, side / 3, side / 3, side / 3));
  }
  const auto levels = levels_of(masks);
  const ScaleSplit s = compute_scale_split(levels, 11, 0.4);
  ASSERT_EQ(s.valid_fraction_per_level.size(), 5u);
  int oracle = 5;
  for (int n = 0; n < 5; ++n) {
    const double f = static_cast<double>(brute_valid(masks[n], 11).count()) / masks[n].size();
    EXPECT_NEAR(s.valid_fraction_per_level[n], f, 1e-12);
    if (oracle == 5 && f < 0.4) oracle = n;
  }
  EXPECT_EQ(s.split_index, oracle);
  EXPECT_LT(oracle, 5);
  EXPECT_GT(oracle, 0);
}

TEST(ScaleSplit, ThresholdMonotone) {
  Rng rng = make_rng(7);
  std::vector<Mask> masks;
  for (int n = 0; n < 6; ++n) masks.push_back(random_mask(30 - 3 * n, 30 - 3 * n, 0.004 * (n + 1), rng));
  const auto levels = levels_of(masks);
  int prev = 1 << 20;
  for (double t = 0.05; t < 1.0; t += 0.05) {
    const int s = compute_scale_split(levels, 11, t).split_index;
    EXPECT_LE(s, prev);
    prev = s;
  }
  EXPECT_THROW(compute_scale_split(levels, 11, 0.0), ConfigError);
  EXPECT_THROW(compute_scale_split(levels, 11, 1.0), ConfigError);
}

TEST(ScaleSplit, EmptyAndFullMasks) {
  const auto empty = levels_of({Mask(30, 30), Mask(22, 22), Mask(17, 17)});
  EXPECT_EQ(compute_scale_split(empty, 11, 0.4).split_index, 3);
  const auto full = levels_of({Mask(30, 30, 1), Mask(22, 22, 1)});
  EXPECT_EQ(compute_scale_split(full, 11, 0.4).split_index, 0);
}

TEST(GaussianBlur, ConstantPreservedAndImpulseMatchesKernel) {
  const ScalarMap c(20, 15, 0.6);
  for (double v : gaussian_blur(c, 2.0).values) EXPECT_NEAR(v, 0.6, 1e-12);

  ScalarMap impulse(41, 41);
  impulse(20, 20) = 1.0;
  const double sigma = 3.0;
  const ScalarMap out = gaussian_blur(impulse, sigma);
  double norm = 0.0;
  for (int i = -9; i <= 9; ++i) norm += std::exp(-0.5 * i * i / (sigma * sigma));
  for (int dy = -12; dy <= 12; ++dy)
    for (int dx = -12; dx <= 12; ++dx) {
      const double expect = std::abs(dy) > 9 || std::abs(dx) > 9
                                ? 0.0
                                : std::exp(-0.5 * (dy * dy + dx * dx) / (sigma * sigma)) / (norm * norm);
      EXPECT_NEAR(out(20 + dy, 20 + dx), expect, 1e-14);
    }
  EXPECT_NEAR(out.sum(), 1.0, 1e-12);
  EXPECT_THROW(gaussian_blur(c, 0.0), ValidationError);
}

TEST(SoftMask, RangeRuleAndDilationRadius) {
  const Mask m = rect_mask(40, 40, 15, 15, 8, 8);
  for (int n = 0; n <= 7; ++n) {
    const SoftMask one = soft_mask(m, n, 7, 5.0);
    const SoftMask zero = soft_mask(m, n, 7, 5.0, SoftMaskRule::ZeroInsideMask);
    for (int y = 0; y < 40; ++y)
      for (int x = 0; x < 40; ++x) {
        EXPECT_GE(one(y, x), 0.0);
        EXPECT_LE(one(y, x), 1.0);
        if (m(y, x)) {
          EXPECT_EQ(one(y, x), 1.0);
          EXPECT_EQ(zero(y, x), 0.0);
        } else {
          EXPECT_EQ(one(y, x), zero(y, x));
        }
      }
    const int radius = std::min(7 - n, 5);
    const SoftMask oracle = gaussian_blur(to_scalar_map(brute_dilate(m, radius, StructuringElement::Disc)), 5.0);
    EXPECT_NEAR(one(5, 20), oracle(5, 20), 1e-14);
  }
  // Coarser scales dilate less, so the soft mass grows toward the finest level.
  EXPECT_GT(soft_mask(m, 0, 7, 5.0).sum(), soft_mask(m, 7, 7, 5.0).sum());
  EXPECT_THROW(soft_mask(m, 8, 7, 5.0), ValidationError);
}

TEST(SoftMask, EmptyMaskIsZero) {
  for (double v : soft_mask(Mask(12, 12), 0, 3, 5.0).values) EXPECT_EQ(v, 0.0);
}

TEST(BlendMask, IsClampedBlurOfMask) {
  Rng rng = make_rng(8);
  const Mask m = random_mask(25, 19, 0.2, rng);
  const SoftMask b = blend_mask(m, 5.0);
  const ScalarMap ref = gaussian_blur(to_scalar_map(m), 5.0);
  for (std::size_t i = 0; i < b.values.size(); ++i) {
    EXPECT_NEAR(b.values[i], std::clamp(ref.values[i], 0.0, 1.0), 1e-15);
  }
  for (double v : blend_mask(Mask(10, 10, 1), 5.0).values) EXPECT_NEAR(v, 1.0, 1e-12);
}

}  // namespace
}  // namespace holefill
