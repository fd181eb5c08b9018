#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "holefill/errors.hpp"
#include "holefill/naive_inpaint.hpp"
#include "holefill/ops.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace holefill {
namespace {

using testing::brute_nn_loss;
using testing::random_image;
using testing::random_mask;
using testing::rect_mask;

TEST(NnColorLoss, PaletteExample) {
  Image ref(1, 3, -1.0);
  for (int c = 0; c < 3; ++c) ref.at(c, 0, 1) = 1.0;
  Mask mask(1, 3);
  mask.set(0, 2, true);
  Image out = ref;
  out.at(0, 0, 2) = 0.0, out.at(1, 0, 2) = -1.0, out.at(2, 0, 2) = -1.0;
  EXPECT_DOUBLE_EQ(nn_color_loss(out, ref, mask), 1.0);
}

TEST(NnColorLoss, MatchesBruteForce) {
  for (int trial = 0; trial < 10; ++trial) {
    Rng rng = make_rng(30 + trial);
    const Image ref = random_image(12, 12, rng), out = random_image(12, 12, rng);
    const Mask mask = random_mask(12, 12, 0.4, rng);
    if (mask.all()) continue;
    EXPECT_NEAR(nn_color_loss(out, ref, mask), brute_nn_loss(out, ref, mask), 1e-6);
  }
}

TEST(NnColorLoss, IndexIsExactAndPermutationInvariant) {
  Rng rng = make_rng(40);
  std::vector<Rgb> palette;
  for (int i = 0; i < 300; ++i) palette.push_back({uniform01(rng), uniform01(rng), uniform01(rng)});
  std::vector<Rgb> shuffled = palette;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const NearestColorIndex a(palette), b(shuffled);
  auto d2 = [](const Rgb& p, const Rgb& q) {
    return (p[0] - q[0]) * (p[0] - q[0]) + (p[1] - q[1]) * (p[1] - q[1]) + (p[2] - q[2]) * (p[2] - q[2]);
  };
  for (int i = 0; i < 200; ++i) {
    const Rgb q{uniform01(rng) * 1.2 - 0.1, uniform01(rng), uniform01(rng)};
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : palette) best = std::min(best, d2(p, q));
    EXPECT_DOUBLE_EQ(d2(a.color(a.nearest(q)), q), best);
    EXPECT_DOUBLE_EQ(d2(b.color(b.nearest(q)), q), best);
  }
}

TEST(NnColorLoss, EdgeCases) {
  const Image img(4, 4, 0.3);
  EXPECT_EQ(nn_color_loss(img, img, Mask(4, 4)), 0.0);
  EXPECT_THROW(nn_color_loss(img, img, Mask(4, 4, 1)), ValidationError);
  // A masked pixel already holding a valid color costs nothing.
  EXPECT_EQ(nn_color_loss(img, img, rect_mask(4, 4, 1, 1, 2, 2)), 0.0);
}

TEST(NnColorLoss, GradientPullsTowardNearestColor) {
  Image ref(2, 2, -0.5);
  const Mask mask = rect_mask(2, 2, 0, 0, 1, 1);
  const NearestColorIndex index(valid_colors(ref, mask));
  ag::Var out(Tensor({3, 2, 2}, 0.5), true);
  const ag::Var loss = nn_color_loss(out, mask, index);
  EXPECT_DOUBLE_EQ(loss.item(), 3.0);
  const Tensor g = ag::gradient_values(loss, std::vector<ag::Var>{out})[0];
  for (int c = 0; c < 3; ++c) {
    EXPECT_DOUBLE_EQ(g.at(c, 0, 0), 2.0);
    EXPECT_EQ(g.at(c, 1, 1), 0.0);
  }
}

TEST(NaiveInpaint, UnetDepthRule) {
  EXPECT_EQ(unet_depth_for(48, 64), 2);
  EXPECT_EQ(unet_depth_for(16, 16), 2);
  EXPECT_EQ(unet_depth_for(64, 100), 3);
  EXPECT_EQ(unet_depth_for(193, 256), 4);
  EXPECT_EQ(unet_depth_for(256, 300), 5);
  EXPECT_EQ(unet_depth_for(2000, 2000), 5);
}

TEST(NaiveInpaint, EmptyMaskReturnsInput) {
  Rng rng = make_rng(41);
  const Image img = random_image(20, 20, rng);
  NaiveInpaintConfig cfg;
  cfg.iterations = 5;
  const NaiveResult r = run_naive_inpaint(img, Mask(20, 20), cfg, 2);
  EXPECT_EQ(r.inpainted_full, img);
  EXPECT_EQ(r.level_index, 2);
}

TEST(NaiveInpaint, FullMaskIsValidationError) {
  NaiveInpaintConfig cfg;
  cfg.iterations = 5;
  EXPECT_THROW(run_naive_inpaint(Image(16, 16), Mask(16, 16, 1), cfg, 0), ValidationError);
}

TEST(NaiveInpaint, StitchedDeterministicAndCancellable) {
  Rng rng = make_rng(42);
  const Image img = random_image(20, 24, rng);
  const Mask mask = rect_mask(20, 24, 6, 8, 7, 9);
  NaiveInpaintConfig cfg;
  cfg.iterations = 30;
  cfg.seed = 5;
  int reports = 0;
  const NaiveResult a = run_naive_inpaint(img, mask, cfg, 1, [&](const NaiveProgress&) { ++reports; });
  const NaiveResult b = run_naive_inpaint(img, mask, cfg, 1);
  EXPECT_GT(reports, 0);
  EXPECT_EQ(a.inpainted_full, b.inpainted_full);
  EXPECT_TRUE(std::isfinite(a.final_loss));
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 20; ++y)
      for (int x = 0; x < 24; ++x) {
        const double v = a.inpainted_full.at(c, y, x);
        if (mask(y, x)) {
          EXPECT_EQ(v, a.inpainted_raw.at(c, y, x));
        } else {
          EXPECT_EQ(v, img.at(c, y, x));
        }
        EXPECT_LE(std::abs(v), 1.0);
      }

  std::stop_source stop;
  stop.request_stop();
  EXPECT_THROW(run_naive_inpaint(img, mask, cfg, 1, {}, stop.get_token()), CancelledError);
}

Pyramid pyramid_of(const Image& img) {
  PyramidSpec spec;
  spec.min_dimension = 16;
  return build_pyramid(img, Mask(img.height(), img.width()), spec);
}

TEST(CoarseReals, ConstantImageChainEqualsDirect) {
  const Image img(48, 64, -0.35);
  Pyramid p = pyramid_of(img);
  ASSERT_EQ(p.size(), 4u);
  ScaleSplit split;
  split.split_index = 1;
  NaiveResult naive;
  naive.inpainted_full = p[1].image;
  const auto reals = coarse_reals_from_naive(naive, p, split);
  ASSERT_EQ(reals.size(), 3u);
  for (int n = 1; n <= 3; ++n) {
    const Image direct = resample(naive.inpainted_full, p[n].image.height(), p[n].image.width());
    EXPECT_LT(testing::max_abs_diff(reals.at(n).tensor(), direct.tensor()), 1e-12);
    EXPECT_EQ(reals.at(n).height(), p[n].image.height());
  }
}

TEST(CoarseReals, ChainDiffersFromDirectOnTexturedImages) {
  Rng rng = make_rng(43);
  const Image img = random_image(48, 64, rng);
  Pyramid p = pyramid_of(img);
  ScaleSplit split;
  split.split_index = 1;
  NaiveResult naive;
  naive.inpainted_full = p[1].image;
  const auto reals = coarse_reals_from_naive(naive, p, split);
  const Image direct = resample(naive.inpainted_full, p[3].image.height(), p[3].image.width());
  const double gap = testing::max_abs_diff(reals.at(3).tensor(), direct.tensor());
  EXPECT_GT(gap, 1e-6);
  EXPECT_LT(gap, 0.5);
  split.split_index = 4;
  EXPECT_THROW(coarse_reals_from_naive(naive, p, split), ConfigError);
}

}  // namespace
}  // namespace holefill
