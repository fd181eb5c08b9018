#include "holefill/mask_calculus.hpp"

#include <algorithm>
#include <cmath>

#include "holefill/errors.hpp"

namespace holefill {
namespace {

std::vector<std::pair<int, int>> disc_offsets(int radius) {
  std::vector<std::pair<int, int>> offsets;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx)
      if (dy * dy + dx * dx <= radius * radius) offsets.emplace_back(dy, dx);
  return offsets;
}

// Binary max filter with out-of-image pixels treated as 0.
Mask max_filter(const Mask& mask, int radius, StructuringElement element) {
  const int h = mask.height(), w = mask.width();
  if (radius == 0) return mask;
  Mask out(h, w);
  if (element == StructuringElement::Square) {
    Mask rows(h, w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        bool any = false;
        for (int xx = std::max(0, x - radius); xx <= std::min(w - 1, x + radius) && !any; ++xx) any = mask(y, xx);
        rows.set(y, x, any);
      }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        bool any = false;
        for (int yy = std::max(0, y - radius); yy <= std::min(h - 1, y + radius) && !any; ++yy) any = rows(yy, x);
        out.set(y, x, any);
      }
    return out;
  }
  const auto offsets = disc_offsets(radius);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!mask(y, x)) continue;
      for (auto [dy, dx] : offsets) {
        const int yy = y + dy, xx = x + dx;
        if (yy >= 0 && yy < h && xx >= 0 && xx < w) out.set(yy, xx, true);
      }
    }
  return out;
}

void require_radius(int radius) {
  if (radius < 0) throw ValidationError("morphology radius must be non-negative");
}

}  // namespace

Mask dilate(const Mask& mask, int radius, StructuringElement element) {
  require_radius(radius);
  return max_filter(mask, radius, element);
}

Mask erode(const Mask& mask, int radius, StructuringElement element) {
  require_radius(radius);
  return max_filter(mask.inverted(), radius, element).inverted();
}

ValidityMap valid_patch_map(const Mask& mask, int receptive_field) {
  if (receptive_field < 1 || receptive_field % 2 == 0) throw ValidationError("receptive field must be odd and >= 1");
  const int h = mask.height(), w = mask.width(), r = receptive_field / 2;
  // Summed-area table of masked pixels.
  std::vector<int> sat(static_cast<std::size_t>(h + 1) * (w + 1), 0);
  auto at = [&](int y, int x) -> int& { return sat[static_cast<std::size_t>(y) * (w + 1) + x]; };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) at(y + 1, x + 1) = mask(y, x) + at(y, x + 1) + at(y + 1, x) - at(y, x);
  ValidityMap out{Mask(h, w), receptive_field};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int y0 = std::max(0, y - r), y1 = std::min(h, y + r + 1);
      const int x0 = std::max(0, x - r), x1 = std::min(w, x + r + 1);
      const int masked = at(y1, x1) - at(y0, x1) - at(y1, x0) + at(y0, x0);
      out.valid.set(y, x, masked == 0);
    }
  return out;
}

double valid_fraction(const ValidityMap& validity) {
  if (validity.valid.size() == 0) return 0.0;
  return static_cast<double>(validity.valid.count()) / static_cast<double>(validity.valid.size());
}

ScaleSplit compute_scale_split(std::span<const PyramidLevel> levels, int receptive_field, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("scale-split threshold must lie in (0,1)");
  ScaleSplit split;
  split.split_index = static_cast<int>(levels.size());
  for (const auto& level : levels) {
    split.valid_fraction_per_level.push_back(valid_fraction(valid_patch_map(level.mask, receptive_field)));
  }
  for (std::size_t n = 0; n < levels.size(); ++n) {
    if (split.valid_fraction_per_level[n] < threshold) {
      split.split_index = static_cast<int>(n);
      break;
    }
  }
  return split;
}

void apply_scale_split(Pyramid& pyramid, const ScaleSplit& split) {
  for (auto& level : pyramid.levels) level.is_coarse = level.index >= split.split_index;
}

ScalarMap gaussian_blur(const ScalarMap& map, double sigma) {
  if (!(sigma > 0.0)) throw ValidationError("blur sigma must be positive");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    kernel[static_cast<std::size_t>(i + radius)] = v;
    total += v;
  }
  for (double& v : kernel) v /= total;

  const int h = map.height, w = map.width;
  ScalarMap tmp(h, w), out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[static_cast<std::size_t>(i + radius)] * map(y, std::clamp(x + i, 0, w - 1));
      tmp(y, x) = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[static_cast<std::size_t>(i + radius)] * tmp(std::clamp(y + i, 0, h - 1), x);
      out(y, x) = acc;
    }
  return out;
}

SoftMask soft_mask(const Mask& mask, int n, int coarsest, double sigma, SoftMaskRule rule) {
  if (n < 0 || n > coarsest) throw ValidationError("soft_mask: scale index out of range");
  const int radius = std::min(coarsest - n, 5);
  SoftMask soft = gaussian_blur(to_scalar_map(dilate(mask, radius, StructuringElement::Disc)), sigma);
  const double forced = rule == SoftMaskRule::OneInsideMask ? 1.0 : 0.0;
  for (int y = 0; y < soft.height; ++y)
    for (int x = 0; x < soft.width; ++x) {
      soft(y, x) = std::clamp(soft(y, x), 0.0, 1.0);
      if (mask(y, x)) soft(y, x) = forced;
    }
  return soft;
}

SoftMask blend_mask(const Mask& mask, double sigma) {
  SoftMask soft = gaussian_blur(to_scalar_map(mask), sigma);
  for (double& v : soft.values) v = std::clamp(v, 0.0, 1.0);
  return soft;
}

}  // namespace holefill
