#pragma once

#include <span>
#include <vector>

#include "holefill/image.hpp"
#include "holefill/pyramid.hpp"

namespace holefill {

enum class StructuringElement { Square, Disc };

// Erosion treats pixels outside the image as set (1); dilation treats them as
// clear. dilate(m, r) == erode(m.inverted(), r).inverted().
Mask erode(const Mask& mask, int radius, StructuringElement element);
Mask dilate(const Mask& mask, int radius, StructuringElement element);

/// Patch positions whose rf x rf window (clipped at the border) holds no
/// masked pixel. Windows overhanging the image border stay valid.
struct ValidityMap {
  Mask valid;
  int receptive_field = 1;
};

ValidityMap valid_patch_map(const Mask& mask, int receptive_field);
double valid_fraction(const ValidityMap& validity);

struct ScaleSplit {
  int split_index = 0;  // levels >= split_index are coarse; == num_levels means none
  std::vector<double> valid_fraction_per_level;

  bool has_coarse(int num_levels) const { return split_index < num_levels; }
};

ScaleSplit compute_scale_split(std::span<const PyramidLevel> levels, int receptive_field, double threshold);
void apply_scale_split(Pyramid& pyramid, const ScaleSplit& split);

// Gaussian blur truncated at 3 sigma, kernel renormalised to unit sum,
// clamp-to-edge borders.
ScalarMap gaussian_blur(const ScalarMap& map, double sigma);

enum class SoftMaskRule {
  OneInsideMask,   // soft mask forced to 1 on masked pixels (default)
  ZeroInsideMask,  // literal variant: forced to 0 on masked pixels
};

// Reconstruction-loss soft mask for pyramid level n of 0..N: dilate by a disc
// of radius min(N - n, 5), blur, clamp to [0,1], then apply the rule.
SoftMask soft_mask(const Mask& mask, int n, int coarsest, double sigma, SoftMaskRule rule = SoftMaskRule::OneInsideMask);

// Blending weight for fusing a completion into the input.
SoftMask blend_mask(const Mask& mask, double sigma);

}  // namespace holefill
