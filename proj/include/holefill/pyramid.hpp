#pragma once

#include <utility>
#include <vector>

#include "holefill/image.hpp"

namespace holefill {

enum class ResampleKernel {
  Cubic,  // Keys cubic (a = -0.5), support widened when shrinking (anti-aliased)
  Area,   // exact pixel-coverage averaging
};

// Separable resize of a (C,H,W) tensor.
Tensor resample(const Tensor& chw, int height, int width, ResampleKernel kernel);
Image resample(const Image& image, int height, int width, ResampleKernel kernel = ResampleKernel::Cubic);
ScalarMap resample(const ScalarMap& map, int height, int width, ResampleKernel kernel);

struct PyramidSpec {
  double scale_factor = 4.0 / 3.0;  // per-level shrink ratio
  int min_dimension = 25;
  double mask_threshold = 0.3;  // area-averaged mask value above which a pixel stays masked

  void validate() const;
};

struct PyramidLevel {
  int index = 0;  // 0 = finest
  Image image;
  Mask mask;
  bool is_coarse = false;
};

struct Pyramid {
  std::vector<PyramidLevel> levels;  // levels[n] has index n
  bool undersized = false;           // input already below min_dimension

  int coarsest_index() const { return static_cast<int>(levels.size()) - 1; }
  std::size_t size() const { return levels.size(); }
  const PyramidLevel& operator[](std::size_t n) const { return levels[n]; }
  PyramidLevel& operator[](std::size_t n) { return levels[n]; }
};

// Level sizes, finest first: dims(n+1) = round(dims(n) / scale_factor) while
// min(H, W) stays >= min_dimension.
std::vector<std::pair<int, int>> pyramid_dims(int height, int width, const PyramidSpec& spec);

Mask downsample_mask(const Mask& mask, int height, int width, double threshold);

Pyramid build_pyramid(const Image& image, const Mask& mask, const PyramidSpec& spec);

}  // namespace holefill
