#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "holefill/bundle.hpp"
#include "holefill/rng.hpp"

namespace holefill {

// Blend weights below this are snapped to 0 so the input survives bit-exactly.
inline constexpr double kBlendSnap = 1e-3;
inline constexpr int kMaxSampleCount = 64;

/// Erosion radius applied to every level's mask before fresh noise is placed,
/// and a multiplier on the per-scale noise amplitude.
struct DiversityMode {
  std::string name = "normal";
  int erosion_radius = 5;
  double noise_multiplier = 1.0;
};

// normal: radius (rf - 1) / 2 = 5, medium: 2, high: 0. Throws ValidationError
// for other names.
DiversityMode diversity_mode(const std::string& name, int receptive_field = 11);

// z_rec outside erode(mask, radius, square), fresh N(0, stddev^2) inside.
// stddev == 0 returns z_rec unchanged and consumes no randomness.
Tensor compose_noise(const Tensor& z_rec, const Mask& mask, int erosion_radius, double stddev, Rng& rng);

Tensor upsample_to(const Tensor& image, int height, int width);

// Runs the frozen generators from level `from` down to level `to` (from >= to)
// and returns the output at `to`. noise(n) supplies the already scaled input
// noise for level n.
Tensor run_scales(const ModelBundle& bundle, int from, int to, const std::function<Tensor(int)>& noise);

// Reconstruction at level n (z_rec everywhere, no blending).
Tensor reconstruction_at(const ModelBundle& bundle, int n);

// Blurred mask, forced to 1 on masked pixels (the input carries no valid
// content there) and snapped to 0 below kBlendSnap.
SoftMask snapped_blend_mask(const Mask& mask, double sigma);
Image blend(const Image& generated, const Image& input, const SoftMask& weights);

struct SampleRequest {
  std::uint64_t seed = 0;
  DiversityMode mode;
  int count = 1;
};

struct SampleResult {
  std::vector<Image> images;
  std::vector<std::uint64_t> sample_indices;  // stream index within the seed
  ScalarMap std_map;
  SoftMask blend_weights;
  double mean_std_in_mask = 0.0;
  double max_std_outside_blend = 0.0;
};

SampleResult generate(const ModelBundle& bundle, const SampleRequest& request);
Image reconstruct(const ModelBundle& bundle);

// Per-pixel sqrt of the channel-averaged unbiased variance across images.
ScalarMap std_map(std::span<const Image> images);

}  // namespace holefill
