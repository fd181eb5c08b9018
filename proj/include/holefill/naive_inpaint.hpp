#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <stop_token>
#include <vector>

#include "holefill/autograd.hpp"
#include "holefill/image.hpp"
#include "holefill/mask_calculus.hpp"
#include "holefill/pyramid.hpp"

namespace holefill {

using Rgb = std::array<double, 3>;

/// Exact nearest-neighbour lookup over a fixed RGB palette (3-d k-d tree).
class NearestColorIndex {
 public:
  explicit NearestColorIndex(std::vector<Rgb> colors);

  // Index into the original palette of a closest color.
  std::size_t nearest(const Rgb& query) const;
  const Rgb& color(std::size_t i) const { return colors_[i]; }
  std::size_t size() const { return colors_.size(); }

 private:
  struct Node {
    std::size_t point = 0;
    int axis = 0;
    int left = -1;
    int right = -1;
  };
  int build(std::vector<std::size_t>& ids, std::size_t lo, std::size_t hi, int depth);
  void search(int node, const Rgb& q, std::size_t& best, double& best_d2) const;

  std::vector<Rgb> colors_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

std::vector<Rgb> valid_colors(const Image& image, const Mask& mask);

// Mean over masked pixels of the squared RGB distance to the closest valid
// color of `reference`. Throws ValidationError when no pixel is valid; 0 when
// no pixel is masked.
double nn_color_loss(const Image& output, const Image& reference, const Mask& mask);
// Differentiable form; the nearest colors are treated as constants.
ag::Var nn_color_loss(const ag::Var& output, const Mask& mask, const NearestColorIndex& index);

struct NaiveInpaintConfig {
  int iterations = 1000;
  double learning_rate = 1e-3;
  int unet_depth = 0;  // 0 = derived from the image size
  int unet_width = 16;
  int input_channels = 8;
  double input_noise_scale = 0.1;  // fixed input ~ U(0, scale)
  double input_jitter_std = 0.03;  // per-iteration perturbation of the input
  double nn_loss_weight = 1.0;
  std::uint64_t seed = 0;
};

// clamp(floor(log2(min(H, W) / 8)), 2, 5)
int unet_depth_for(int height, int width);

struct NaiveResult {
  Image inpainted_full;  // equals the input on valid pixels
  Image inpainted_raw;   // network output
  int level_index = 0;
  double final_loss = 0.0;
  int attempts = 1;
};

struct NaiveProgress {
  int iteration = 0;
  double loss = 0.0;
};

NaiveResult run_naive_inpaint(const Image& image, const Mask& mask, const NaiveInpaintConfig& config, int level_index,
                              const std::function<void(const NaiveProgress&)>& on_progress = {},
                              std::stop_token stop = {});

// Real images for coarse levels: the stitched naive result at the split level
// and successive downsamplings of it for every coarser level.
std::map<int, Image> coarse_reals_from_naive(const NaiveResult& result, const Pyramid& pyramid, const ScaleSplit& split);

}  // namespace holefill
