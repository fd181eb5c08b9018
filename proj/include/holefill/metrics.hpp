#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "holefill/image.hpp"

namespace holefill {

// Root mean squared difference over the pixels set in `region` (all three
// channels). Throws ValidationError on an empty region or size mismatch.
double masked_rmse(const Image& a, const Image& b, const Mask& region);

/// Image -> stack of feature maps, e.g. a pretrained perceptual network.
class PerceptualEmbedder {
 public:
  virtual ~PerceptualEmbedder() = default;
  virtual std::vector<Tensor> embed(const Image& image) const = 0;
  virtual bool thread_safe() const { return false; }
};

// Features are unit-normalised along channels at every position; the distance
// sums, over layers, the spatial mean of the squared difference summed over
// channels.
double perceptual_distance(const std::vector<Tensor>& a, const std::vector<Tensor>& b);

struct PairScore {
  int first = 0;
  int second = 0;
  double pixel_mse = 0.0;
  std::optional<double> perceptual;
};

struct DiversityReport {
  double mean_pairwise_pixel_mse_in_mask = 0.0;
  std::optional<double> mean_pairwise_perceptual;
  int num_pairs = 0;
  std::vector<PairScore> pairs;
};

struct DiversityOptions {
  const PerceptualEmbedder* embedder = nullptr;
  // Perceptual distance on the mask's bounding box instead of the full image.
  bool perceptual_crop_to_mask = false;
};

// Mean over all unordered pairs of the MSE over masked pixels, plus the mean
// perceptual distance when an embedder is given. Needs >= 2 samples.
DiversityReport pairwise_diversity(std::span<const Image> samples, const Mask& mask, const DiversityOptions& options = {});

nlohmann::json to_json(const DiversityReport& report);

Image crop(const Image& image, int y0, int x0, int height, int width);

}  // namespace holefill
