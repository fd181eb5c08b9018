#include "holefill/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "holefill/errors.hpp"

namespace holefill {

namespace {

void check_pair(const Image& a, const Image& b) {
  if (a.height() != b.height() || a.width() != b.width()) throw ValidationError("images differ in size");
}

double masked_mse(const Image& a, const Image& b, const Mask& region) {
  double acc = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < region.height(); ++y)
    for (int x = 0; x < region.width(); ++x) {
      if (!region(y, x)) continue;
      for (int c = 0; c < 3; ++c) {
        const double d = a.at(c, y, x) - b.at(c, y, x);
        acc += d * d;
      }
      n += 3;
    }
  return acc / static_cast<double>(n);
}

std::mutex& embedder_mutex() {
  static std::mutex m;
  return m;
}

std::vector<Tensor> embed(const PerceptualEmbedder& e, const Image& image) {
  if (e.thread_safe()) return e.embed(image);
  std::lock_guard lock(embedder_mutex());
  return e.embed(image);
}

}  // namespace

double masked_rmse(const Image& a, const Image& b, const Mask& region) {
  check_pair(a, b);
  check_same_dims(a, region);
  if (region.none()) throw ValidationError("masked_rmse: empty region");
  return std::sqrt(masked_mse(a, b, region));
}

double perceptual_distance(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
  if (a.size() != b.size()) throw ValidationError("feature stacks differ in depth");
  double total = 0.0;
  for (std::size_t l = 0; l < a.size(); ++l) {
    const Tensor& fa = a[l];
    const Tensor& fb = b[l];
    require_same_shape(fa, fb, "perceptual_distance");
    const int c = fa.channels(), h = fa.height(), w = fa.width();
    double layer = 0.0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double na = 0.0, nb = 0.0;
        for (int k = 0; k < c; ++k) {
          na += fa.at(k, y, x) * fa.at(k, y, x);
          nb += fb.at(k, y, x) * fb.at(k, y, x);
        }
        na = std::sqrt(na) + 1e-10;
        nb = std::sqrt(nb) + 1e-10;
        for (int k = 0; k < c; ++k) {
          const double d = fa.at(k, y, x) / na - fb.at(k, y, x) / nb;
          layer += d * d;
        }
      }
    total += layer / (static_cast<double>(h) * w);
  }
  return total;
}

Image crop(const Image& image, int y0, int x0, int height, int width) {
  if (y0 < 0 || x0 < 0 || height < 1 || width < 1 || y0 + height > image.height() || x0 + width > image.width()) {
    throw ValidationError("crop window outside the image");
  }
  Image out(height, width);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) out.at(c, y, x) = image.at(c, y0 + y, x0 + x);
  return out;
}

DiversityReport pairwise_diversity(std::span<const Image> samples, const Mask& mask, const DiversityOptions& options) {
  if (samples.size() < 2) throw ValidationError("pairwise diversity needs at least two samples");
  for (const auto& s : samples) {
    check_pair(s, samples[0]);
    check_same_dims(s, mask);
  }
  if (mask.none()) throw ValidationError("pairwise diversity needs a non-empty mask");

  int y0 = 0, x0 = 0, y1 = mask.height() - 1, x1 = mask.width() - 1;
  if (options.perceptual_crop_to_mask) {
    y0 = mask.height(), x0 = mask.width(), y1 = -1, x1 = -1;
    for (int y = 0; y < mask.height(); ++y)
      for (int x = 0; x < mask.width(); ++x)
        if (mask(y, x)) {
          y0 = std::min(y0, y), x0 = std::min(x0, x), y1 = std::max(y1, y), x1 = std::max(x1, x);
        }
  }
  std::vector<std::vector<Tensor>> features;
  if (options.embedder) {
    for (const auto& s : samples) {
      features.push_back(options.perceptual_crop_to_mask ? embed(*options.embedder, crop(s, y0, x0, y1 - y0 + 1, x1 - x0 + 1))
                                                         : embed(*options.embedder, s));
    }
  }

  DiversityReport report;
  double pixel_sum = 0.0, perceptual_sum = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (std::size_t j = i + 1; j < samples.size(); ++j) {
      PairScore p;
      p.first = static_cast<int>(i);
      p.second = static_cast<int>(j);
      p.pixel_mse = masked_mse(samples[i], samples[j], mask);
      pixel_sum += p.pixel_mse;
      if (options.embedder) {
        p.perceptual = perceptual_distance(features[i], features[j]);
        perceptual_sum += *p.perceptual;
      }
      report.pairs.push_back(p);
    }
  report.num_pairs = static_cast<int>(report.pairs.size());
  report.mean_pairwise_pixel_mse_in_mask = pixel_sum / report.num_pairs;
  if (options.embedder) report.mean_pairwise_perceptual = perceptual_sum / report.num_pairs;
  return report;
}

nlohmann::json to_json(const DiversityReport& report) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : report.pairs) {
    nlohmann::json j{{"first", p.first}, {"second", p.second}, {"pixel_mse", p.pixel_mse}};
    if (p.perceptual) j["perceptual"] = *p.perceptual;
    pairs.push_back(j);
  }
  nlohmann::json out{{"mean_pairwise_pixel_mse_in_mask", report.mean_pairwise_pixel_mse_in_mask},
                     {"num_pairs", report.num_pairs},
                     {"pairs", pairs}};
  out["mean_pairwise_perceptual"] =
      report.mean_pairwise_perceptual ? nlohmann::json(*report.mean_pairwise_perceptual) : nlohmann::json(nullptr);
  return out;
}

}  // namespace holefill
