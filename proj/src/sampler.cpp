#include "holefill/sampler.hpp"

#include <cmath>

#include "holefill/errors.hpp"
#include "holefill/mask_calculus.hpp"

namespace holefill {

namespace {
constexpr std::uint64_t kSampleStream = 0x73616d70ULL;

void require_complete(const ModelBundle& bundle) {
  if (!bundle.complete) throw ValidationError("bundle is not complete; finish or resume training first");
}
}  // namespace

DiversityMode diversity_mode(const std::string& name, int receptive_field) {
  const int half = (receptive_field - 1) / 2;
  if (name == "normal") return {name, half, 1.0};
  if (name == "medium") return {name, std::max(0, half / 2), 1.0};
  if (name == "high") return {name, 0, 1.0};
  throw ValidationError("unknown diversity mode '" + name + "' (expected normal, medium or high)");
}

Tensor compose_noise(const Tensor& z_rec, const Mask& mask, int erosion_radius, double stddev, Rng& rng) {
  if (z_rec.rank() != 3 || z_rec.height() != mask.height() || z_rec.width() != mask.width()) {
    throw ValidationError("noise and mask dimensions differ");
  }
  if (erosion_radius < 0) throw ValidationError("erosion radius must be non-negative");
  if (stddev == 0.0) return z_rec;
  const Mask region = erode(mask, erosion_radius, StructuringElement::Square);
  const Tensor fresh = normal_tensor(z_rec.shape(), stddev, rng);
  Tensor out = z_rec;
  for (int c = 0; c < z_rec.channels(); ++c)
    for (int y = 0; y < mask.height(); ++y)
      for (int x = 0; x < mask.width(); ++x)
        if (region(y, x)) out.at(c, y, x) = fresh.at(c, y, x);
  return out;
}

Tensor upsample_to(const Tensor& image, int height, int width) {
  if (image.height() == height && image.width() == width) return image;
  return resample(image, height, width, ResampleKernel::Cubic);
}

Tensor run_scales(const ModelBundle& bundle, int from, int to, const std::function<Tensor(int)>& noise) {
  if (from < to) throw std::invalid_argument("run_scales: from < to");
  Tensor x;
  for (int n = from; n >= to; --n) {
    const ScaleModel& s = bundle.scale(n);
    const Tensor z = noise(n);
    if (n == bundle.coarsest_index()) {
      x = s.generator.infer(z, nullptr).value();
    } else {
      if (x.empty()) throw std::invalid_argument("run_scales: chain must start at the coarsest level");
      const Tensor prev = upsample_to(x, s.height, s.width);
      x = s.generator.infer(z, &prev).value();
    }
  }
  return x;
}

Tensor reconstruction_at(const ModelBundle& bundle, int n) {
  return run_scales(bundle, bundle.coarsest_index(), n, [&](int k) { return bundle.scale(k).z_rec; });
}

SoftMask snapped_blend_mask(const Mask& mask, double sigma) {
  SoftMask b = blend_mask(mask, sigma);
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x) {
      double& v = b(y, x);
      if (mask(y, x)) v = 1.0;
      else if (v < kBlendSnap) v = 0.0;
    }
  return b;
}

Image blend(const Image& generated, const Image& input, const SoftMask& weights) {
  if (generated.height() != input.height() || generated.width() != input.width() || weights.height != input.height() ||
      weights.width != input.width()) {
    throw ValidationError("blend: dimension mismatch");
  }
  Image out = input;
  for (int y = 0; y < input.height(); ++y)
    for (int x = 0; x < input.width(); ++x) {
      const double b = weights(y, x);
      if (b == 0.0) continue;
      for (int c = 0; c < 3; ++c) out.at(c, y, x) = generated.at(c, y, x) * b + input.at(c, y, x) * (1.0 - b);
    }
  return out;
}

SampleResult generate(const ModelBundle& bundle, const SampleRequest& request) {
  require_complete(bundle);
  if (request.count < 1 || request.count > kMaxSampleCount) {
    throw ValidationError("sample count must lie in [1, " + std::to_string(kMaxSampleCount) + "]");
  }
  if (request.mode.noise_multiplier < 0.0) throw ValidationError("noise multiplier must be non-negative");
  const double amplitude = request.mode.noise_multiplier * std::sqrt(bundle.config.noise_variance);
  const int coarsest = bundle.coarsest_index();

  SampleResult result;
  result.blend_weights = snapped_blend_mask(bundle.mask, bundle.config.blend_sigma);
  for (int k = 0; k < request.count; ++k) {
    Rng rng = make_rng(request.seed, {kSampleStream, static_cast<std::uint64_t>(k)});
    const Tensor out = run_scales(bundle, coarsest, 0, [&](int n) {
      const ScaleModel& s = bundle.scale(n);
      return compose_noise(s.z_rec, bundle.pyramid[static_cast<std::size_t>(n)].mask, request.mode.erosion_radius,
                           amplitude * s.gain, rng);
    });
    result.images.push_back(blend(Image(out), bundle.image, result.blend_weights));
    result.sample_indices.push_back(static_cast<std::uint64_t>(k));
  }
  result.std_map = std_map(result.images);
  double inside = 0.0;
  std::size_t masked = 0;
  for (int y = 0; y < bundle.mask.height(); ++y)
    for (int x = 0; x < bundle.mask.width(); ++x) {
      const double s = result.std_map(y, x);
      if (bundle.mask(y, x)) {
        inside += s;
        ++masked;
      }
      if (result.blend_weights(y, x) == 0.0) result.max_std_outside_blend = std::max(result.max_std_outside_blend, s);
    }
  result.mean_std_in_mask = masked ? inside / static_cast<double>(masked) : 0.0;
  return result;
}

Image reconstruct(const ModelBundle& bundle) {
  require_complete(bundle);
  const Image rec(reconstruction_at(bundle, 0));
  return blend(rec, bundle.image, snapped_blend_mask(bundle.mask, bundle.config.blend_sigma));
}

ScalarMap std_map(std::span<const Image> images) {
  if (images.empty()) throw ValidationError("std map needs at least one image");
  const int h = images[0].height(), w = images[0].width();
  for (const auto& im : images)
    if (im.height() != h || im.width() != w) throw ValidationError("std map images differ in size");
  ScalarMap out(h, w, 0.0);
  if (images.size() < 2) return out;
  const double n = static_cast<double>(images.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double var_sum = 0.0;
      for (int c = 0; c < 3; ++c) {
        // Deviations from the first image, so identical pixels give exactly 0.
        const double ref = images[0].at(c, y, x);
        double mean = 0.0;
        for (const auto& im : images) mean += im.at(c, y, x) - ref;
        mean /= n;
        double ss = 0.0;
        for (const auto& im : images) ss += (im.at(c, y, x) - ref - mean) * (im.at(c, y, x) - ref - mean);
        var_sum += ss / (n - 1.0);
      }
      out(y, x) = std::sqrt(var_sum / 3.0);
    }
  return out;
}

}  // namespace holefill
