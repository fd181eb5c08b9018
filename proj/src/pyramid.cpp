#include "holefill/pyramid.hpp"

#include <algorithm>
#include <cmath>

#include "holefill/errors.hpp"

namespace holefill {
namespace {

struct Taps {
  int first = 0;
  std::vector<double> weights;
};

double cubic(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x < 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return (((x - 5.0) * x + 8.0) * x - 4.0) * a;
  return 0.0;
}

std::vector<Taps> cubic_taps(int in_size, int out_size) {
  const double scale = static_cast<double>(in_size) / out_size;
  const double stretch = std::max(scale, 1.0);
  const double support = 2.0 * stretch;
  std::vector<Taps> taps(static_cast<std::size_t>(out_size));
  for (int i = 0; i < out_size; ++i) {
    const double center = (i + 0.5) * scale;
    const int lo = std::max(0, static_cast<int>(std::floor(center - support + 0.5)));
    const int hi = std::min(in_size, static_cast<int>(std::floor(center + support + 0.5)));
    Taps& t = taps[static_cast<std::size_t>(i)];
    t.first = lo;
    double total = 0.0;
    for (int j = lo; j < hi; ++j) {
      const double w = cubic((j + 0.5 - center) / stretch);
      t.weights.push_back(w);
      total += w;
    }
    if (total != 0.0)
      for (double& w : t.weights) w /= total;
  }
  return taps;
}

std::vector<Taps> area_taps(int in_size, int out_size) {
  const double scale = static_cast<double>(in_size) / out_size;
  std::vector<Taps> taps(static_cast<std::size_t>(out_size));
  for (int i = 0; i < out_size; ++i) {
    const double lo = i * scale, hi = (i + 1) * scale;
    const int first = static_cast<int>(std::floor(lo));
    const int last = std::min(in_size - 1, static_cast<int>(std::ceil(hi)) - 1);
    Taps& t = taps[static_cast<std::size_t>(i)];
    t.first = first;
    double total = 0.0;
    for (int j = first; j <= last; ++j) {
      const double w = std::max(0.0, std::min(hi, j + 1.0) - std::max(lo, static_cast<double>(j)));
      t.weights.push_back(w);
      total += w;
    }
    for (double& w : t.weights) w /= total;
  }
  return taps;
}

std::vector<Taps> make_taps(int in_size, int out_size, ResampleKernel kernel) {
  return kernel == ResampleKernel::Cubic ? cubic_taps(in_size, out_size) : area_taps(in_size, out_size);
}

}  // namespace

Tensor resample(const Tensor& chw, int height, int width, ResampleKernel kernel) {
  if (chw.rank() != 3) throw std::invalid_argument("resample expects a (C,H,W) tensor");
  if (height <= 0 || width <= 0) throw ValidationError("resample target must be positive");
  const int c = chw.channels(), h = chw.height(), w = chw.width();
  if (h == height && w == width) return chw;
  const auto tx = make_taps(w, width, kernel);
  const auto ty = make_taps(h, height, kernel);

  Tensor horizontal({c, h, width});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < width; ++x) {
        const Taps& t = tx[static_cast<std::size_t>(x)];
        double acc = 0.0;
        for (std::size_t k = 0; k < t.weights.size(); ++k) acc += t.weights[k] * chw.at(ch, y, t.first + static_cast<int>(k));
        horizontal.at(ch, y, x) = acc;
      }
  Tensor out({c, height, width});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < height; ++y) {
      const Taps& t = ty[static_cast<std::size_t>(y)];
      for (int x = 0; x < width; ++x) {
        double acc = 0.0;
        for (std::size_t k = 0; k < t.weights.size(); ++k)
          acc += t.weights[k] * horizontal.at(ch, t.first + static_cast<int>(k), x);
        out.at(ch, y, x) = acc;
      }
    }
  return out;
}

Image resample(const Image& image, int height, int width, ResampleKernel kernel) {
  return Image(resample(image.tensor(), height, width, kernel));
}

ScalarMap resample(const ScalarMap& map, int height, int width, ResampleKernel kernel) {
  const Tensor t = resample(scalar_map_tensor(map), height, width, kernel);
  ScalarMap out(height, width);
  std::copy(t.values().begin(), t.values().end(), out.values.begin());
  return out;
}

void PyramidSpec::validate() const {
  if (!(scale_factor > 1.0 && scale_factor <= 2.0)) throw ConfigError("pyramid scale_factor must lie in (1, 2]");
  if (min_dimension < 16) throw ConfigError("pyramid min_dimension must be at least 16");
  if (!(mask_threshold >= 0.0 && mask_threshold < 1.0)) throw ConfigError("mask_threshold must lie in [0, 1)");
}

std::vector<std::pair<int, int>> pyramid_dims(int height, int width, const PyramidSpec& spec) {
  spec.validate();
  std::vector<std::pair<int, int>> dims{{height, width}};
  while (true) {
    const auto [h, w] = dims.back();
    const int nh = static_cast<int>(std::lround(h / spec.scale_factor));
    const int nw = static_cast<int>(std::lround(w / spec.scale_factor));
    if (std::min(nh, nw) < spec.min_dimension || nh >= h || nw >= w) break;
    dims.emplace_back(nh, nw);
  }
  return dims;
}

Mask downsample_mask(const Mask& mask, int height, int width, double threshold) {
  if (mask.height() == height && mask.width() == width) return mask;
  const ScalarMap averaged = resample(to_scalar_map(mask), height, width, ResampleKernel::Area);
  Mask out(height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) out.set(y, x, averaged(y, x) > threshold);
  return out;
}

Pyramid build_pyramid(const Image& image, const Mask& mask, const PyramidSpec& spec) {
  check_same_dims(image, mask);
  if (image.empty()) throw ValidationError("cannot build a pyramid from an empty image");
  Pyramid pyramid;
  pyramid.undersized = std::min(image.height(), image.width()) < spec.min_dimension;
  const auto dims = pyramid_dims(image.height(), image.width(), spec);
  for (std::size_t n = 0; n < dims.size(); ++n) {
    PyramidLevel level;
    level.index = static_cast<int>(n);
    if (n == 0) {
      level.image = image;
      level.mask = mask;
    } else {
      const auto [h, w] = dims[n];
      level.image = resample(image, h, w, ResampleKernel::Cubic);
      for (double& v : level.image.tensor().values()) v = std::clamp(v, -1.0, 1.0);
      level.mask = downsample_mask(mask, h, w, spec.mask_threshold);
    }
    pyramid.levels.push_back(std::move(level));
  }
  return pyramid;
}

}  // namespace holefill
