#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "holefill/tensor.hpp"

namespace holefill {

/// RGB image stored CHW with values nominally in [-1, 1].
class Image {
 public:
  Image() = default;
  Image(int height, int width, double fill = 0.0) : pixels_({3, height, width}, fill) {}
  explicit Image(Tensor chw);

  int height() const { return pixels_.empty() ? 0 : pixels_.height(); }
  int width() const { return pixels_.empty() ? 0 : pixels_.width(); }
  bool empty() const { return pixels_.empty(); }

  double& at(int c, int y, int x) { return pixels_.at(c, y, x); }
  double at(int c, int y, int x) const { return pixels_.at(c, y, x); }

  const Tensor& tensor() const { return pixels_; }
  Tensor& tensor() { return pixels_; }

  bool operator==(const Image&) const = default;

 private:
  Tensor pixels_;
};

/// Binary mask, 1 = missing / invalid pixel.
class Mask {
 public:
  Mask() = default;
  Mask(int height, int width, std::uint8_t fill = 0)
      : height_(height), width_(width), bits_(static_cast<std::size_t>(height) * width, fill ? 1 : 0) {}

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return bits_.size(); }

  std::uint8_t operator()(int y, int x) const { return bits_[static_cast<std::size_t>(y) * width_ + x]; }
  void set(int y, int x, bool masked) { bits_[static_cast<std::size_t>(y) * width_ + x] = masked ? 1 : 0; }
  std::span<const std::uint8_t> bits() const { return bits_; }

  std::size_t count() const;
  bool all() const { return count() == bits_.size(); }
  bool none() const { return count() == 0; }
  Mask inverted() const;

  bool operator==(const Mask&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Single-channel real-valued H x W map (soft masks, std maps).
struct ScalarMap {
  int height = 0;
  int width = 0;
  std::vector<double> values;

  ScalarMap() = default;
  ScalarMap(int h, int w, double fill = 0.0) : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}
  double& operator()(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
  double operator()(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
  double sum() const;
};

using SoftMask = ScalarMap;

ScalarMap to_scalar_map(const Mask& mask);
// (1, H, W) tensor of 0/1, or (channels, H, W) with the map replicated.
Tensor mask_tensor(const Mask& mask, int channels = 1);
Tensor scalar_map_tensor(const ScalarMap& map, int channels = 1);

void check_same_dims(const Image& image, const Mask& mask);

// Pixel codec. 8-bit v maps to v / 255 * 2 - 1.
Image load_image(const std::filesystem::path& path);
Image decode_image(std::span<const std::uint8_t> bytes);
// Pixel is masked iff its intensity (max over channels, in [0,1]) exceeds
// threshold. The default treats any nonzero value as masked.
inline constexpr double kDefaultMaskThreshold = 0.5 / 255.0;
Mask load_mask(const std::filesystem::path& path, double threshold = kDefaultMaskThreshold);
Mask decode_mask(std::span<const std::uint8_t> bytes, double threshold = kDefaultMaskThreshold);

std::uint8_t quantize(double value);
void save_image(const std::filesystem::path& path, const Image& image);
std::vector<std::uint8_t> encode_png(const Image& image);
void save_mask(const std::filesystem::path& path, const Mask& mask);
std::vector<std::uint8_t> encode_mask_png(const Mask& mask);
// Grey PNG, values in [0,1] scaled by `gain` and clamped.
void save_scalar_map_png(const std::filesystem::path& path, const ScalarMap& map, double gain = 1.0);

// Portable float map ("Pf" grayscale PFM, little-endian, bottom-to-top rows).
void save_pfm(const std::filesystem::path& path, const ScalarMap& map);
ScalarMap load_pfm(const std::filesystem::path& path);

}  // namespace holefill
