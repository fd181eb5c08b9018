#include "holefill/image.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "holefill/errors.hpp"

namespace holefill {

Image::Image(Tensor chw) : pixels_(std::move(chw)) {
  if (pixels_.rank() != 3 || pixels_.channels() != 3) {
    throw ValidationError("image tensor must have shape (3,H,W), got " + shape_string(pixels_.shape()));
  }
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

Mask Mask::inverted() const {
  Mask out = *this;
  for (auto& b : out.bits_) b = b ? 0 : 1;
  return out;
}

double ScalarMap::sum() const { return std::accumulate(values.begin(), values.end(), 0.0); }

ScalarMap to_scalar_map(const Mask& mask) {
  ScalarMap out(mask.height(), mask.width());
  for (std::size_t i = 0; i < mask.size(); ++i) out.values[i] = mask.bits()[i];
  return out;
}

Tensor mask_tensor(const Mask& mask, int channels) {
  Tensor out({channels, mask.height(), mask.width()});
  const auto bits = mask.bits();
  for (int c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < bits.size(); ++i) out[c * bits.size() + i] = bits[i];
  return out;
}

Tensor scalar_map_tensor(const ScalarMap& map, int channels) {
  Tensor out({channels, map.height, map.width});
  const std::size_t n = map.values.size();
  for (int c = 0; c < channels; ++c) std::copy(map.values.begin(), map.values.end(), out.data() + c * n);
  return out;
}

void check_same_dims(const Image& image, const Mask& mask) {
  if (image.height() != mask.height() || image.width() != mask.width()) {
    std::ostringstream msg;
    msg << "mask is " << mask.height() << 'x' << mask.width() << " but image is " << image.height() << 'x'
        << image.width();
    throw ValidationError(msg.str());
  }
}

namespace {

Image from_mat(const cv::Mat& bgr) {
  if (bgr.empty() || bgr.rows == 0 || bgr.cols == 0) throw ValidationError("image has zero size");
  Image out(bgr.rows, bgr.cols);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      for (int c = 0; c < 3; ++c) out.at(c, y, x) = row[x][2 - c] / 255.0 * 2.0 - 1.0;
    }
  }
  return out;
}

Mask mask_from_mat(const cv::Mat& mat, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ValidationError("mask threshold must lie in (0,1)");
  if (mat.empty() || mat.rows == 0 || mat.cols == 0) throw ValidationError("mask has zero size");
  cv::Mat m8;
  if (mat.depth() == CV_16U) {
    mat.convertTo(m8, CV_8U, 1.0 / 257.0);
  } else {
    m8 = mat;
  }
  Mask out(m8.rows, m8.cols);
  const int channels = m8.channels();
  for (int y = 0; y < m8.rows; ++y) {
    const auto* row = m8.ptr<std::uint8_t>(y);
    for (int x = 0; x < m8.cols; ++x) {
      int peak = 0;
      for (int c = 0; c < std::min(channels, 3); ++c) peak = std::max<int>(peak, row[x * channels + c]);
      out.set(y, x, peak / 255.0 > threshold);
    }
  }
  return out;
}

cv::Mat to_mat(const Image& image) {
  cv::Mat mat(image.height(), image.width(), CV_8UC3);
  for (int y = 0; y < image.height(); ++y) {
    auto* row = mat.ptr<cv::Vec3b>(y);
    for (int x = 0; x < image.width(); ++x)
      for (int c = 0; c < 3; ++c) row[x][2 - c] = quantize(image.at(c, y, x));
  }
  return mat;
}

cv::Mat to_mat(const Mask& mask) {
  cv::Mat mat(mask.height(), mask.width(), CV_8UC1);
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x) mat.at<std::uint8_t>(y, x) = mask(y, x) ? 255 : 0;
  return mat;
}

void write_mat(const std::filesystem::path& path, const cv::Mat& mat) {
  std::vector<std::uint8_t> bytes;
  if (!cv::imencode(".png", mat, bytes)) throw IoError("failed to encode PNG for " + path.string());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

cv::Mat decode(std::span<const std::uint8_t> bytes, int flags) {
  if (bytes.empty()) throw DecodeError("empty image data");
  cv::Mat buf(1, static_cast<int>(bytes.size()), CV_8UC1, const_cast<std::uint8_t*>(bytes.data()));
  cv::Mat mat;
  try {
    mat = cv::imdecode(buf, flags);
  } catch (const cv::Exception& e) {
    throw DecodeError(std::string("image decode failed: ") + e.what());
  }
  if (mat.empty()) throw DecodeError("image data is not a decodable raster");
  return mat;
}

}  // namespace

Image decode_image(std::span<const std::uint8_t> bytes) { return from_mat(decode(bytes, cv::IMREAD_COLOR)); }

Image load_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_image(bytes);
  } catch (const DecodeError& e) {
    throw DecodeError(path.string() + ": " + e.what());
  }
}

Mask decode_mask(std::span<const std::uint8_t> bytes, double threshold) {
  return mask_from_mat(decode(bytes, cv::IMREAD_UNCHANGED), threshold);
}

Mask load_mask(const std::filesystem::path& path, double threshold) {
  const auto bytes = read_file(path);
  try {
    return decode_mask(bytes, threshold);
  } catch (const DecodeError& e) {
    throw DecodeError(path.string() + ": " + e.what());
  }
}

std::uint8_t quantize(double value) {
  const double scaled = std::round((value + 1.0) * 0.5 * 255.0);
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
}

void save_image(const std::filesystem::path& path, const Image& image) { write_mat(path, to_mat(image)); }

std::vector<std::uint8_t> encode_png(const Image& image) {
  std::vector<std::uint8_t> bytes;
  if (!cv::imencode(".png", to_mat(image), bytes)) throw IoError("failed to encode PNG");
  return bytes;
}

void save_mask(const std::filesystem::path& path, const Mask& mask) { write_mat(path, to_mat(mask)); }

std::vector<std::uint8_t> encode_mask_png(const Mask& mask) {
  std::vector<std::uint8_t> bytes;
  if (!cv::imencode(".png", to_mat(mask), bytes)) throw IoError("failed to encode PNG");
  return bytes;
}

void save_scalar_map_png(const std::filesystem::path& path, const ScalarMap& map, double gain) {
  cv::Mat mat(map.height, map.width, CV_8UC1);
  for (int y = 0; y < map.height; ++y)
    for (int x = 0; x < map.width; ++x)
      mat.at<std::uint8_t>(y, x) =
          static_cast<std::uint8_t>(std::clamp(std::round(map(y, x) * gain * 255.0), 0.0, 255.0));
  write_mat(path, mat);
}

void save_pfm(const std::filesystem::path& path, const ScalarMap& map) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "Pf\n" << map.width << ' ' << map.height << "\n-1.0\n";
  for (int y = map.height - 1; y >= 0; --y) {
    for (int x = 0; x < map.width; ++x) {
      const float v = static_cast<float>(map(y, x));
      out.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
  }
  if (!out) throw IoError("failed writing " + path.string());
}

ScalarMap load_pfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string magic;
  int width = 0, height = 0;
  double scale = 0.0;
  in >> magic >> width >> height >> scale;
  in.get();
  if (magic != "Pf" || width <= 0 || height <= 0 || scale >= 0.0) {
    throw DecodeError(path.string() + ": unsupported PFM header");
  }
  ScalarMap map(height, width);
  for (int y = height - 1; y >= 0; --y) {
    for (int x = 0; x < width; ++x) {
      float v = 0.0f;
      in.read(reinterpret_cast<char*>(&v), sizeof v);
      map(y, x) = v;
    }
  }
  if (!in) throw DecodeError(path.string() + ": truncated PFM");
  return map;
}

}  // namespace holefill
