#include "holefill/tensor.hpp"

#include <cblas.h>

#include <algorithm>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace holefill {

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ')';
  return out.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("negative dimension in shape " + shape_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_numel(shape_)) {
    throw std::invalid_argument("tensor data size does not match shape " + shape_string(shape_));
  }
}

double Tensor::item() const {
  if (data_.size() != 1) throw std::logic_error("item() on tensor of shape " + shape_string(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size()) {
    throw std::invalid_argument("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                                shape_string(b.shape()));
  }
}

namespace kernels {
namespace {

void require_rank(const Tensor& t, int rank, const char* what) {
  if (t.rank() != rank) {
    throw std::invalid_argument(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                                shape_string(t.shape()));
  }
}

// cols: (C*k*k, H*W)
std::vector<double> im2col(const Tensor& x, int k) {
  const int c = x.channels(), h = x.height(), w = x.width(), pad = k / 2;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  std::vector<double> cols(static_cast<std::size_t>(c) * k * k * hw, 0.0);
  for (int ch = 0; ch < c; ++ch) {
    const double* src = x.data() + ch * hw;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* dst = cols.data() + ((static_cast<std::size_t>(ch) * k + ky) * k + kx) * hw;
        const int dy = ky - pad, dx = kx - pad;
        const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          const int sy = y + dy;
          if (sy < 0 || sy >= h || x0 >= x1) continue;
          std::copy(src + sy * w + x0 + dx, src + sy * w + x1 + dx, dst + y * w + x0);
        }
      }
    }
  }
  return cols;
}

Tensor col2im(const std::vector<double>& cols, int c, int h, int w, int k) {
  const int pad = k / 2;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  Tensor out({c, h, w});
  for (int ch = 0; ch < c; ++ch) {
    double* dst = out.data() + ch * hw;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* src = cols.data() + ((static_cast<std::size_t>(ch) * k + ky) * k + kx) * hw;
        const int dy = ky - pad, dx = kx - pad;
        const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          const int sy = y + dy;
          if (sy < 0 || sy >= h) continue;
          double* row = dst + sy * w + dx;
          const double* srow = src + y * w;
          for (int x = x0; x < x1; ++x) row[x] += srow[x];
        }
      }
    }
  }
  return out;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w) {
  require_rank(x, 3, "conv2d input");
  require_rank(w, 4, "conv2d weight");
  const int cout = w.dim(0), cin = w.dim(1), k = w.dim(2);
  if (cin != x.channels() || k != w.dim(3) || k % 2 == 0) {
    throw std::invalid_argument("conv2d: incompatible shapes " + shape_string(x.shape()) + " and " +
                                shape_string(w.shape()));
  }
  const int h = x.height(), wd = x.width();
  const int hw = h * wd, kk = cin * k * k;
  Tensor out({cout, h, wd});
  if (hw == 0) return out;
  const auto cols = im2col(x, k);
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, cout, hw, kk, 1.0, w.data(), kk, cols.data(), hw, 0.0,
              out.data(), hw);
  return out;
}

Tensor conv2d_input_adjoint(const Tensor& g, const Tensor& w) {
  require_rank(g, 3, "conv2d_input_adjoint grad");
  require_rank(w, 4, "conv2d_input_adjoint weight");
  const int cout = w.dim(0), cin = w.dim(1), k = w.dim(2);
  if (cout != g.channels()) throw std::invalid_argument("conv2d_input_adjoint: channel mismatch");
  const int h = g.height(), wd = g.width();
  const int hw = h * wd, kk = cin * k * k;
  if (hw == 0) return Tensor({cin, h, wd});
  std::vector<double> cols(static_cast<std::size_t>(kk) * hw);
  cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, kk, hw, cout, 1.0, w.data(), kk, g.data(), hw, 0.0,
              cols.data(), hw);
  return col2im(cols, cin, h, wd, k);
}

Tensor conv2d_weight_adjoint(const Tensor& x, const Tensor& g, int kernel_size) {
  require_rank(x, 3, "conv2d_weight_adjoint input");
  require_rank(g, 3, "conv2d_weight_adjoint grad");
  if (x.height() != g.height() || x.width() != g.width()) {
    throw std::invalid_argument("conv2d_weight_adjoint: spatial mismatch");
  }
  const int cout = g.channels(), cin = x.channels(), k = kernel_size;
  const int hw = x.height() * x.width(), kk = cin * k * k;
  Tensor out({cout, cin, k, k});
  if (hw == 0) return out;
  const auto cols = im2col(x, k);
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, cout, kk, hw, 1.0, g.data(), hw, cols.data(), hw, 0.0,
              out.data(), kk);
  return out;
}

Tensor channel_sum(const Tensor& x) {
  require_rank(x, 3, "channel_sum");
  const std::size_t hw = static_cast<std::size_t>(x.height()) * x.width();
  Tensor out({x.channels()});
  for (int c = 0; c < x.channels(); ++c) {
    const double* p = x.data() + c * hw;
    out[c] = std::accumulate(p, p + hw, 0.0);
  }
  return out;
}

Tensor channel_broadcast(const Tensor& v, int height, int width) {
  require_rank(v, 1, "channel_broadcast");
  const std::size_t hw = static_cast<std::size_t>(height) * width;
  Tensor out({v.dim(0), height, width});
  for (int c = 0; c < v.dim(0); ++c) std::fill(out.data() + c * hw, out.data() + (c + 1) * hw, v[c]);
  return out;
}

Tensor avg_pool2(const Tensor& x) {
  require_rank(x, 3, "avg_pool2");
  const int c = x.channels(), h = x.height() / 2, w = x.width() / 2;
  Tensor out({c, h, w});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx)
        out.at(ch, y, xx) = 0.25 * (x.at(ch, 2 * y, 2 * xx) + x.at(ch, 2 * y, 2 * xx + 1) +
                                    x.at(ch, 2 * y + 1, 2 * xx) + x.at(ch, 2 * y + 1, 2 * xx + 1));
  return out;
}

Tensor avg_pool2_adjoint(const Tensor& g, int height, int width) {
  require_rank(g, 3, "avg_pool2_adjoint");
  if (g.height() != height / 2 || g.width() != width / 2) {
    throw std::invalid_argument("avg_pool2_adjoint: size mismatch");
  }
  Tensor out({g.channels(), height, width});
  for (int ch = 0; ch < g.channels(); ++ch)
    for (int y = 0; y < g.height(); ++y)
      for (int x = 0; x < g.width(); ++x) {
        const double v = 0.25 * g.at(ch, y, x);
        out.at(ch, 2 * y, 2 * x) = v;
        out.at(ch, 2 * y, 2 * x + 1) = v;
        out.at(ch, 2 * y + 1, 2 * x) = v;
        out.at(ch, 2 * y + 1, 2 * x + 1) = v;
      }
  return out;
}

Tensor upsample_nearest(const Tensor& x, int height, int width) {
  require_rank(x, 3, "upsample_nearest");
  Tensor out({x.channels(), height, width});
  for (int ch = 0; ch < x.channels(); ++ch)
    for (int y = 0; y < height; ++y) {
      const int sy = static_cast<int>(static_cast<long>(y) * x.height() / height);
      for (int xx = 0; xx < width; ++xx) {
        const int sx = static_cast<int>(static_cast<long>(xx) * x.width() / width);
        out.at(ch, y, xx) = x.at(ch, sy, sx);
      }
    }
  return out;
}

Tensor upsample_nearest_adjoint(const Tensor& g, int height, int width) {
  require_rank(g, 3, "upsample_nearest_adjoint");
  Tensor out({g.channels(), height, width});
  for (int ch = 0; ch < g.channels(); ++ch)
    for (int y = 0; y < g.height(); ++y) {
      const int sy = static_cast<int>(static_cast<long>(y) * height / g.height());
      for (int x = 0; x < g.width(); ++x) {
        const int sx = static_cast<int>(static_cast<long>(x) * width / g.width());
        out.at(ch, sy, sx) += g.at(ch, y, x);
      }
    }
  return out;
}

}  // namespace kernels
}  // namespace holefill
