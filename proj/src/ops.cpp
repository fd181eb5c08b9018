#include "holefill/ops.hpp"

#include <cmath>
#include <stdexcept>

namespace holefill::ag {
namespace {

template <typename F>
Tensor map_unary(const Tensor& a, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

template <typename F>
Tensor map_binary(const Tensor& a, const Tensor& b, F f, const char* what) {
  require_same_shape(a, b, what);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

std::vector<Var> grads(std::size_t n) { return std::vector<Var>(n); }

}  // namespace

Var add(const Var& a, const Var& b) {
  return make_result(map_binary(a.value(), b.value(), std::plus<>{}, "add"), {a, b},
                     [](const Var& g, const std::vector<bool>&) { return std::vector<Var>{g, g}; });
}

Var sub(const Var& a, const Var& b) {
  return make_result(map_binary(a.value(), b.value(), std::minus<>{}, "sub"), {a, b},
                     [](const Var& g, const std::vector<bool>& needed) {
                       auto out = grads(2);
                       if (needed[0]) out[0] = g;
                       if (needed[1]) out[1] = scale(g, -1.0);
                       return out;
                     });
}

Var mul(const Var& a, const Var& b) {
  return make_result(map_binary(a.value(), b.value(), std::multiplies<>{}, "mul"), {a, b},
                     [a, b](const Var& g, const std::vector<bool>& needed) {
                       auto out = grads(2);
                       if (needed[0]) out[0] = mul(g, b);
                       if (needed[1]) out[1] = mul(g, a);
                       return out;
                     });
}

Var scale(const Var& a, double factor) {
  return make_result(map_unary(a.value(), [factor](double v) { return v * factor; }), {a},
                     [factor](const Var& g, const std::vector<bool>&) { return std::vector<Var>{scale(g, factor)}; });
}

Var add_scalar(const Var& a, double offset) {
  return make_result(map_unary(a.value(), [offset](double v) { return v + offset; }), {a},
                     [](const Var& g, const std::vector<bool>&) { return std::vector<Var>{g}; });
}

Var pow_scalar(const Var& a, double exponent) {
  return make_result(map_unary(a.value(), [exponent](double v) { return std::pow(v, exponent); }), {a},
                     [a, exponent](const Var& g, const std::vector<bool>&) {
                       if (exponent == 1.0) return std::vector<Var>{g};
                       return std::vector<Var>{mul(g, scale(pow_scalar(a, exponent - 1.0), exponent))};
                     });
}

Var tanh(const Var& a) {
  return make_result(map_unary(a.value(), [](double v) { return std::tanh(v); }), {a},
                     [a](const Var& g, const std::vector<bool>&) {
                       const Var t = tanh(a);
                       return std::vector<Var>{mul(g, add_scalar(scale(mul(t, t), -1.0), 1.0))};
                     });
}

Var leaky_relu(const Var& a, double negative_slope) {
  // Piecewise-linear: multiply by a locally constant slope map.
  Var slopes(map_unary(a.value(), [negative_slope](double v) { return v > 0.0 ? 1.0 : negative_slope; }));
  return mul(a, slopes);
}

Var sum(const Var& a) {
  double total = 0.0;
  for (double v : a.value().values()) total += v;
  const Shape shape = a.shape();
  return make_result(Tensor::scalar(total), {a}, [shape](const Var& g, const std::vector<bool>&) {
    return std::vector<Var>{expand(g, shape)};
  });
}

Var mean(const Var& a) {
  const auto n = a.value().size();
  if (n == 0) throw std::invalid_argument("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var expand(const Var& s, const Shape& shape) {
  if (s.value().size() != 1) throw std::invalid_argument("expand expects a single-element tensor");
  return make_result(Tensor(shape, s.value()[0]), {s},
                     [](const Var& g, const std::vector<bool>&) { return std::vector<Var>{sum(g)}; });
}

Var channel_sum(const Var& a) {
  const int h = a.value().height(), w = a.value().width();
  return make_result(kernels::channel_sum(a.value()), {a}, [h, w](const Var& g, const std::vector<bool>&) {
    return std::vector<Var>{channel_broadcast(g, h, w)};
  });
}

Var channel_broadcast(const Var& v, int height, int width) {
  return make_result(kernels::channel_broadcast(v.value(), height, width), {v},
                     [](const Var& g, const std::vector<bool>&) { return std::vector<Var>{channel_sum(g)}; });
}

Var weighted_mean(const Var& a, const Tensor& weights) {
  require_same_shape(a.value(), weights, "weighted_mean");
  double total = 0.0;
  for (double w : weights.values()) total += w;
  if (total <= 0.0) throw std::invalid_argument("weighted_mean: weights sum to zero");
  return scale(sum(mul(a, Var(weights))), 1.0 / total);
}

Var conv2d(const Var& x, const Var& weight) {
  const int k = weight.value().dim(2);
  return make_result(kernels::conv2d(x.value(), weight.value()), {x, weight},
                     [x, weight, k](const Var& g, const std::vector<bool>& needed) {
                       auto out = grads(2);
                       if (needed[0]) out[0] = conv2d_input_adjoint(g, weight);
                       if (needed[1]) out[1] = conv2d_weight_adjoint(x, g, k);
                       return out;
                     });
}

// <conv(x, w), g> = <x, adj_in(g, w)> = <w, adj_w(x, g)>; the three ops form a
// closed family under differentiation.
Var conv2d_input_adjoint(const Var& g, const Var& weight) {
  const int k = weight.value().dim(2);
  return make_result(kernels::conv2d_input_adjoint(g.value(), weight.value()), {g, weight},
                     [g, weight, k](const Var& h, const std::vector<bool>& needed) {
                       auto out = grads(2);
                       if (needed[0]) out[0] = conv2d(h, weight);
                       if (needed[1]) out[1] = conv2d_weight_adjoint(h, g, k);
                       return out;
                     });
}

Var conv2d_weight_adjoint(const Var& x, const Var& g, int kernel_size) {
  return make_result(kernels::conv2d_weight_adjoint(x.value(), g.value(), kernel_size), {x, g},
                     [x, g](const Var& h, const std::vector<bool>& needed) {
                       auto out = grads(2);
                       if (needed[0]) out[0] = conv2d_input_adjoint(g, h);
                       if (needed[1]) out[1] = conv2d(x, h);
                       return out;
                     });
}

Var conv2d(const Var& x, const Var& weight, const Var& bias) {
  const Var y = conv2d(x, weight);
  return add(y, channel_broadcast(bias, y.value().height(), y.value().width()));
}

Var avg_pool2(const Var& x) {
  const int h = x.value().height(), w = x.value().width();
  return make_result(kernels::avg_pool2(x.value()), {x}, [h, w](const Var& g, const std::vector<bool>&) {
    return std::vector<Var>{avg_pool2_adjoint(g, h, w)};
  });
}

Var avg_pool2_adjoint(const Var& g, int height, int width) {
  return make_result(kernels::avg_pool2_adjoint(g.value(), height, width), {g},
                     [](const Var& h, const std::vector<bool>&) { return std::vector<Var>{avg_pool2(h)}; });
}

Var upsample_nearest(const Var& x, int height, int width) {
  const int h = x.value().height(), w = x.value().width();
  return make_result(kernels::upsample_nearest(x.value(), height, width), {x},
                     [h, w](const Var& g, const std::vector<bool>&) {
                       return std::vector<Var>{upsample_nearest_adjoint(g, h, w)};
                     });
}

Var upsample_nearest_adjoint(const Var& g, int height, int width) {
  const int h = g.value().height(), w = g.value().width();
  return make_result(kernels::upsample_nearest_adjoint(g.value(), height, width), {g},
                     [h, w](const Var& x, const std::vector<bool>&) {
                       return std::vector<Var>{upsample_nearest(x, h, w)};
                     });
}

Var concat_channels(const Var& a, const Var& b) {
  const Tensor& ta = a.value();
  const Tensor& tb = b.value();
  if (ta.rank() != 3 || tb.rank() != 3 || ta.height() != tb.height() || ta.width() != tb.width()) {
    throw std::invalid_argument("concat_channels: spatial mismatch");
  }
  Tensor out({ta.channels() + tb.channels(), ta.height(), ta.width()});
  std::copy(ta.values().begin(), ta.values().end(), out.data());
  std::copy(tb.values().begin(), tb.values().end(), out.data() + ta.size());
  const int ca = ta.channels(), cb = tb.channels();
  return make_result(std::move(out), {a, b}, [ca, cb](const Var& g, const std::vector<bool>& needed) {
    auto res = grads(2);
    if (needed[0]) res[0] = slice_channels(g, 0, ca);
    if (needed[1]) res[1] = slice_channels(g, ca, cb);
    return res;
  });
}

Var slice_channels(const Var& x, int begin, int count) {
  const Tensor& t = x.value();
  if (begin < 0 || count < 0 || begin + count > t.channels()) throw std::invalid_argument("slice_channels range");
  const std::size_t hw = static_cast<std::size_t>(t.height()) * t.width();
  Tensor out({count, t.height(), t.width()});
  std::copy(t.data() + begin * hw, t.data() + (begin + count) * hw, out.data());
  const int total = t.channels();
  return make_result(std::move(out), {x}, [begin, total](const Var& g, const std::vector<bool>&) {
    return std::vector<Var>{embed_channels(g, begin, total)};
  });
}

Var embed_channels(const Var& x, int begin, int total) {
  const Tensor& t = x.value();
  if (begin < 0 || begin + t.channels() > total) throw std::invalid_argument("embed_channels range");
  const std::size_t hw = static_cast<std::size_t>(t.height()) * t.width();
  Tensor out({total, t.height(), t.width()});
  std::copy(t.values().begin(), t.values().end(), out.data() + begin * hw);
  const int count = t.channels();
  return make_result(std::move(out), {x}, [begin, count](const Var& g, const std::vector<bool>&) {
    return std::vector<Var>{slice_channels(g, begin, count)};
  });
}

}  // namespace holefill::ag
