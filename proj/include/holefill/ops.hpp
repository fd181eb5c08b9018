#pragma once

#include "holefill/autograd.hpp"

namespace holefill::ag {

// Elementwise, equal shapes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var add_scalar(const Var& a, double offset);
Var pow_scalar(const Var& a, double exponent);
Var tanh(const Var& a);
Var leaky_relu(const Var& a, double negative_slope);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator*(const Var& a, double s) { return scale(a, s); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }

// Reductions / broadcasts.
Var sum(const Var& a);                       // -> shape {1}
Var mean(const Var& a);                      // -> shape {1}
Var expand(const Var& scalar, const Shape& shape);
Var channel_sum(const Var& a);               // (C,H,W) -> (C)
Var channel_broadcast(const Var& v, int height, int width);

// Sum of a*weights / sum(weights); weights are a constant tensor of a's shape.
Var weighted_mean(const Var& a, const Tensor& weights);

// Convolutions (odd square kernel, stride 1, zero padding) and their adjoints.
Var conv2d(const Var& x, const Var& weight);
Var conv2d_input_adjoint(const Var& g, const Var& weight);
Var conv2d_weight_adjoint(const Var& x, const Var& g, int kernel_size);
Var conv2d(const Var& x, const Var& weight, const Var& bias);

Var avg_pool2(const Var& x);
Var avg_pool2_adjoint(const Var& g, int height, int width);
Var upsample_nearest(const Var& x, int height, int width);
Var upsample_nearest_adjoint(const Var& g, int height, int width);

// Channel concatenation for (C,H,W) tensors.
Var concat_channels(const Var& a, const Var& b);
Var slice_channels(const Var& x, int begin, int count);
Var embed_channels(const Var& x, int begin, int total);

}  // namespace holefill::ag
