#include "holefill/nets.hpp"

#include "holefill/errors.hpp"
#include "holefill/mask_calculus.hpp"
#include "holefill/ops.hpp"

namespace holefill {

using ag::Var;

BatchNorm::BatchNorm(int channels)
    : gamma(Tensor({channels}, 1.0), true),
      beta(Tensor({channels}, 0.0), true),
      running_mean({channels}, 0.0),
      running_var({channels}, 1.0) {}

Var batch_norm(const Var& x, BatchNorm& bn, NormMode mode, bool update_running, const Mask* valid, double momentum) {
  const Tensor& xv = x.value();
  const int c = xv.channels(), h = xv.height(), w = xv.width();
  Var centered;
  Var variance;
  if (mode == NormMode::Running) {
    centered = ag::sub(x, Var(kernels::channel_broadcast(bn.running_mean, h, w)));
    variance = Var(bn.running_var);
  } else {
    Tensor weights;
    double count = static_cast<double>(h) * w;
    if (valid) {
      if (valid->height() != h || valid->width() != w) throw std::invalid_argument("batch_norm: validity size mismatch");
      const std::size_t n = valid->count();
      if (n == 0) {
        throw ConfigError(
            "masked batch norm has no valid feature positions; route this scale through the coarse (unmasked) path");
      }
      if (n != valid->size()) weights = mask_tensor(*valid, c);
      count = static_cast<double>(n);
    }
    auto masked = [&](const Var& v) { return weights.empty() ? v : ag::mul(v, Var(weights)); };
    const Var mean = ag::scale(ag::channel_sum(masked(x)), 1.0 / count);
    centered = ag::sub(x, ag::channel_broadcast(mean, h, w));
    variance = ag::scale(ag::channel_sum(masked(ag::mul(centered, centered))), 1.0 / count);
    if (update_running) {
      for (int ch = 0; ch < c; ++ch) {
        if (momentum >= 1.0) {
          bn.running_mean[ch] = mean.value()[ch];
          bn.running_var[ch] = variance.value()[ch];
        } else {
          bn.running_mean[ch] = (1.0 - momentum) * bn.running_mean[ch] + momentum * mean.value()[ch];
          bn.running_var[ch] = (1.0 - momentum) * bn.running_var[ch] + momentum * variance.value()[ch];
        }
      }
    }
  }
  const Var inv_std = ag::pow_scalar(ag::add_scalar(variance, kBatchNormEps), -0.5);
  const Var normalized = ag::mul(centered, ag::channel_broadcast(inv_std, h, w));
  return ag::add(ag::mul(normalized, ag::channel_broadcast(bn.gamma, h, w)), ag::channel_broadcast(bn.beta, h, w));
}

std::vector<Mask> propagate_validity(const Mask& input_validity, int num_layers, int conv_radius) {
  std::vector<Mask> out{input_validity};
  for (int l = 0; l < num_layers; ++l) out.push_back(erode(out.back(), conv_radius, StructuringElement::Square));
  return out;
}

namespace {

Var clone_leaf(const Var& v) { return v.defined() ? Var(v.value(), v.requires_grad()) : Var(); }

}  // namespace

ConvNet::ConvNet(const NetSpec& spec) : spec_(spec) {
  if (spec.num_blocks < 1) throw ConfigError("network needs at least one block");
  for (int b = 0; b < spec.num_blocks; ++b) {
    const bool last = b == spec.num_blocks - 1;
    const int cin = b == 0 ? spec.in_channels : spec.width;
    const int cout = last ? spec.out_channels : spec.width;
    Block block;
    block.weight = Var(Tensor({cout, cin, 3, 3}), true);
    block.bias = Var(Tensor({cout}), true);
    if (!last) block.norm.emplace(cout);
    block.activation = last ? spec.last_activation : Activation::LeakyRelu;
    blocks_.push_back(std::move(block));
  }
}

ConvNet::ConvNet(const ConvNet& other) : spec_(other.spec_) {
  for (const auto& b : other.blocks_) {
    Block copy;
    copy.weight = clone_leaf(b.weight);
    copy.bias = clone_leaf(b.bias);
    if (b.norm) {
      BatchNorm bn;
      bn.gamma = clone_leaf(b.norm->gamma);
      bn.beta = clone_leaf(b.norm->beta);
      bn.running_mean = b.norm->running_mean;
      bn.running_var = b.norm->running_var;
      copy.norm = std::move(bn);
    }
    copy.activation = b.activation;
    blocks_.push_back(std::move(copy));
  }
}

ConvNet& ConvNet::operator=(const ConvNet& other) {
  if (this != &other) *this = ConvNet(other);
  return *this;
}

Var ConvNet::run(const Var& x, const ForwardOptions& options, bool mutate) {
  Var h = x;
  int norm_layer = 0;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    Block& block = blocks_[b];
    h = ag::conv2d(h, block.weight, block.bias);
    if (block.norm) {
      ++norm_layer;
      const Mask* valid = nullptr;
      if (options.validity && options.norm == NormMode::Batch) {
        valid = &options.validity->at(static_cast<std::size_t>(b + 1));
      }
      h = batch_norm(h, *block.norm, options.norm, mutate && options.update_running_stats, valid,
                     options.running_momentum);
    }
    switch (block.activation) {
      case Activation::LeakyRelu: h = ag::leaky_relu(h, spec_.leaky_slope); break;
      case Activation::Tanh: h = ag::tanh(h); break;
      case Activation::None: break;
    }
  }
  return h;
}

Var ConvNet::forward(const Var& x, const ForwardOptions& options) { return run(x, options, true); }

Var ConvNet::infer(const Var& x) const {
  ForwardOptions options;
  options.norm = NormMode::Running;
  options.update_running_stats = false;
  // Running-mode normalisation reads but never writes the statistics.
  return const_cast<ConvNet*>(this)->run(x, options, false);
}

void ConvNet::init_normal(Rng& rng, double stddev) {
  for (auto& b : blocks_) {
    b.weight.mutable_value() = normal_tensor(b.weight.shape(), stddev, rng);
    b.bias.mutable_value() = normal_tensor(b.bias.shape(), stddev, rng);
    if (b.norm) *b.norm = BatchNorm(b.bias.shape()[0]);
  }
}

std::vector<Var> ConvNet::parameters() const {
  std::vector<Var> params;
  for (const auto& b : blocks_) {
    params.push_back(b.weight);
    params.push_back(b.bias);
    if (b.norm) {
      params.push_back(b.norm->gamma);
      params.push_back(b.norm->beta);
    }
  }
  return params;
}

std::size_t ConvNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.value().size();
  return n;
}

int ConvNet::num_norm_layers() const {
  int n = 0;
  for (const auto& b : blocks_) n += b.norm ? 1 : 0;
  return n;
}

std::map<std::string, Tensor> ConvNet::state() const {
  std::map<std::string, Tensor> out;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string p = "block" + std::to_string(i) + ".";
    const auto& b = blocks_[i];
    out[p + "conv.weight"] = b.weight.value();
    out[p + "conv.bias"] = b.bias.value();
    if (b.norm) {
      out[p + "bn.weight"] = b.norm->gamma.value();
      out[p + "bn.bias"] = b.norm->beta.value();
      out[p + "bn.running_mean"] = b.norm->running_mean;
      out[p + "bn.running_var"] = b.norm->running_var;
    }
  }
  return out;
}

void ConvNet::load_state(const std::map<std::string, Tensor>& state, const std::string& prefix) {
  auto take = [&](const std::string& name, const Shape& expected) -> const Tensor& {
    auto it = state.find(prefix + name);
    if (it == state.end()) throw IoError("missing tensor '" + prefix + name + "'");
    if (it->second.shape() != expected) {
      throw IoError("tensor '" + prefix + name + "' has shape " + shape_string(it->second.shape()) + ", expected " +
                    shape_string(expected));
    }
    return it->second;
  };
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string p = "block" + std::to_string(i) + ".";
    auto& b = blocks_[i];
    b.weight.mutable_value() = take(p + "conv.weight", b.weight.shape());
    b.bias.mutable_value() = take(p + "conv.bias", b.bias.shape());
    if (b.norm) {
      b.norm->gamma.mutable_value() = take(p + "bn.weight", b.norm->gamma.shape());
      b.norm->beta.mutable_value() = take(p + "bn.bias", b.norm->beta.shape());
      b.norm->running_mean = take(p + "bn.running_mean", b.norm->running_mean.shape());
      b.norm->running_var = take(p + "bn.running_var", b.norm->running_var.shape());
    }
  }
}

NetSpec generator_spec(int channels, int num_blocks) {
  return NetSpec{3, 3, channels, num_blocks, Activation::Tanh, kLeakySlope};
}

NetSpec discriminator_spec(int channels, int num_blocks) {
  return NetSpec{3, 1, channels, num_blocks, Activation::None, kLeakySlope};
}

Var Generator::forward(const Var& noise, const Var* upsampled_prev, const ForwardOptions& options) {
  if (!upsampled_prev) return net_.forward(noise, options);
  return ag::add(*upsampled_prev, net_.forward(ag::add(noise, *upsampled_prev), options));
}

Var Generator::infer(const Tensor& noise, const Tensor* upsampled_prev) const {
  ag::NoGradGuard guard;
  if (!upsampled_prev) return net_.infer(Var(noise));
  const Var prev(*upsampled_prev);
  return ag::add(prev, net_.infer(ag::add(Var(noise), prev)));
}

void Generator::calibrate(const Tensor& noise, const Tensor* upsampled_prev) {
  ag::NoGradGuard guard;
  ForwardOptions options;
  options.running_momentum = 1.0;
  if (!upsampled_prev) {
    net_.forward(Var(noise), options);
  } else {
    net_.forward(ag::add(Var(noise), Var(*upsampled_prev)), options);
  }
}

int channels_for_scale(int k, int base, int period) {
  if (k < 0 || base < 1 || period < 1) throw ConfigError("invalid channel schedule");
  return base << (k / period);
}

bool inherit_or_init(ConvNet& target, const ConvNet* previous, Rng& rng, double stddev) {
  if (previous && previous->spec().width == target.spec().width &&
      previous->spec().num_blocks == target.spec().num_blocks) {
    target = *previous;
    return true;
  }
  target.init_normal(rng, stddev);
  return false;
}

}  // namespace holefill
