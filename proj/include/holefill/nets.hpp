#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "holefill/autograd.hpp"
#include "holefill/image.hpp"
#include "holefill/rng.hpp"

namespace holefill {

inline constexpr double kLeakySlope = 0.2;
inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

enum class Activation { LeakyRelu, Tanh, None };

struct BatchNorm {
  ag::Var gamma;
  ag::Var beta;
  Tensor running_mean;
  Tensor running_var;

  explicit BatchNorm(int channels = 0);
};

enum class NormMode {
  Batch,    // statistics of the current input (training)
  Running,  // stored running statistics (evaluation)
};

// Batch normalisation over the spatial positions of a single (C,H,W) map.
// With `valid`, Batch-mode statistics use only positions where valid == 1;
// normalisation is still applied everywhere. Throws ConfigError when `valid`
// has no set position. Variance is the biased estimate.
ag::Var batch_norm(const ag::Var& x, BatchNorm& bn, NormMode mode, bool update_running, const Mask* valid = nullptr,
                   double momentum = kBatchNormMomentum);

// Feature validity after each of `num_layers` convolutions of radius
// `conv_radius`: v[l+1] = erode(v[l], conv_radius, square). Returns num_layers+1
// maps, v[0] = input validity.
std::vector<Mask> propagate_validity(const Mask& input_validity, int num_layers, int conv_radius = 1);

struct ForwardOptions {
  NormMode norm = NormMode::Batch;
  bool update_running_stats = true;
  // 1.0 replaces the running statistics with the current batch statistics.
  double running_momentum = kBatchNormMomentum;
  // Per-layer feature validity as produced by propagate_validity; entry l is
  // used by the normalisation following convolution l (1-based).
  const std::vector<Mask>* validity = nullptr;
};

struct NetSpec {
  int in_channels = 3;
  int out_channels = 3;
  int width = 32;
  int num_blocks = 5;
  Activation last_activation = Activation::None;
  double leaky_slope = kLeakySlope;
};

/// Stack of conv3x3-BN-LeakyReLU blocks. The last block is a bare conv
/// followed by `last_activation`.
class ConvNet {
 public:
  ConvNet() = default;
  explicit ConvNet(const NetSpec& spec);
  ConvNet(const ConvNet& other);
  ConvNet& operator=(const ConvNet& other);
  ConvNet(ConvNet&&) noexcept = default;
  ConvNet& operator=(ConvNet&&) noexcept = default;

  ag::Var forward(const ag::Var& x, const ForwardOptions& options);
  // Evaluation mode; never touches running statistics.
  ag::Var infer(const ag::Var& x) const;

  void init_normal(Rng& rng, double stddev);
  std::vector<ag::Var> parameters() const;
  std::size_t parameter_count() const;
  const NetSpec& spec() const { return spec_; }
  int num_norm_layers() const;

  // Flat name -> tensor view (parameters plus running statistics).
  std::map<std::string, Tensor> state() const;
  void load_state(const std::map<std::string, Tensor>& state, const std::string& prefix = "");

 private:
  struct Block {
    ag::Var weight;
    ag::Var bias;
    std::optional<BatchNorm> norm;
    Activation activation = Activation::LeakyRelu;
  };

  ag::Var run(const ag::Var& x, const ForwardOptions& options, bool mutate);

  NetSpec spec_;
  std::vector<Block> blocks_;
};

NetSpec generator_spec(int channels, int num_blocks = 5);
NetSpec discriminator_spec(int channels, int num_blocks = 5);

/// Residual single-scale generator: out = prev + F(noise + prev), or F(noise)
/// at the coarsest scale.
class Generator {
 public:
  Generator() = default;
  explicit Generator(int channels, int num_blocks = 5) : net_(generator_spec(channels, num_blocks)) {}

  ag::Var forward(const ag::Var& noise, const ag::Var* upsampled_prev, const ForwardOptions& options);
  ag::Var infer(const Tensor& noise, const Tensor* upsampled_prev) const;
  // Sets every running statistic to the batch statistics of this input, so
  // that infer() on it reproduces the training-mode output.
  void calibrate(const Tensor& noise, const Tensor* upsampled_prev);

  ConvNet& net() { return net_; }
  const ConvNet& net() const { return net_; }
  int channels() const { return net_.spec().width; }

 private:
  ConvNet net_;
};

/// Patch discriminator producing an H x W discrimination map.
class Discriminator {
 public:
  Discriminator() = default;
  explicit Discriminator(int channels, int num_blocks = 5) : net_(discriminator_spec(channels, num_blocks)) {}

  ag::Var forward(const ag::Var& image, const ForwardOptions& options) { return net_.forward(image, options); }

  ConvNet& net() { return net_; }
  const ConvNet& net() const { return net_; }
  int channels() const { return net_.spec().width; }

 private:
  ConvNet net_;
};

// Width for the k-th scale in training order (k = number of scales already
// trained): base * 2^floor(k / period).
int channels_for_scale(int k, int base = 32, int period = 4);

// Copy all parameters from `previous` when widths match; otherwise fresh
// N(0, stddev) initialisation. Returns true when weights were inherited.
bool inherit_or_init(ConvNet& target, const ConvNet* previous, Rng& rng, double stddev);

}  // namespace holefill
