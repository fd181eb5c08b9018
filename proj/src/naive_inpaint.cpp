#include "holefill/naive_inpaint.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "holefill/errors.hpp"
#include "holefill/nets.hpp"
#include "holefill/ops.hpp"
#include "holefill/optim.hpp"
#include "holefill/rng.hpp"

namespace holefill {

using ag::Var;

NearestColorIndex::NearestColorIndex(std::vector<Rgb> colors) : colors_(std::move(colors)) {
  if (colors_.empty()) throw ValidationError("nearest-color index needs at least one color");
  std::vector<std::size_t> ids(colors_.size());
  std::iota(ids.begin(), ids.end(), 0);
  nodes_.reserve(colors_.size());
  root_ = build(ids, 0, ids.size(), 0);
}

int NearestColorIndex::build(std::vector<std::size_t>& ids, std::size_t lo, std::size_t hi, int depth) {
  if (lo >= hi) return -1;
  const int axis = depth % 3;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::nth_element(ids.begin() + static_cast<long>(lo), ids.begin() + static_cast<long>(mid),
                   ids.begin() + static_cast<long>(hi),
                   [&](std::size_t a, std::size_t b) { return colors_[a][axis] < colors_[b][axis]; });
  const int index = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{ids[mid], axis, -1, -1});
  const int left = build(ids, lo, mid, depth + 1);
  const int right = build(ids, mid + 1, hi, depth + 1);
  nodes_[static_cast<std::size_t>(index)].left = left;
  nodes_[static_cast<std::size_t>(index)].right = right;
  return index;
}

void NearestColorIndex::search(int node, const Rgb& q, std::size_t& best, double& best_d2) const {
  if (node < 0) return;
  const Node& n = nodes_[static_cast<std::size_t>(node)];
  const Rgb& p = colors_[n.point];
  const double d2 = (p[0] - q[0]) * (p[0] - q[0]) + (p[1] - q[1]) * (p[1] - q[1]) + (p[2] - q[2]) * (p[2] - q[2]);
  if (d2 < best_d2 || (d2 == best_d2 && n.point < best)) {
    best_d2 = d2;
    best = n.point;
  }
  const double delta = q[n.axis] - p[n.axis];
  const int near = delta < 0.0 ? n.left : n.right;
  const int far = delta < 0.0 ? n.right : n.left;
  search(near, q, best, best_d2);
  if (delta * delta <= best_d2) search(far, q, best, best_d2);
}

std::size_t NearestColorIndex::nearest(const Rgb& query) const {
  std::size_t best = colors_.size();
  double best_d2 = std::numeric_limits<double>::infinity();
  search(root_, query, best, best_d2);
  return best;
}

std::vector<Rgb> valid_colors(const Image& image, const Mask& mask) {
  check_same_dims(image, mask);
  std::vector<Rgb> colors;
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x)
      if (!mask(y, x)) colors.push_back({image.at(0, y, x), image.at(1, y, x), image.at(2, y, x)});
  return colors;
}

namespace {

// Per-pixel nearest valid color for every masked pixel; other pixels hold the
// output itself so their contribution vanishes.
Tensor nearest_targets(const Tensor& out, const Mask& mask, const NearestColorIndex& index) {
  Tensor target = out;
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask(y, x)) continue;
      const Rgb& nn = index.color(index.nearest({out.at(0, y, x), out.at(1, y, x), out.at(2, y, x)}));
      for (int c = 0; c < 3; ++c) target.at(c, y, x) = nn[static_cast<std::size_t>(c)];
    }
  return target;
}

}  // namespace

Var nn_color_loss(const Var& output, const Mask& mask, const NearestColorIndex& index) {
  const std::size_t masked = mask.count();
  if (masked == 0) return ag::scale(ag::sum(output), 0.0);
  const Var diff = ag::sub(output, Var(nearest_targets(output.value(), mask, index)));
  return ag::scale(ag::sum(ag::mul(ag::mul(diff, diff), Var(mask_tensor(mask, 3)))), 1.0 / static_cast<double>(masked));
}

double nn_color_loss(const Image& output, const Image& reference, const Mask& mask) {
  check_same_dims(output, mask);
  check_same_dims(reference, mask);
  auto colors = valid_colors(reference, mask);
  if (colors.empty()) throw ValidationError("nn color loss needs at least one valid pixel");
  const NearestColorIndex index(std::move(colors));
  ag::NoGradGuard guard;
  return nn_color_loss(Var(output.tensor()), mask, index).item();
}

int unet_depth_for(int height, int width) {
  const double ratio = std::min(height, width) / 8.0;
  const int depth = ratio > 0.0 ? static_cast<int>(std::floor(std::log2(ratio))) : 2;
  return std::clamp(depth, 2, 5);
}

namespace {

struct ConvBnAct {
  Var weight;
  Var bias;
  BatchNorm norm;

  ConvBnAct(int cin, int cout, Rng& rng) : norm(cout) {
    const double bound = 1.0 / std::sqrt(cin * 9.0);
    weight = Var(uniform_tensor({cout, cin, 3, 3}, -bound, bound, rng), true);
    bias = Var(uniform_tensor({cout}, -bound, bound, rng), true);
  }
  Var operator()(const Var& x) {
    return ag::leaky_relu(batch_norm(ag::conv2d(x, weight, bias), norm, NormMode::Batch, true), kLeakySlope);
  }
  void collect(std::vector<Var>& params) const {
    params.insert(params.end(), {weight, bias, norm.gamma, norm.beta});
  }
};

// Encoder/decoder with skip connections; average pooling down, nearest
// upsampling back to the skip's exact size.
class UNet {
 public:
  UNet(int in_channels, int width, int depth, Rng& rng) {
    for (int l = 0; l <= depth; ++l) {
      encoder_.emplace_back(l == 0 ? in_channels : width, width, rng);
      encoder_.emplace_back(width, width, rng);
    }
    for (int l = 0; l < depth; ++l) {
      decoder_.emplace_back(2 * width, width, rng);
      decoder_.emplace_back(width, width, rng);
    }
    const double bound = 1.0 / std::sqrt(width * 9.0);
    out_weight_ = Var(uniform_tensor({3, width, 3, 3}, -bound, bound, rng), true);
    out_bias_ = Var(uniform_tensor({3}, -bound, bound, rng), true);
  }

  Var forward(const Var& input) {
    const std::size_t depth = decoder_.size() / 2;
    std::vector<Var> skips;
    Var h = input;
    for (std::size_t l = 0; l <= depth; ++l) {
      if (l > 0) h = ag::avg_pool2(h);
      h = encoder_[2 * l + 1](encoder_[2 * l](h));
      skips.push_back(h);
    }
    for (std::size_t l = depth; l-- > 0;) {
      const Var& skip = skips[l];
      const Var up = ag::upsample_nearest(h, skip.value().height(), skip.value().width());
      const std::size_t d = 2 * (depth - 1 - l);
      h = decoder_[d + 1](decoder_[d](ag::concat_channels(up, skip)));
    }
    return ag::tanh(ag::conv2d(h, out_weight_, out_bias_));
  }

  std::vector<Var> parameters() const {
    std::vector<Var> params;
    for (const auto& b : encoder_) b.collect(params);
    for (const auto& b : decoder_) b.collect(params);
    params.push_back(out_weight_);
    params.push_back(out_bias_);
    return params;
  }

 private:
  std::vector<ConvBnAct> encoder_;
  std::vector<ConvBnAct> decoder_;
  Var out_weight_;
  Var out_bias_;
};

bool finite(double v) { return std::isfinite(v); }

struct Attempt {
  bool diverged = false;
  Image raw;
  double loss = 0.0;
};

Attempt train_once(const Image& image, const Mask& mask, const NaiveInpaintConfig& config, double lr,
                   const NearestColorIndex& index, const std::function<void(const NaiveProgress&)>& on_progress,
                   const std::stop_token& stop) {
  const int h = image.height(), w = image.width();
  const int depth = config.unet_depth > 0 ? config.unet_depth : unet_depth_for(h, w);
  Rng rng = make_rng(config.seed, {0x6e616976ULL});
  UNet net(config.input_channels, config.unet_width, depth, rng);
  const Tensor fixed_input = uniform_tensor({config.input_channels, h, w}, 0.0, config.input_noise_scale, rng);
  Adam adam(net.parameters(), AdamOptions{lr, 0.9, 0.999, 1e-8});

  Tensor valid_weights = mask_tensor(mask.inverted(), 3);
  const Var target(image.tensor());
  const bool has_masked = mask.count() > 0;

  Attempt attempt;
  for (int it = 0; it < config.iterations; ++it) {
    if (stop.stop_requested()) throw CancelledError("naive completion cancelled");
    Tensor input = fixed_input;
    if (config.input_jitter_std > 0.0) {
      const Tensor jitter = normal_tensor(input.shape(), config.input_jitter_std, rng);
      for (std::size_t i = 0; i < input.size(); ++i) input[i] += jitter[i];
    }
    const Var out = net.forward(Var(input));
    const Var diff = ag::sub(out, target);
    Var loss = ag::weighted_mean(ag::mul(diff, diff), valid_weights);
    if (has_masked) loss = ag::add(loss, ag::scale(nn_color_loss(out, mask, index), config.nn_loss_weight));
    attempt.loss = loss.item();
    if (!finite(attempt.loss)) {
      attempt.diverged = true;
      return attempt;
    }
    adam.step(ag::gradient_values(loss, net.parameters()));
    if (on_progress && (it % 25 == 0 || it + 1 == config.iterations)) on_progress({it, attempt.loss});
  }
  ag::NoGradGuard guard;
  attempt.raw = Image(net.forward(Var(fixed_input)).value());
  for (double v : attempt.raw.tensor().values()) {
    if (!finite(v)) {
      attempt.diverged = true;
      break;
    }
  }
  return attempt;
}

}  // namespace

NaiveResult run_naive_inpaint(const Image& image, const Mask& mask, const NaiveInpaintConfig& config, int level_index,
                              const std::function<void(const NaiveProgress&)>& on_progress, std::stop_token stop) {
  check_same_dims(image, mask);
  if (config.iterations < 1) throw ConfigError("naive completion needs at least one iteration");
  if (config.unet_depth < 0) throw ConfigError("U-Net depth must be positive");
  NaiveResult result;
  result.level_index = level_index;
  if (mask.none()) {
    result.inpainted_full = image;
    result.inpainted_raw = image;
    return result;
  }
  auto colors = valid_colors(image, mask);
  if (colors.empty()) throw ValidationError("naive completion needs at least one valid pixel");
  const NearestColorIndex index(std::move(colors));

  Attempt attempt = train_once(image, mask, config, config.learning_rate, index, on_progress, stop);
  if (attempt.diverged) {
    result.attempts = 2;
    attempt = train_once(image, mask, config, config.learning_rate / 2.0, index, on_progress, stop);
    if (attempt.diverged) throw TrainingError("naive completion diverged twice (loss is not finite)");
  }
  result.inpainted_raw = attempt.raw;
  result.final_loss = attempt.loss;
  result.inpainted_full = image;
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x)
      if (mask(y, x))
        for (int c = 0; c < 3; ++c) result.inpainted_full.at(c, y, x) = attempt.raw.at(c, y, x);
  return result;
}

std::map<int, Image> coarse_reals_from_naive(const NaiveResult& result, const Pyramid& pyramid, const ScaleSplit& split) {
  const int coarsest = pyramid.coarsest_index();
  if (split.split_index > coarsest) throw ConfigError("no coarse levels to derive real images for");
  std::map<int, Image> reals;
  reals[split.split_index] = result.inpainted_full;
  for (int n = split.split_index + 1; n <= coarsest; ++n) {
    const auto& level = pyramid[static_cast<std::size_t>(n)];
    Image down = resample(reals[n - 1], level.image.height(), level.image.width(), ResampleKernel::Cubic);
    for (double& v : down.tensor().values()) v = std::clamp(v, -1.0, 1.0);
    reals[n] = std::move(down);
  }
  return reals;
}

}  // namespace holefill
