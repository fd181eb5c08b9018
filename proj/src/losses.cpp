#include "holefill/losses.hpp"

#include <cmath>

#include "holefill/errors.hpp"
#include "holefill/ops.hpp"

namespace holefill {

using ag::Var;

namespace {
// Keeps the norm differentiable when the gradient vanishes.
constexpr double kNormEps = 1e-16;
}  // namespace

Var critic_score(const Var& map, const Mask* valid_positions) {
  if (!valid_positions || valid_positions->all()) return ag::mean(map);
  if (valid_positions->none()) {
    throw ConfigError("no valid patch positions at a fine scale; the scale should have been trained as coarse");
  }
  const int c = map.value().channels();
  return ag::weighted_mean(map, mask_tensor(*valid_positions, c));
}

Var gradient_penalty(const CriticFn& critic, const Tensor& real, const Tensor& fake, double epsilon) {
  require_same_shape(real, fake, "gradient_penalty");
  Tensor mixed(real.shape());
  for (std::size_t i = 0; i < real.size(); ++i) mixed[i] = epsilon * real[i] + (1.0 - epsilon) * fake[i];
  const Var u(std::move(mixed), true);
  const Var out = ag::sum(critic(u, CriticInput::Interpolate));
  const Var g = ag::grad(out, std::vector<Var>{u}, true)[0];
  const Var norm = ag::pow_scalar(ag::add_scalar(ag::sum(ag::mul(g, g)), kNormEps), 0.5);
  const Var diff = ag::add_scalar(norm, -1.0);
  return ag::mul(diff, diff);
}

WganGpTerms wgan_gp_losses(const CriticFn& critic, const Var& real, const Var& fake, const ValidityMap* validity,
                           double gp_weight, double epsilon) {
  require_same_shape(real.value(), fake.value(), "wgan_gp_losses");
  const Mask* valid = validity ? &validity->valid : nullptr;
  if (valid && valid->none()) {
    throw ConfigError("validity map is empty at a fine scale; the scale should have been trained as coarse");
  }
  WganGpTerms terms;
  const Var real_score = critic_score(critic(real, CriticInput::Real), valid);
  const Var fake_score = critic_score(critic(fake, CriticInput::Fake), nullptr);
  terms.gradient_penalty = gradient_penalty(critic, real.value(), fake.value(), epsilon);
  terms.d_loss = ag::add(ag::sub(fake_score, real_score), ag::scale(terms.gradient_penalty, gp_weight));
  terms.g_loss_adv = ag::scale(fake_score, -1.0);
  terms.real_score = real_score.item();
  terms.fake_score = fake_score.item();
  return terms;
}

Var reconstruction_loss(const Var& generated, const Image& target, const SoftMask& soft) {
  const Tensor& g = generated.value();
  if (g.rank() != 3 || g.channels() != 3 || g.height() != target.height() || g.width() != target.width() ||
      soft.height != target.height() || soft.width != target.width()) {
    throw std::invalid_argument("reconstruction_loss: dimension mismatch");
  }
  Tensor keep = scalar_map_tensor(soft, 3);
  for (double& v : keep.values()) v = 1.0 - v;
  const Var weights(keep);
  const Var diff = ag::mul(ag::sub(generated, Var(target.tensor())), weights);
  return ag::mean(ag::mul(diff, diff));
}

FineScaleWeights fine_scale_weights(const Mask& mask, const SoftMask& soft, RecWeightDenominator denominator) {
  const double total = static_cast<double>(mask.size());
  const double valid = total - static_cast<double>(mask.count());
  if (valid <= 0.0) throw ConfigError("fine-scale weights need at least one valid pixel");
  FineScaleWeights w;
  w.delta = total / valid;
  const double soft_sum = soft.sum();
  const double denom = denominator == RecWeightDenominator::SoftMaskSum ? soft_sum : total - soft_sum;
  w.delta_rec = denom > 0.0 ? total / denom : 1.0;
  return w;
}

double compute_noise_gain(const Image& upsampled_reconstruction, const Image& reference, const Mask* invalid,
                          double floor) {
  if (upsampled_reconstruction.height() != reference.height() || upsampled_reconstruction.width() != reference.width()) {
    throw std::invalid_argument("compute_noise_gain: dimension mismatch");
  }
  double acc = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < reference.height(); ++y)
    for (int x = 0; x < reference.width(); ++x) {
      if (invalid && (*invalid)(y, x)) continue;
      for (int c = 0; c < 3; ++c) {
        const double d = upsampled_reconstruction.at(c, y, x) - reference.at(c, y, x);
        acc += d * d;
      }
      n += 3;
    }
  if (n == 0) return 1.0;
  return std::max(floor, std::sqrt(acc / static_cast<double>(n)));
}

}  // namespace holefill
