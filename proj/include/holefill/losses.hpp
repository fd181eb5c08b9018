#pragma once

#include <functional>

#include "holefill/autograd.hpp"
#include "holefill/image.hpp"
#include "holefill/mask_calculus.hpp"

namespace holefill {

enum class CriticInput { Real, Fake, Interpolate };

// Maps an image (3,H,W) to a discrimination map. `kind` lets the caller pick
// masked normalisation for real inputs.
using CriticFn = std::function<ag::Var(const ag::Var& image, CriticInput kind)>;

// Mean of a discrimination map, restricted to valid positions when given.
ag::Var critic_score(const ag::Var& map, const Mask* valid_positions);

// (||grad_u sum(D(u))||_2 - 1)^2 at u = eps * real + (1 - eps) * fake. The
// result stays differentiable with respect to the critic parameters.
ag::Var gradient_penalty(const CriticFn& critic, const Tensor& real, const Tensor& fake, double epsilon);

struct WganGpTerms {
  ag::Var d_loss;      // fake - real + gp_weight * gp
  ag::Var g_loss_adv;  // -fake score
  ag::Var gradient_penalty;
  double real_score = 0.0;
  double fake_score = 0.0;
};

// Real score is averaged over `validity` when present (fine scales); fake
// images have no invalid pixels and use the whole map. Throws ConfigError on
// an all-invalid validity map.
WganGpTerms wgan_gp_losses(const CriticFn& critic, const ag::Var& real, const ag::Var& fake,
                           const ValidityMap* validity, double gp_weight, double epsilon);

// MSE between out * (1 - soft) and target * (1 - soft) over all pixels.
ag::Var reconstruction_loss(const ag::Var& generated, const Image& target, const SoftMask& soft);

enum class RecWeightDenominator {
  SoftMaskSum,  // H*W / sum(soft)
  ValidSum,     // H*W / sum(1 - soft)
};

struct FineScaleWeights {
  double delta = 1.0;      // gradient-penalty multiplier
  double delta_rec = 1.0;  // reconstruction multiplier
};

FineScaleWeights fine_scale_weights(const Mask& mask, const SoftMask& soft,
                                    RecWeightDenominator denominator = RecWeightDenominator::SoftMaskSum);

// RMSE between the upsampled coarser reconstruction and the reference over
// pixels outside `invalid` (all pixels when null), floored at `floor`.
double compute_noise_gain(const Image& upsampled_reconstruction, const Image& reference, const Mask* invalid,
                          double floor = 1e-4);

}  // namespace holefill
