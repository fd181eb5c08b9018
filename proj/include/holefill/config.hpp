#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "holefill/losses.hpp"
#include "holefill/mask_calculus.hpp"
#include "holefill/naive_inpaint.hpp"
#include "holefill/pyramid.hpp"

namespace holefill {

struct StageSchedule {
  int iterations = 0;
  double learning_rate = 0.0;
  int lr_decay_after = -1;  // iteration at which lr is multiplied by lr_decay; -1 = never
  double lr_decay = 0.1;
  int d_steps = 3;
  int g_steps = 3;
  double gp_weight = 0.1;
  double rec_weight = 10.0;
  double rec_weight_late = 10.0;  // used on the finest third of the scales
};

enum class ZRecMode {
  CoarsestOnly,  // fixed draw at the coarsest scale, zeros elsewhere
  PerScale,      // fixed draw at every scale, scaled by the scale's gain
};

struct TrainConfig {
  std::string preset = "full";
  PyramidSpec pyramid;
  int receptive_field = 11;
  double split_threshold = 0.4;
  StageSchedule coarse;
  StageSchedule fine;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  int base_channels = 32;
  int channel_period = 4;
  int num_blocks = 5;
  double init_std = 0.02;
  double soft_mask_sigma = 5.0;
  double blend_sigma = 5.0;
  NaiveInpaintConfig naive;

  // Ablations and open-question switches.
  bool mask_bn = true;
  bool use_coarse_scales = true;
  RecWeightDenominator rec_weight_denominator = RecWeightDenominator::SoftMaskSum;
  SoftMaskRule soft_mask_rule = SoftMaskRule::OneInsideMask;
  ZRecMode z_rec_mode = ZRecMode::CoarsestOnly;
  double noise_variance = 1.0;

  std::uint64_t seed = 0;
  int progress_interval = 25;

  void validate() const;
};

// "full": the complete training schedule. "fast": desk-scale CI run (300 iterations
// per scale, at most 5 scales on small inputs). "smoke": a few iterations,
// only checks that the pipeline runs.
TrainConfig make_preset(const std::string& name);

void to_json(nlohmann::json& j, const StageSchedule& s);
void from_json(const nlohmann::json& j, StageSchedule& s);
void to_json(nlohmann::json& j, const TrainConfig& c);
// Keys absent from `j` keep their current value, so a partial object acts as
// a set of overrides.
void from_json(const nlohmann::json& j, TrainConfig& c);
void apply_overrides(TrainConfig& config, const nlohmann::json& overrides);

std::string to_string(RecWeightDenominator d);
RecWeightDenominator parse_rec_weight_denominator(const std::string& s);
std::string to_string(SoftMaskRule r);
SoftMaskRule parse_soft_mask_rule(const std::string& s);
std::string to_string(ZRecMode m);
ZRecMode parse_z_rec_mode(const std::string& s);

}  // namespace holefill
