#include "holefill/config.hpp"

#include "holefill/errors.hpp"

namespace holefill {

using nlohmann::json;

namespace {

StageSchedule full_coarse() {
  StageSchedule s;
  s.iterations = 2000;
  s.learning_rate = 5e-4;
  s.lr_decay_after = 1600;
  s.rec_weight = 10.0;
  s.rec_weight_late = 10.0;
  return s;
}

StageSchedule full_fine() {
  StageSchedule s;
  s.iterations = 3000;
  s.learning_rate = 5e-5;
  s.rec_weight = 10.0;
  s.rec_weight_late = 100.0;
  return s;
}

void check(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

void validate_stage(const StageSchedule& s, const std::string& name) {
  check(s.iterations >= 1, name + ".iterations must be >= 1");
  check(s.learning_rate > 0.0, name + ".learning_rate must be positive");
  check(s.lr_decay > 0.0, name + ".lr_decay must be positive");
  check(s.d_steps >= 1 && s.g_steps >= 1, name + " needs at least one D and one G step");
  check(s.gp_weight >= 0.0, name + ".gp_weight must be non-negative");
  check(s.rec_weight > 0.0 && s.rec_weight_late > 0.0, name + " reconstruction weights must be positive");
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

}  // namespace

void TrainConfig::validate() const {
  pyramid.validate();
  check(receptive_field >= 1 && receptive_field % 2 == 1, "receptive_field must be odd and positive");
  check(split_threshold >= 0.0 && split_threshold <= 1.0, "split_threshold must lie in [0, 1]");
  validate_stage(coarse, "coarse");
  validate_stage(fine, "fine");
  check(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0, "adam betas must lie in [0, 1)");
  check(base_channels >= 1 && channel_period >= 1, "invalid channel schedule");
  check(num_blocks >= 1, "num_blocks must be >= 1");
  check(init_std > 0.0, "init_std must be positive");
  check(soft_mask_sigma > 0.0 && blend_sigma > 0.0, "blur sigmas must be positive");
  check(naive.iterations >= 1, "naive.iterations must be >= 1");
  check(naive.learning_rate > 0.0, "naive.learning_rate must be positive");
  check(naive.unet_depth >= 0, "naive.unet_depth must be >= 0 (0 = automatic)");
  check(naive.unet_width >= 1 && naive.input_channels >= 1, "naive network sizes must be positive");
  check(noise_variance > 0.0, "noise_variance must be positive");
  check(progress_interval >= 1, "progress_interval must be >= 1");
}

TrainConfig make_preset(const std::string& name) {
  TrainConfig c;
  c.preset = name;
  c.coarse = full_coarse();
  c.fine = full_fine();
  if (name == "full") return c;
  if (name == "fast") {
    c.pyramid.min_dimension = 16;
    c.coarse.iterations = 300;
    c.coarse.lr_decay_after = 240;
    c.fine.iterations = 300;
    c.fine.learning_rate = 5e-4;
    c.fine.lr_decay_after = 240;
    c.naive.iterations = 300;
    return c;
  }
  if (name == "smoke") {
    c.pyramid.min_dimension = 16;
    c.coarse.iterations = 6;
    c.coarse.lr_decay_after = 4;
    c.coarse.d_steps = c.coarse.g_steps = 1;
    c.fine.iterations = 6;
    c.fine.d_steps = c.fine.g_steps = 1;
    c.naive.iterations = 10;
    c.progress_interval = 2;
    return c;
  }
  throw ConfigError("unknown preset '" + name + "' (expected full, fast or smoke)");
}

std::string to_string(RecWeightDenominator d) { return d == RecWeightDenominator::SoftMaskSum ? "soft" : "valid"; }

RecWeightDenominator parse_rec_weight_denominator(const std::string& s) {
  if (s == "soft") return RecWeightDenominator::SoftMaskSum;
  if (s == "valid") return RecWeightDenominator::ValidSum;
  throw ConfigError("rec_weight_denominator must be 'soft' or 'valid', got '" + s + "'");
}

std::string to_string(SoftMaskRule r) { return r == SoftMaskRule::OneInsideMask ? "one_inside" : "zero_inside"; }

SoftMaskRule parse_soft_mask_rule(const std::string& s) {
  if (s == "one_inside") return SoftMaskRule::OneInsideMask;
  if (s == "zero_inside") return SoftMaskRule::ZeroInsideMask;
  throw ConfigError("soft_mask_rule must be 'one_inside' or 'zero_inside', got '" + s + "'");
}

std::string to_string(ZRecMode m) { return m == ZRecMode::CoarsestOnly ? "coarsest" : "per_scale"; }

ZRecMode parse_z_rec_mode(const std::string& s) {
  if (s == "coarsest") return ZRecMode::CoarsestOnly;
  if (s == "per_scale") return ZRecMode::PerScale;
  throw ConfigError("z_rec_mode must be 'coarsest' or 'per_scale', got '" + s + "'");
}

void to_json(json& j, const StageSchedule& s) {
  j = json{{"iterations", s.iterations}, {"learning_rate", s.learning_rate}, {"lr_decay_after", s.lr_decay_after},
           {"lr_decay", s.lr_decay},     {"d_steps", s.d_steps},             {"g_steps", s.g_steps},
           {"gp_weight", s.gp_weight},   {"rec_weight", s.rec_weight},       {"rec_weight_late", s.rec_weight_late}};
}

void from_json(const json& j, StageSchedule& s) {
  get_if(j, "iterations", s.iterations);
  get_if(j, "learning_rate", s.learning_rate);
  get_if(j, "lr_decay_after", s.lr_decay_after);
  get_if(j, "lr_decay", s.lr_decay);
  get_if(j, "d_steps", s.d_steps);
  get_if(j, "g_steps", s.g_steps);
  get_if(j, "gp_weight", s.gp_weight);
  get_if(j, "rec_weight", s.rec_weight);
  get_if(j, "rec_weight_late", s.rec_weight_late);
}

void to_json(json& j, const TrainConfig& c) {
  j = json{
      {"preset", c.preset},
      {"pyramid",
       {{"scale_factor", c.pyramid.scale_factor},
        {"min_dimension", c.pyramid.min_dimension},
        {"mask_threshold", c.pyramid.mask_threshold}}},
      {"receptive_field", c.receptive_field},
      {"split_threshold", c.split_threshold},
      {"coarse", c.coarse},
      {"fine", c.fine},
      {"adam_beta1", c.adam_beta1},
      {"adam_beta2", c.adam_beta2},
      {"base_channels", c.base_channels},
      {"channel_period", c.channel_period},
      {"num_blocks", c.num_blocks},
      {"init_std", c.init_std},
      {"soft_mask_sigma", c.soft_mask_sigma},
      {"blend_sigma", c.blend_sigma},
      {"naive",
       {{"iterations", c.naive.iterations},
        {"learning_rate", c.naive.learning_rate},
        {"unet_depth", c.naive.unet_depth},
        {"unet_width", c.naive.unet_width},
        {"input_channels", c.naive.input_channels},
        {"input_noise_scale", c.naive.input_noise_scale},
        {"input_jitter_std", c.naive.input_jitter_std},
        {"nn_loss_weight", c.naive.nn_loss_weight}}},
      {"mask_bn", c.mask_bn},
      {"use_coarse_scales", c.use_coarse_scales},
      {"rec_weight_denominator", to_string(c.rec_weight_denominator)},
      {"soft_mask_rule", to_string(c.soft_mask_rule)},
      {"z_rec_mode", to_string(c.z_rec_mode)},
      {"noise_variance", c.noise_variance},
      {"seed", c.seed},
      {"progress_interval", c.progress_interval},
  };
}

void from_json(const json& j, TrainConfig& c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  try {
    get_if(j, "preset", c.preset);
    if (auto p = j.find("pyramid"); p != j.end()) {
      get_if(*p, "scale_factor", c.pyramid.scale_factor);
      get_if(*p, "min_dimension", c.pyramid.min_dimension);
      get_if(*p, "mask_threshold", c.pyramid.mask_threshold);
    }
    get_if(j, "receptive_field", c.receptive_field);
    get_if(j, "split_threshold", c.split_threshold);
    if (auto s = j.find("coarse"); s != j.end()) from_json(*s, c.coarse);
    if (auto s = j.find("fine"); s != j.end()) from_json(*s, c.fine);
    get_if(j, "adam_beta1", c.adam_beta1);
    get_if(j, "adam_beta2", c.adam_beta2);
    get_if(j, "base_channels", c.base_channels);
    get_if(j, "channel_period", c.channel_period);
    get_if(j, "num_blocks", c.num_blocks);
    get_if(j, "init_std", c.init_std);
    get_if(j, "soft_mask_sigma", c.soft_mask_sigma);
    get_if(j, "blend_sigma", c.blend_sigma);
    if (auto n = j.find("naive"); n != j.end()) {
      get_if(*n, "iterations", c.naive.iterations);
      get_if(*n, "learning_rate", c.naive.learning_rate);
      get_if(*n, "unet_depth", c.naive.unet_depth);
      get_if(*n, "unet_width", c.naive.unet_width);
      get_if(*n, "input_channels", c.naive.input_channels);
      get_if(*n, "input_noise_scale", c.naive.input_noise_scale);
      get_if(*n, "input_jitter_std", c.naive.input_jitter_std);
      get_if(*n, "nn_loss_weight", c.naive.nn_loss_weight);
    }
    get_if(j, "mask_bn", c.mask_bn);
    get_if(j, "use_coarse_scales", c.use_coarse_scales);
    if (auto v = j.find("rec_weight_denominator"); v != j.end())
      c.rec_weight_denominator = parse_rec_weight_denominator(v->get<std::string>());
    if (auto v = j.find("soft_mask_rule"); v != j.end()) c.soft_mask_rule = parse_soft_mask_rule(v->get<std::string>());
    if (auto v = j.find("z_rec_mode"); v != j.end()) c.z_rec_mode = parse_z_rec_mode(v->get<std::string>());
    get_if(j, "noise_variance", c.noise_variance);
    get_if(j, "seed", c.seed);
    get_if(j, "progress_interval", c.progress_interval);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
}

void apply_overrides(TrainConfig& config, const json& overrides) {
  if (overrides.is_null()) return;
  if (auto p = overrides.find("preset"); p != overrides.end()) {
    const std::uint64_t seed = config.seed;
    config = make_preset(p->get<std::string>());
    config.seed = seed;
  }
  from_json(overrides, config);
  config.validate();
}

}  // namespace holefill
