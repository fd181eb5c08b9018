#include "holefill/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "holefill/errors.hpp"
#include "holefill/losses.hpp"
#include "holefill/metrics.hpp"
#include "holefill/ops.hpp"
#include "holefill/optim.hpp"
#include "holefill/rng.hpp"
#include "holefill/sampler.hpp"

namespace holefill {

namespace fs = std::filesystem;
using ag::Var;
using nlohmann::json;

namespace {

constexpr std::uint64_t kScaleStream = 0x7363616cULL;
constexpr const char* kProgressLog = "progress.jsonl";

bool finite(double v) { return std::isfinite(v); }

double rmse_over(const Tensor& a, const Image& b, const Mask* invalid) {
  const Image ai(a);
  if (!invalid) return masked_rmse(ai, b, Mask(b.height(), b.width(), 1));
  return masked_rmse(ai, b, invalid->inverted());
}

}  // namespace

json to_json(const ProgressRecord& r) {
  return json{{"stage", r.stage}, {"scale", r.scale},   {"iteration", r.iteration}, {"d_loss", r.d_loss},
              {"g_adv", r.g_adv}, {"rec", r.rec},       {"gp", r.gp}};
}

bool in_late_third(int n, int coarsest) {
  const int total = coarsest + 1;
  return n < (total + 2) / 3;
}

ScaleModel train_scale(int n, const ModelBundle& bundle, const std::map<int, Image>& reals,
                       const TrainCallbacks& callbacks, std::stop_token stop) {
  const TrainConfig& cfg = bundle.config;
  const int coarsest = bundle.coarsest_index();
  if (n < 0 || n > coarsest) throw std::invalid_argument("train_scale: level out of range");
  for (int k = n + 1; k <= coarsest; ++k)
    if (!bundle.has_scale(k)) throw std::invalid_argument("train_scale: coarser level " + std::to_string(k) + " missing");

  const PyramidLevel& level = bundle.pyramid[static_cast<std::size_t>(n)];
  const int h = level.image.height(), w = level.image.width();
  const bool coarse = level.is_coarse;
  const Image& real = coarse ? reals.at(n) : level.image;
  const StageSchedule& sched = coarse ? cfg.coarse : cfg.fine;

  Rng rng = make_rng(cfg.seed, {kScaleStream, static_cast<std::uint64_t>(n)});

  ScaleModel model;
  model.index = n;
  model.height = h;
  model.width = w;
  model.is_coarse = coarse;
  model.channels = channels_for_scale(coarsest - n, cfg.base_channels, cfg.channel_period);
  Generator G(model.channels, cfg.num_blocks);
  Discriminator D(model.channels, cfg.num_blocks);
  const ScaleModel* previous = n < coarsest ? &bundle.scale(n + 1) : nullptr;
  model.inherited = inherit_or_init(G.net(), previous ? &previous->generator.net() : nullptr, rng, cfg.init_std);
  inherit_or_init(D.net(), previous ? &previous->discriminator.net() : nullptr, rng, cfg.init_std);

  // Reconstruction path input and noise amplitude.
  Tensor rec_prev;
  if (n < coarsest) rec_prev = upsample_to(reconstruction_at(bundle, n + 1), h, w);
  model.gain = n == coarsest ? 1.0 : compute_noise_gain(Image(rec_prev), real, coarse ? nullptr : &level.mask);
  if (n == coarsest) {
    model.z_rec = normal_tensor({3, h, w}, 1.0, rng);
  } else if (cfg.z_rec_mode == ZRecMode::PerScale) {
    model.z_rec = normal_tensor({3, h, w}, model.gain, rng);
  } else {
    model.z_rec = Tensor({3, h, w}, 0.0);
  }
  const double noise_std = std::sqrt(cfg.noise_variance) * model.gain;

  // Fine-scale masking.
  ValidityMap validity;
  std::vector<Mask> feature_validity;
  SoftMask soft;
  double gp_weight = sched.gp_weight;
  const double alpha = in_late_third(n, coarsest) ? sched.rec_weight_late : sched.rec_weight;
  double rec_weight = alpha;
  if (!coarse) {
    validity = valid_patch_map(level.mask, cfg.receptive_field);
    if (cfg.mask_bn) feature_validity = propagate_validity(level.mask.inverted(), cfg.num_blocks);
    soft = soft_mask(level.mask, n, coarsest, cfg.soft_mask_sigma, cfg.soft_mask_rule);
    const FineScaleWeights fw = fine_scale_weights(level.mask, soft, cfg.rec_weight_denominator);
    gp_weight *= fw.delta;
    rec_weight *= fw.delta_rec;
  }

  ForwardOptions d_opts;
  d_opts.update_running_stats = false;
  ForwardOptions d_real_opts = d_opts;
  if (!coarse && cfg.mask_bn) d_real_opts.validity = &feature_validity;
  const CriticFn critic = [&](const Var& u, CriticInput kind) {
    return D.forward(u, kind == CriticInput::Real ? d_real_opts : d_opts);
  };
  ForwardOptions g_opts;
  g_opts.update_running_stats = false;

  const std::vector<Var> g_params = G.net().parameters();
  const std::vector<Var> d_params = D.net().parameters();
  double lr = sched.learning_rate;
  Adam opt_g(g_params, AdamOptions{lr, cfg.adam_beta1, cfg.adam_beta2, 1e-8});
  Adam opt_d(d_params, AdamOptions{lr, cfg.adam_beta1, cfg.adam_beta2, 1e-8});

  const Var real_var(real.tensor());
  const Var z_rec_var(model.z_rec);
  const Var rec_prev_var(rec_prev);
  auto rec_loss_of = [&](const Var& rec_out) {
    if (coarse) {
      const Var diff = ag::sub(rec_out, real_var);
      return ag::mean(ag::mul(diff, diff));
    }
    return reconstruction_loss(rec_out, level.image, soft);
  };

  for (int it = 0; it < sched.iterations; ++it) {
    if (stop.stop_requested()) throw CancelledError("training cancelled at scale " + std::to_string(n));
    if (sched.lr_decay_after >= 0 && it == sched.lr_decay_after) {
      lr *= sched.lr_decay;
      opt_g.set_learning_rate(lr);
      opt_d.set_learning_rate(lr);
    }

    // A fresh sample of the frozen coarser levels drives this iteration.
    Tensor prev;
    if (n < coarsest) {
      const Tensor coarser = run_scales(bundle, coarsest, n + 1, [&](int k) {
        const ScaleModel& s = bundle.scale(k);
        return normal_tensor({3, s.height, s.width}, std::sqrt(cfg.noise_variance) * s.gain, rng);
      });
      prev = upsample_to(coarser, h, w);
    }
    const Var z(normal_tensor({3, h, w}, noise_std, rng));
    const Var prev_var(prev);
    const Var* prev_ptr = n < coarsest ? &prev_var : nullptr;

    Tensor fake;
    {
      ag::NoGradGuard guard;
      fake = G.forward(z, prev_ptr, g_opts).value();
    }
    WganGpTerms terms;
    for (int s = 0; s < sched.d_steps; ++s) {
      const double eps = uniform01(rng);
      terms = wgan_gp_losses(critic, real_var, Var(fake), coarse ? nullptr : &validity, gp_weight, eps);
      opt_d.step(ag::gradient_values(terms.d_loss, d_params));
    }

    double g_adv = 0.0, rec = 0.0;
    for (int s = 0; s < sched.g_steps; ++s) {
      const Var out = G.forward(z, prev_ptr, g_opts);
      const Var adv = ag::scale(critic_score(critic(out, CriticInput::Fake), nullptr), -1.0);
      const Var rec_out = G.forward(z_rec_var, n < coarsest ? &rec_prev_var : nullptr, g_opts);
      const Var rec_loss = rec_loss_of(rec_out);
      const Var loss = ag::add(adv, ag::scale(rec_loss, rec_weight));
      g_adv = adv.item();
      rec = rec_loss.item();
      if (!finite(loss.item())) break;
      opt_g.step(ag::gradient_values(loss, g_params));
    }

    const double d_loss = terms.d_loss.item();
    if (!finite(d_loss) || !finite(g_adv) || !finite(rec)) {
      throw TrainingError("non-finite loss at scale " + std::to_string(n) + ", iteration " + std::to_string(it) +
                          " (d_loss " + std::to_string(d_loss) + ", g_adv " + std::to_string(g_adv) + ", rec " +
                          std::to_string(rec) + ")");
    }
    if (callbacks.on_progress && (it % cfg.progress_interval == 0 || it + 1 == sched.iterations)) {
      callbacks.on_progress({"train", n, it, d_loss, g_adv, rec, terms.gradient_penalty.item()});
    }
  }

  G.calibrate(model.z_rec, n < coarsest ? &rec_prev : nullptr);
  const Tensor rec_out = G.infer(model.z_rec, n < coarsest ? &rec_prev : nullptr).value();
  {
    ag::NoGradGuard guard;
    model.final_rec_loss = rec_loss_of(Var(rec_out)).item();
  }
  model.rec_rmse = rmse_over(rec_out, real, coarse ? nullptr : &level.mask);
  model.generator = std::move(G);
  model.discriminator = std::move(D);
  return model;
}

ModelBundle train_full(const Image& image, const Mask& mask, const TrainConfig& config, const TrainOptions& options) {
  check_same_dims(image, mask);
  config.validate();
  const auto started = std::chrono::steady_clock::now();
  const bool persist = !options.bundle_dir.empty();
  const TrainCallbacks& cb = options.callbacks;

  ModelBundle bundle;
  if (persist && options.resume && is_bundle_dir(options.bundle_dir)) {
    bundle = load_bundle(options.bundle_dir);
    if (json(bundle.config) != json(config)) throw ConfigError("resume requested but the stored config differs");
    if (!(bundle.image == image) || !(bundle.mask == mask)) {
      throw ConfigError("resume requested but the stored input differs");
    }
    if (bundle.complete) return bundle;
  } else {
    bundle.config = config;
    bundle.image = image;
    bundle.mask = mask;
    auto prepared = prepare_pyramid(image, mask, config);
    bundle.pyramid = std::move(prepared.pyramid);
    bundle.split = std::move(prepared.split);
  }

  std::ofstream progress_log;
  if (persist) {
    fs::create_directories(options.bundle_dir);
    progress_log.open(options.bundle_dir / kProgressLog, std::ios::app);
    if (!progress_log) throw IoError("cannot open progress log in " + options.bundle_dir.string());
  }
  TrainCallbacks inner = cb;
  inner.on_progress = [&](const ProgressRecord& r) {
    if (progress_log.is_open()) progress_log << to_json(r).dump() << '\n' << std::flush;
    if (cb.on_progress) cb.on_progress(r);
  };
  const double previous_elapsed = bundle.elapsed_seconds;
  auto elapsed = [&] {
    return previous_elapsed + std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  };
  auto checkpoint = [&] {
    if (!persist) return;
    bundle.elapsed_seconds = elapsed();
    save_bundle(bundle, options.bundle_dir);
  };

  const int coarsest = bundle.coarsest_index();
  std::map<int, Image> reals;
  try {
    if (bundle.pyramid[static_cast<std::size_t>(coarsest)].is_coarse) {
      const int i = bundle.split.split_index;
      if (!bundle.naive) {
        if (cb.on_stage) cb.on_stage("naive", i);
        NaiveInpaintConfig ncfg = config.naive;
        ncfg.seed = config.seed;
        const auto& level = bundle.pyramid[static_cast<std::size_t>(i)];
        bundle.naive = run_naive_inpaint(
            level.image, level.mask, ncfg, i,
            [&](const NaiveProgress& p) { inner.on_progress({"naive", i, p.iteration, 0.0, 0.0, p.loss, 0.0}); },
            options.stop);
        checkpoint();
      }
      reals = coarse_reals_from_naive(*bundle.naive, bundle.pyramid, bundle.split);
    }

    for (int n = coarsest; n >= 0; --n) {
      if (bundle.has_scale(n)) continue;
      if (cb.on_stage) cb.on_stage("train", n);
      ScaleModel model = train_scale(n, bundle, reals, inner, options.stop);
      bundle.scales.emplace(n, std::move(model));
      checkpoint();
      if (cb.on_scale_done) cb.on_scale_done(bundle, n);
    }
  } catch (...) {
    bundle.elapsed_seconds = elapsed();
    throw;
  }

  bundle.complete = true;
  bundle.reconstruction_rmse_valid = 0.0;
  if (!mask.all()) bundle.reconstruction_rmse_valid = masked_rmse(reconstruct(bundle), image, mask.inverted());
  bundle.elapsed_seconds = elapsed();
  checkpoint();
  return bundle;
}

}  // namespace holefill
