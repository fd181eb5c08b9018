// holefill: train, sample and inspect single-image hole-filling models.

#include <CLI11.hpp>
#include <json.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <stop_token>

#include "holefill/bundle.hpp"
#include "holefill/errors.hpp"
#include "holefill/metrics.hpp"
#include "holefill/sampler.hpp"
#include "holefill/service.hpp"
#include "holefill/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace holefill;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kIo = 2, kTraining = 3 };

std::stop_source g_stop;

extern "C" void on_signal(int) { g_stop.request_stop(); }

struct TrainArgs {
  std::string image, mask, out, preset = "full", config_file, rec_denominator, soft_rule, z_rec_mode, dump_naive;
  bool fast = false, resume = false, disable_bn_masking = false, disable_coarse = false, quiet = false;
  std::optional<std::uint64_t> seed;
  std::optional<int> coarse_iters, fine_iters, naive_iters, min_dimension;
  std::optional<double> noise_variance, mask_threshold;
};

struct SampleArgs {
  std::string bundle, out, mode = "normal", std_pfm;
  int count = 1;
  std::uint64_t seed = 0;
  std::optional<double> multiplier;
  std::optional<int> erosion_radius;
};

struct NaiveArgs {
  std::string image, mask, out, preset = "full";
  bool fast = false;
  std::uint64_t seed = 0;
  std::optional<int> iterations;
};

struct ReportArgs {
  std::vector<std::string> samples;
  std::string mask, out;
  double mask_threshold = kDefaultMaskThreshold;
};

struct ServeArgs {
  std::string store, host = "127.0.0.1";
  int port = 8080;
  int workers = 1;
};

bool g_json = false;

void emit(const json& j, const std::string& human) {
  if (g_json) {
    std::cout << j.dump() << std::endl;
  } else {
    std::cout << human << std::endl;
  }
}

TrainConfig build_config(const TrainArgs& a) {
  TrainConfig c = make_preset(a.fast ? "fast" : a.preset);
  if (!a.config_file.empty()) {
    std::ifstream in(a.config_file);
    if (!in) throw IoError("cannot read config file " + a.config_file);
    json overrides;
    try {
      overrides = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError("config file is not valid JSON: " + std::string(e.what()));
    }
    apply_overrides(c, overrides);
  }
  if (a.seed) c.seed = *a.seed;
  if (a.coarse_iters) c.coarse.iterations = *a.coarse_iters;
  if (a.fine_iters) c.fine.iterations = *a.fine_iters;
  if (a.naive_iters) c.naive.iterations = *a.naive_iters;
  if (a.min_dimension) c.pyramid.min_dimension = *a.min_dimension;
  if (a.mask_threshold) c.pyramid.mask_threshold = *a.mask_threshold;
  if (a.noise_variance) c.noise_variance = *a.noise_variance;
  if (a.disable_bn_masking) c.mask_bn = false;
  if (a.disable_coarse) c.use_coarse_scales = false;
  if (!a.rec_denominator.empty()) c.rec_weight_denominator = parse_rec_weight_denominator(a.rec_denominator);
  if (!a.soft_rule.empty()) c.soft_mask_rule = parse_soft_mask_rule(a.soft_rule);
  if (!a.z_rec_mode.empty()) c.z_rec_mode = parse_z_rec_mode(a.z_rec_mode);
  for (auto* decay : {&c.coarse, &c.fine})
    if (decay->lr_decay_after >= decay->iterations) decay->lr_decay_after = -1;
  c.validate();
  return c;
}

int cmd_train(const TrainArgs& a) {
  const TrainConfig config = build_config(a);
  const Image image = load_image(a.image);
  const Mask mask = load_mask(a.mask);
  check_same_dims(image, mask);
  if (!g_json) std::cout << "config " << json(config).dump() << std::endl;

  TrainOptions options;
  options.bundle_dir = a.out;
  options.resume = a.resume;
  options.stop = g_stop.get_token();
  options.callbacks.on_stage = [&](const std::string& stage, int scale) {
    if (!a.quiet && !g_json) std::cout << stage << " scale " << scale << std::endl;
  };
  options.callbacks.on_progress = [&](const ProgressRecord& r) {
    if (a.quiet) return;
    if (g_json) {
      std::cout << to_json(r).dump() << std::endl;
    } else {
      std::cout << "  [" << r.stage << " " << r.scale << "] it " << r.iteration << "  d " << r.d_loss << "  g_adv "
                << r.g_adv << "  rec " << r.rec << "  gp " << r.gp << std::endl;
    }
  };
  const ModelBundle bundle = train_full(image, mask, config, options);
  if (!a.dump_naive.empty() && bundle.naive) save_image(a.dump_naive, bundle.naive->inpainted_full);
  json summary{{"bundle", a.out},
               {"levels", bundle.pyramid.size()},
               {"split_index", bundle.split.split_index},
               {"reconstruction_rmse_valid", bundle.reconstruction_rmse_valid},
               {"elapsed_seconds", bundle.elapsed_seconds},
               {"content_sha256", bundle_content_hash(a.out)},
               {"config", config}};
  emit(summary, "trained " + std::to_string(bundle.pyramid.size()) + " scales in " +
                    std::to_string(bundle.elapsed_seconds) + " s; reconstruction rmse (valid) " +
                    std::to_string(bundle.reconstruction_rmse_valid) + "; bundle " + a.out);
  return kOk;
}

int cmd_sample(const SampleArgs& a) {
  const ModelBundle bundle = load_bundle(a.bundle);
  SampleRequest request;
  request.seed = a.seed;
  request.count = a.count;
  request.mode = diversity_mode(a.mode, bundle.config.receptive_field);
  if (a.multiplier) request.mode.noise_multiplier = *a.multiplier;
  if (a.erosion_radius) request.mode.erosion_radius = *a.erosion_radius;
  const SampleResult result = generate(bundle, request);
  fs::create_directories(a.out);
  json files = json::array();
  for (std::size_t k = 0; k < result.images.size(); ++k) {
    const fs::path path = fs::path(a.out) / ("sample_" + std::to_string(k) + ".png");
    save_image(path, result.images[k]);
    files.push_back(path.string());
  }
  const fs::path pfm = a.std_pfm.empty() ? fs::path(a.out) / "std_map.pfm" : fs::path(a.std_pfm);
  save_pfm(pfm, result.std_map);
  save_scalar_map_png(fs::path(a.out) / "std_map.png", result.std_map, 4.0);
  emit(json{{"samples", files},
            {"std_map", pfm.string()},
            {"mode", request.mode.name},
            {"erosion_radius", request.mode.erosion_radius},
            {"noise_multiplier", request.mode.noise_multiplier},
            {"seed", request.seed},
            {"mean_std_in_mask", result.mean_std_in_mask}},
       "wrote " + std::to_string(files.size()) + " samples to " + a.out);
  return kOk;
}

int cmd_reconstruct(const std::string& bundle_dir, const std::string& out) {
  const ModelBundle bundle = load_bundle(bundle_dir);
  const Image rec = reconstruct(bundle);
  save_image(out, rec);
  double rmse = 0.0;
  if (!bundle.mask.all()) rmse = masked_rmse(rec, bundle.image, bundle.mask.inverted());
  emit(json{{"output", out}, {"rmse_valid", rmse}}, "wrote " + out + " (valid-region rmse " + std::to_string(rmse) + ")");
  return kOk;
}

int cmd_naive(const NaiveArgs& a) {
  TrainConfig config = make_preset(a.fast ? "fast" : a.preset);
  if (a.iterations) config.naive.iterations = *a.iterations;
  const Image image = load_image(a.image);
  const Mask mask = load_mask(a.mask);
  check_same_dims(image, mask);
  const PreparedPyramid prepared = prepare_pyramid(image, mask, config);
  const int i = std::min(prepared.split.split_index, prepared.pyramid.coarsest_index());
  const auto& level = prepared.pyramid[static_cast<std::size_t>(i)];
  NaiveInpaintConfig ncfg = config.naive;
  ncfg.seed = a.seed;
  const NaiveResult result = run_naive_inpaint(level.image, level.mask, ncfg, i, {}, g_stop.get_token());
  save_image(a.out, result.inpainted_full);
  emit(json{{"output", a.out},
            {"level", i},
            {"height", level.image.height()},
            {"width", level.image.width()},
            {"final_loss", result.final_loss}},
       "naive completion at level " + std::to_string(i) + " written to " + a.out);
  return kOk;
}

int cmd_report(const ReportArgs& a) {
  std::vector<Image> samples;
  for (const auto& p : a.samples) samples.push_back(load_image(p));
  const Mask mask = load_mask(a.mask, a.mask_threshold);
  const DiversityReport report = pairwise_diversity(samples, mask);
  const json j = to_json(report);
  if (!a.out.empty()) write_text_atomic(a.out, j.dump(2) + "\n");
  emit(j, "pairs " + std::to_string(report.num_pairs) + ", mean pairwise pixel MSE in mask " +
              std::to_string(report.mean_pairwise_pixel_mse_in_mask));
  return kOk;
}

int cmd_serve(const ServeArgs& a) {
  ServiceOptions options;
  options.store_root = a.store.empty() ? default_store_root() : fs::path(a.store);
  options.workers = a.workers;
  JobService service(options);
  std::cout << "serving " << options.store_root << " on http://" << a.host << ":" << a.port << std::endl;
  HttpServer server(service);
  std::jthread watcher([&](std::stop_token st) {
    while (!st.stop_requested() && !g_stop.stop_requested()) std::this_thread::sleep_for(std::chrono::milliseconds(200));
    server.stop();
  });
  if (!server.listen(a.host, a.port)) throw IoError("cannot listen on " + a.host + ":" + std::to_string(a.port));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Single-image hole filling: train a multi-scale model on one masked image and sample completions"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_flag("--json", g_json, "Machine-readable output");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a model bundle");
  train->add_option("--image", ta.image, "Input image (PNG/JPEG)")->required()->check(CLI::ExistingFile);
  train->add_option("--mask", ta.mask, "Mask image, nonzero = missing")->required()->check(CLI::ExistingFile);
  train->add_option("--out", ta.out, "Bundle directory")->required();
  train->add_option("--preset", ta.preset, "full | fast | smoke")->check(CLI::IsMember({"full", "fast", "smoke"}));
  train->add_flag("--fast", ta.fast, "Shorthand for --preset fast");
  train->add_option("--config", ta.config_file, "JSON file with config overrides")->check(CLI::ExistingFile);
  train->add_option("--seed", ta.seed, "Random seed");
  train->add_option("--coarse-iters", ta.coarse_iters, "Iterations per coarse scale");
  train->add_option("--fine-iters", ta.fine_iters, "Iterations per fine scale");
  train->add_option("--naive-iters", ta.naive_iters, "Naive completion iterations");
  train->add_option("--min-dimension", ta.min_dimension, "Smallest pyramid side");
  train->add_option("--mask-threshold", ta.mask_threshold, "Masked-pixel threshold for downsampled masks");
  train->add_option("--noise-variance", ta.noise_variance, "Training noise variance");
  train->add_flag("--disable-bn-masking", ta.disable_bn_masking, "Ablation: unmasked discriminator batch norm");
  train->add_flag("--disable-coarse-scales", ta.disable_coarse, "Ablation: drop the coarse levels");
  train->add_option("--rec-weight-denominator", ta.rec_denominator, "soft | valid")
      ->check(CLI::IsMember({"soft", "valid"}));
  train->add_option("--soft-mask-rule", ta.soft_rule, "one_inside | zero_inside")
      ->check(CLI::IsMember({"one_inside", "zero_inside"}));
  train->add_option("--z-rec-mode", ta.z_rec_mode, "coarsest | per_scale")->check(CLI::IsMember({"coarsest", "per_scale"}));
  train->add_option("--dump-naive", ta.dump_naive, "Also write the naive completion PNG here");
  train->add_flag("--resume", ta.resume, "Continue a partial bundle in --out");
  train->add_flag("--quiet", ta.quiet, "No per-iteration progress");

  SampleArgs sa;
  auto* sample = app.add_subcommand("sample", "Sample completions from a bundle");
  sample->add_option("--bundle", sa.bundle, "Bundle directory")->required()->check(CLI::ExistingDirectory);
  sample->add_option("--out", sa.out, "Output directory")->required();
  sample->add_option("--count", sa.count, "Number of samples")->check(CLI::Range(1, kMaxSampleCount));
  sample->add_option("--mode", sa.mode, "normal | medium | high")->check(CLI::IsMember({"normal", "medium", "high"}));
  sample->add_option("--seed", sa.seed, "Random seed");
  sample->add_option("--multiplier", sa.multiplier, "Noise amplitude multiplier (default 1)")->check(CLI::NonNegativeNumber);
  sample->add_option("--erosion-radius", sa.erosion_radius, "Override the mode's erosion radius")
      ->check(CLI::NonNegativeNumber);
  sample->add_option("--std-pfm", sa.std_pfm, "Where to write the std map (PFM)");

  std::string rec_bundle, rec_out;
  auto* rec = app.add_subcommand("reconstruct", "Write the reconstruction of the input");
  rec->add_option("--bundle", rec_bundle, "Bundle directory")->required()->check(CLI::ExistingDirectory);
  rec->add_option("--out", rec_out, "Output PNG")->required();

  NaiveArgs na;
  auto* naive = app.add_subcommand("naive", "Preview the naive completion at the split level");
  naive->add_option("--image", na.image, "Input image")->required()->check(CLI::ExistingFile);
  naive->add_option("--mask", na.mask, "Mask image")->required()->check(CLI::ExistingFile);
  naive->add_option("--out", na.out, "Output PNG")->required();
  naive->add_option("--preset", na.preset, "full | fast | smoke")->check(CLI::IsMember({"full", "fast", "smoke"}));
  naive->add_flag("--fast", na.fast, "Shorthand for --preset fast");
  naive->add_option("--seed", na.seed, "Random seed");
  naive->add_option("--iterations", na.iterations, "Iterations");

  ReportArgs ra;
  auto* report = app.add_subcommand("report", "Pairwise diversity of samples inside the mask");
  report->add_option("samples", ra.samples, "Sample PNGs")->required()->expected(2, -1)->check(CLI::ExistingFile);
  report->add_option("--mask", ra.mask, "Mask image")->required()->check(CLI::ExistingFile);
  report->add_option("--out", ra.out, "Write the report JSON here");

  ServeArgs va;
  auto* serve = app.add_subcommand("serve", "Run the local job service");
  serve->add_option("--store", va.store, "Job store root (default $HOLEFILL_STORE or ./holefill-store)");
  serve->add_option("--host", va.host, "Bind address");
  serve->add_option("--port", va.port, "Port");
  serve->add_option("--workers", va.workers, "Training workers")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  try {
    if (*train) return cmd_train(ta);
    if (*sample) return cmd_sample(sa);
    if (*rec) return cmd_reconstruct(rec_bundle, rec_out);
    if (*naive) return cmd_naive(na);
    if (*report) return cmd_report(ra);
    if (*serve) return cmd_serve(va);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kIo;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kTraining;
  }
  return kUsage;
}
