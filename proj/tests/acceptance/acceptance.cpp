// Prints one PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>

#include "holefill/losses.hpp"
#include "holefill/metrics.hpp"
#include "holefill/nets.hpp"
#include "holefill/ops.hpp"
#include "holefill/sampler.hpp"
#include "holefill/trainer.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace holefill;
using ag::Var;
using Clock = std::chrono::steady_clock;

namespace {

const fs::path kData = HOLEFILL_TEST_DATA;
const std::string kCli = HOLEFILL_CLI;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, const std::function<Outcome()>& check) {
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
}

std::string fmt(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

fs::path work_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("holefill_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

Outcome morphology() {
  const auto t0 = Clock::now();
  Rng rng = make_rng(1001);
  std::uniform_int_distribution<int> dim(1, 32), rad(0, 6), half_rf(0, 7);
  std::uniform_real_distribution<double> density(0.0, 0.6);
  int mismatches = 0;
  for (int i = 0; i < 200; ++i) {
    const Mask m = testing::random_mask(dim(rng), dim(rng), density(rng), rng);
    const int r = rad(rng);
    const int rf = 2 * half_rf(rng) + 1;
    for (auto e : {StructuringElement::Square, StructuringElement::Disc}) {
      mismatches += !(erode(m, r, e) == testing::brute_erode(m, r, e));
      mismatches += !(dilate(m, r, e) == testing::brute_dilate(m, r, e));
    }
    mismatches += !(valid_patch_map(m, rf).valid == testing::brute_valid(m, rf));
    mismatches += !(valid_patch_map(m, 11).valid == testing::brute_valid(m, 11));
  }
  const double t = seconds_since(t0);
  return {mismatches == 0 && t < 30.0, "200 masks, " + std::to_string(mismatches) + " mismatches, " + fmt(t) + " s"};
}

struct Desk {
  Image image;
  Mask mask;
  ModelBundle bundle;
  double minutes = 0.0;
};

// Fast-preset desk bundle, trained once and shared by the later checks.
const Desk& desk() {
  static const Desk d = [] {
    Desk r;
    r.image = load_image(kData / "desk_48x64.png");
    r.mask = load_mask(kData / "desk_48x64_mask.png");
    TrainConfig config = make_preset("fast");
    config.seed = 1;
    const auto t0 = Clock::now();
    r.bundle = train_full(r.image, r.mask, config, {work_dir() / "desk"});
    r.minutes = seconds_since(t0) / 60.0;
    return r;
  }();
  return d;
}

Outcome masked_bn() {
  Rng rng = make_rng(1002);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int c = 6, h = 9 + trial % 5, w = 11;
    const Tensor x = uniform_tensor({c, h, w}, -3.0, 3.0, rng);
    Mask valid = testing::random_mask(h, w, 0.6, rng);
    valid.set(0, 0, true);
    BatchNorm bn(c);
    bn.gamma.mutable_value() = uniform_tensor({c}, 0.5, 2.0, rng);
    bn.beta.mutable_value() = uniform_tensor({c}, -1.0, 1.0, rng);
    const Tensor out = batch_norm(Var(x), bn, NormMode::Batch, false, &valid).value();
    for (int ch = 0; ch < c; ++ch) {
      double sum = 0.0, n = 0.0;
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx)
          if (valid(y, xx)) sum += x.at(ch, y, xx), n += 1.0;
      const double mean = sum / n;
      double ss = 0.0;
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx)
          if (valid(y, xx)) ss += (x.at(ch, y, xx) - mean) * (x.at(ch, y, xx) - mean);
      const double sd = std::sqrt(ss / n + kBatchNormEps);
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) {
          const double expect = (x.at(ch, y, xx) - mean) / sd * bn.gamma.value()[ch] + bn.beta.value()[ch];
          worst = std::max(worst, std::abs(out.at(ch, y, xx) - expect));
        }
    }
  }

  // Real score of the trained finest-scale critic of the desk bundle.
  const ModelBundle& b = desk().bundle;
  const PyramidLevel& level = b.pyramid[0];
  Discriminator d = b.scale(0).discriminator;
  const ValidityMap validity = valid_patch_map(level.mask, b.config.receptive_field);
  const auto features = propagate_validity(level.mask.inverted(), b.config.num_blocks);
  ForwardOptions opts;
  opts.update_running_stats = false;
  opts.validity = &features;
  double drift = 0.0;
  const double base = critic_score(d.forward(Var(level.image.tensor()), opts), &validity.valid).item();
  for (int trial = 0; trial < 5; ++trial) {
    Tensor t = level.image.tensor();
    for (int ch = 0; ch < 3; ++ch)
      for (int y = 0; y < level.mask.height(); ++y)
        for (int x = 0; x < level.mask.width(); ++x)
          if (level.mask(y, x)) t.at(ch, y, x) = uniform01(rng) * 2.0 - 1.0;
    drift = std::max(drift, std::abs(critic_score(d.forward(Var(t), opts), &validity.valid).item() - base));
  }
  return {worst <= 1e-6 && drift <= 1e-5, "stats abs err " + fmt(worst) + ", real-score drift " + fmt(drift)};
}

Outcome wgan_gp() {
  Rng rng = make_rng(1003);
  Discriminator d(8, 2);
  d.net().init_normal(rng, 0.2);
  const Tensor real = uniform_tensor({3, 16, 16}, -1, 1, rng), fake = uniform_tensor({3, 16, 16}, -1, 1, rng);
  Mask hole(16, 16);
  for (int y = 5; y < 9; ++y)
    for (int x = 6; x < 10; ++x) hole.set(y, x, true);
  const ValidityMap validity = valid_patch_map(hole, 5);
  const auto features = propagate_validity(hole.inverted(), 2);
  ForwardOptions masked, plain;
  masked.update_running_stats = plain.update_running_stats = false;
  masked.validity = &features;
  const CriticFn critic = [&](const Var& u, CriticInput kind) {
    return d.forward(u, kind == CriticInput::Real ? masked : plain);
  };
  const double eps = 0.37, gp_weight = 0.1 * 1.3;
  auto params = d.net().parameters();
  const Var loss = wgan_gp_losses(critic, Var(real), Var(fake), &validity, gp_weight, eps).d_loss;
  const auto grads = ag::gradient_values(loss, params);

  double num = 0.0, den = 0.0;
  std::size_t count = 0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Var param = params[p];
    const Tensor original = param.value();
    const Tensor numeric = testing::numeric_gradient(
        [&](const Tensor& v) {
          param.mutable_value() = v;
          return wgan_gp_losses(critic, Var(real), Var(fake), &validity, gp_weight, eps).d_loss.item();
        },
        original, 1e-5);
    param.mutable_value() = original;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      num += (grads[p][i] - numeric[i]) * (grads[p][i] - numeric[i]);
      den += grads[p][i] * grads[p][i] + numeric[i] * numeric[i];
    }
    count += numeric.size();
  }
  const double rel = std::sqrt(num / den) * std::sqrt(2.0);
  return {rel <= 1e-3, std::to_string(count) + " parameters, rel err " + fmt(rel)};
}

Outcome nn_color() {
  double worst = 0.0;
  for (int trial = 0; trial < 25; ++trial) {
    Rng rng = make_rng(2000 + trial);
    const Image ref = testing::random_image(12, 12, rng), out = testing::random_image(12, 12, rng);
    Mask mask = testing::random_mask(12, 12, 0.1 + 0.03 * trial, rng);
    mask.set(0, 0, false);
    mask.set(11, 11, true);
    worst = std::max(worst, std::abs(nn_color_loss(out, ref, mask) - testing::brute_nn_loss(out, ref, mask)));
  }
  return {worst <= 1e-6, "25 random 12x12 images, max abs err " + fmt(worst)};
}

Outcome scale_split() {
  int cases = 0, mismatches = 0;
  const PyramidSpec spec;
  auto check = [&](const Image& img, const Mask& mask) {
    const Pyramid p = build_pyramid(img, mask, spec);
    std::vector<Mask> masks;
    for (const auto& l : p.levels) masks.push_back(l.mask);
    const ScaleSplit s = compute_scale_split(p.levels, 11, 0.4);
    mismatches += s.split_index != testing::brute_split(masks, 11, 0.4);
    for (std::size_t n = 0; n < masks.size(); ++n) {
      const double f =
          static_cast<double>(testing::brute_valid(masks[n], 11).count()) / static_cast<double>(masks[n].size());
      mismatches += std::abs(s.valid_fraction_per_level[n] - f) > 1e-12;
    }
    ++cases;
  };
  Rng rng = make_rng(1004);
  const Image img = testing::random_image(96, 128, rng);
  // Centered holes from 2% to 45% of the area, plus thin strokes and scattered dots.
  for (int side = 8; side <= 80; side += 6) {
    check(img, testing::rect_mask(96, 128, 48 - side * 3 / 8, 64 - side / 2, side * 3 / 4, side));
  }
  for (int width = 1; width <= 9; width += 2) check(img, testing::rect_mask(96, 128, 0, 60, 96, width));
  for (double p : {0.001, 0.003, 0.01}) check(img, testing::random_mask(96, 128, p, rng));
  check(img, Mask(96, 128));
  const Image large = testing::random_image(193, 256, rng);
  check(large, testing::rect_mask(193, 256, 60, 80, 70, 90));
  return {mismatches == 0, std::to_string(cases) + " crafted masks, " + std::to_string(mismatches) + " mismatches"};
}

Outcome pyramid_count() {
  const PyramidSpec spec;
  const auto dims = pyramid_dims(193, 256, spec);
  bool monotone = true;
  for (std::size_t n = 1; n < dims.size(); ++n)
    monotone = monotone && dims[n].first < dims[n - 1].first && dims[n].second < dims[n - 1].second;
  const Pyramid p = build_pyramid(Image(193, 256), Mask(193, 256), spec);
  std::string sizes;
  for (const auto& [h, w] : dims) sizes += " " + std::to_string(h) + "x" + std::to_string(w);
  return {dims.size() == 8 && p.size() == 8 && monotone, std::to_string(dims.size()) + " levels:" + sizes};
}

Outcome end_to_end() {
  const Desk& d = desk();
  const ModelBundle& bundle = d.bundle;
  const Image& image = d.image;
  const Mask& mask = d.mask;
  const TrainConfig& config = bundle.config;
  const double minutes = d.minutes;
  const int max_iters = std::max(config.coarse.iterations, config.fine.iterations);
  const int scales = static_cast<int>(bundle.scales.size());
  const double rmse = masked_rmse(reconstruct(bundle), image, mask.inverted());

  SampleRequest req;
  req.seed = 7;
  req.count = 10;
  req.mode = diversity_mode("normal");
  const SampleResult r = generate(bundle, req);
  const SoftMask raw = blend_mask(mask, config.blend_sigma);
  long differing = 0;
  double std_outside = 0.0, std_inside = 0.0;
  for (const auto& s : r.images)
    for (int y = 0; y < 48; ++y)
      for (int x = 0; x < 64; ++x)
        if (raw(y, x) < 1e-3)
          for (int c = 0; c < 3; ++c) differing += s.at(c, y, x) != image.at(c, y, x);
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 64; ++x) {
      if (raw(y, x) < 1e-3) std_outside = std::max(std_outside, r.std_map(y, x));
      if (mask(y, x)) std_inside = std::max(std_inside, r.std_map(y, x));
    }
  const bool pass = minutes <= 20.0 && max_iters <= 300 && scales <= 5 && rmse <= 0.08 && differing == 0 &&
                    std_outside == 0.0 && std_inside > 0.0;
  return {pass, std::to_string(scales) + " scales, " + fmt(minutes) + " min, valid rmse " + fmt(rmse) +
                    ", differing px outside blend " + std::to_string(differing) + ", max std outside " +
                    fmt(std_outside) + ", max std inside " + fmt(std_inside)};
}

double twenty_pair_mse(const ModelBundle& b, const std::string& mode) {
  SampleRequest req;
  req.seed = 99;
  req.count = 40;
  req.mode = diversity_mode(mode, b.config.receptive_field);
  const SampleResult r = generate(b, req);
  double total = 0.0;
  for (int k = 0; k < 20; ++k) {
    const std::vector<Image> pair{r.images[2 * k], r.images[2 * k + 1]};
    total += pairwise_diversity(pair, b.mask).mean_pairwise_pixel_mse_in_mask;
  }
  return total / 20.0;
}

Outcome diversity_ordering() {
  const ModelBundle& b = desk().bundle;
  const double normal = twenty_pair_mse(b, "normal");
  const double medium = twenty_pair_mse(b, "medium");
  const double high = twenty_pair_mse(b, "high");
  const bool pass = high >= 0.95 * medium && medium >= 0.95 * normal;
  return {pass, "normal " + fmt(normal) + ", medium " + fmt(medium) + ", high " + fmt(high)};
}

Outcome determinism() {
  const Image& image = desk().image;
  const Mask& mask = desk().mask;
  TrainConfig config = make_preset("smoke");
  config.seed = 5;
  const ModelBundle a = train_full(image, mask, config, {work_dir() / "det_a"});
  const ModelBundle b = train_full(image, mask, config, {work_dir() / "det_b"});
  const bool hashes = bundle_content_hash(work_dir() / "det_a") == bundle_content_hash(work_dir() / "det_b");

  SampleRequest req;
  req.seed = 3;
  req.count = 4;
  req.mode = diversity_mode("high");
  bool pngs = true;
  const auto sa = generate(a, req), sb = generate(b, req);
  for (int k = 0; k < 4; ++k) pngs = pngs && encode_png(sa.images[k]) == encode_png(sb.images[k]);

  // Round trip of the desk bundle through disk.
  const ModelBundle loaded = load_bundle(work_dir() / "desk");
  const auto s1 = generate(desk().bundle, req), s2 = generate(loaded, req);
  bool round_trip = reconstruct(loaded) == reconstruct(desk().bundle);
  for (int k = 0; k < 4; ++k) round_trip = round_trip && s1.images[k] == s2.images[k];
  return {hashes && pngs && round_trip, std::string("hashes ") + (hashes ? "equal" : "differ") + ", sample PNGs " +
                                            (pngs ? "equal" : "differ") + ", save/load samples " +
                                            (round_trip ? "equal" : "differ")};
}

Outcome ablations() {
  const std::string image = (kData / "desk_48x64.png").string(), mask = (kData / "desk_48x64_mask.png").string();
  std::string detail;
  bool pass = true;
  for (const std::string flag : {"--disable-coarse-scales", "--disable-bn-masking"}) {
    const fs::path out = work_dir() / ("ablation" + flag);
    const std::string cmd = kCli + " train --image " + image + " --mask " + mask + " --out " + out.string() +
                            " --preset smoke --seed 1 --quiet " + flag + " > /dev/null 2>&1";
    const int code = std::system(cmd.c_str());
    bool flagged = false;
    if (code == 0 && is_bundle_dir(out)) {
      const auto m = read_manifest(out);
      const auto& ab = m.at("ablations");
      flagged = m.at("status") == "complete" &&
                (flag == "--disable-coarse-scales" ? ab.at("coarse_scales_disabled") == true
                                                    : ab.at("bn_masking_disabled") == true);
    }
    pass = pass && flagged;
    detail += (detail.empty() ? "" : ", ") + flag.substr(2) + (flagged ? " completed+flagged" : " failed");
  }
  return {pass, detail};
}

}  // namespace

int main() {
  std::cout << "holefill acceptance" << std::endl;
  report("morphology-oracles", morphology);
  report("masked-bn", masked_bn);
  report("wgan-gp-gradient", wgan_gp);
  report("nn-color-loss", nn_color);
  report("scale-split", scale_split);
  report("pyramid-count", pyramid_count);
  report("end-to-end-desk", end_to_end);
  report("diversity-ordering", diversity_ordering);
  report("determinism-persistence", determinism);
  report("ablation-smoke", ablations);
  fs::remove_all(work_dir());
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
