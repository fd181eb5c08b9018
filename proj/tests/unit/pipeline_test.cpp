#include <gtest/gtest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "holefill/errors.hpp"
#include "holefill/metrics.hpp"
#include "holefill/sampler.hpp"
#include "holefill/trainer.hpp"
#include "test_util.hpp"

namespace holefill {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const fs::path kData = HOLEFILL_TEST_DATA;

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("holefill_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  return dir;
}

struct Desk {
  Image image = load_image(kData / "desk_48x64.png");
  Mask mask = load_mask(kData / "desk_48x64_mask.png");
};

const Desk& desk() {
  static const Desk d;
  return d;
}

TrainConfig smoke(std::uint64_t seed = 1) {
  TrainConfig c = make_preset("smoke");
  c.seed = seed;
  return c;
}

fs::path shared_dir() { return fs::temp_directory_path() / ("holefill_shared_" + std::to_string(::getpid())); }

// One smoke bundle shared by the read-only tests below.
const ModelBundle& smoke_bundle() {
  static const ModelBundle b = train_full(desk().image, desk().mask, smoke(), {scratch("shared")});
  return b;
}

TEST(Config, JsonRoundTrip) {
  for (const char* name : {"full", "fast", "smoke"}) {
    TrainConfig c = make_preset(name);
    c.seed = 99;
    c.mask_bn = false;
    c.z_rec_mode = ZRecMode::PerScale;
    c.soft_mask_rule = SoftMaskRule::ZeroInsideMask;
    const json j = c;
    TrainConfig back;
    from_json(j, back);
    EXPECT_EQ(json(back), j) << name;
  }
}

TEST(Config, PartialOverrides) {
  TrainConfig c = make_preset("full");
  c.seed = 7;
  apply_overrides(c, json{{"fine", {{"iterations", 12}}}, {"noise_variance", 0.5}});
  EXPECT_EQ(c.fine.iterations, 12);
  EXPECT_EQ(c.fine.learning_rate, make_preset("full").fine.learning_rate);
  EXPECT_EQ(c.noise_variance, 0.5);
  apply_overrides(c, json{{"preset", "smoke"}});
  EXPECT_EQ(c.preset, "smoke");
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.fine.iterations, make_preset("smoke").fine.iterations);
}

TEST(Config, Rejections) {
  EXPECT_THROW(make_preset("huge"), ConfigError);
  TrainConfig c = make_preset("full");
  EXPECT_THROW(apply_overrides(c, json{{"receptive_field", 10}}), ConfigError);
  c = make_preset("full");
  EXPECT_THROW(apply_overrides(c, json{{"soft_mask_rule", "sometimes"}}), ConfigError);
  EXPECT_THROW(parse_z_rec_mode("all"), ConfigError);
  EXPECT_EQ(parse_rec_weight_denominator(to_string(RecWeightDenominator::ValidSum)), RecWeightDenominator::ValidSum);
}

TEST(Config, PaperScheduleSanity) {
  const TrainConfig p = make_preset("full");
  EXPECT_EQ(p.pyramid.min_dimension, 25);
  EXPECT_NEAR(p.pyramid.scale_factor, 4.0 / 3.0, 1e-15);
  EXPECT_EQ(p.receptive_field, 11);
  EXPECT_EQ(p.split_threshold, 0.4);
  const TrainConfig f = make_preset("fast");
  EXPECT_LE(f.coarse.iterations, 300);
  EXPECT_LE(f.fine.iterations, 300);
}

TEST(Bundle, Sha256KnownAnswer) {
  const std::string abc = "abc";
  EXPECT_EQ(sha256_hex({reinterpret_cast<const std::uint8_t*>(abc.data()), abc.size()}),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Bundle, TensorArchiveRoundTripAndCorruption) {
  const fs::path dir = scratch("archive");
  fs::create_directories(dir);
  Rng rng = make_rng(60);
  std::map<std::string, Tensor> in{{"a", normal_tensor({2, 3, 4}, 1.0, rng)}, {"b.c", Tensor({1}, -0.5)}};
  write_tensor_archive(dir / "t.bin", in);
  EXPECT_EQ(read_tensor_archive(dir / "t.bin"), in);

  std::string bytes;
  {
    std::ifstream f(dir / "t.bin", std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(f), {});
  }
  std::ofstream(dir / "short.bin", std::ios::binary) << bytes.substr(0, bytes.size() - 5);
  EXPECT_THROW(read_tensor_archive(dir / "short.bin"), IoError);
  bytes[0] = 'X';
  std::ofstream(dir / "magic.bin", std::ios::binary) << bytes;
  EXPECT_THROW(read_tensor_archive(dir / "magic.bin"), IoError);
  EXPECT_THROW(read_tensor_archive(dir / "missing.bin"), IoError);
  fs::remove_all(dir);
}

TEST(Trainer, LateThird) {
  // 8 levels: the finest ceil(8/3) = 3 use the late weight.
  for (int n = 0; n < 8; ++n) EXPECT_EQ(in_late_third(n, 7), n < 3);
  EXPECT_TRUE(in_late_third(0, 0));
  EXPECT_FALSE(in_late_third(1, 2));
}

TEST(Trainer, SmokeBundleStructure) {
  const ModelBundle& b = smoke_bundle();
  EXPECT_TRUE(b.complete);
  ASSERT_EQ(b.pyramid.size(), 4u);
  EXPECT_EQ(b.split.split_index, 2);
  ASSERT_TRUE(b.naive.has_value());
  EXPECT_EQ(b.naive->level_index, 2);
  for (int n = 0; n < 4; ++n) {
    const ScaleModel& s = b.scale(n);
    EXPECT_EQ(s.is_coarse, n >= 2);
    EXPECT_EQ(s.height, b.pyramid[n].image.height());
    EXPECT_EQ(s.channels, 32);
    EXPECT_GT(s.gain, 0.0);
    // Coarsest-only fixed noise.
    const bool zero = std::all_of(s.z_rec.values().begin(), s.z_rec.values().end(), [](double v) { return v == 0; });
    EXPECT_EQ(zero, n != 3);
  }
  EXPECT_THROW(b.scale(4), NotFoundError);
  EXPECT_TRUE(std::isfinite(b.reconstruction_rmse_valid));
  const json m = read_manifest(shared_dir());
  EXPECT_EQ(m.at("status"), "complete");
  EXPECT_EQ(m.at("split_index"), 2);
  EXPECT_EQ(m.at("levels").size(), 4u);
}

TEST(Trainer, DeterministicForFixedSeed) {
  const fs::path a = scratch("det_a"), b = scratch("det_b"), c = scratch("det_c");
  train_full(desk().image, desk().mask, smoke(3), {a});
  train_full(desk().image, desk().mask, smoke(3), {b});
  train_full(desk().image, desk().mask, smoke(4), {c});
  EXPECT_EQ(bundle_content_hash(a), bundle_content_hash(b));
  EXPECT_NE(bundle_content_hash(a), bundle_content_hash(c));
  for (const auto& d : {a, b, c}) fs::remove_all(d);
}

TEST(Trainer, CoarserScalesStayFrozen) {
  std::map<int, std::map<std::string, Tensor>> snapshots;
  TrainOptions opts;
  opts.callbacks.on_scale_done = [&](const ModelBundle& b, int n) {
    for (const auto& [k, s] : b.scales) {
      if (snapshots.count(k)) {
        EXPECT_EQ(s.generator.net().state(), snapshots[k]) << "scale " << k << " changed while training " << n;
      }
    }
    snapshots[n] = b.scale(n).generator.net().state();
  };
  const ModelBundle b = train_full(desk().image, desk().mask, smoke(5), opts);
  for (const auto& [k, state] : snapshots) EXPECT_EQ(b.scale(k).generator.net().state(), state);
}

TEST(Trainer, CancelThenResumeMatchesUninterrupted) {
  const fs::path full = scratch("resume_full"), part = scratch("resume_part");
  train_full(desk().image, desk().mask, smoke(6), {full});

  std::stop_source stop;
  TrainOptions opts{part};
  opts.stop = stop.get_token();
  opts.callbacks.on_scale_done = [&](const ModelBundle&, int n) {
    if (n == 2) stop.request_stop();
  };
  EXPECT_THROW(train_full(desk().image, desk().mask, smoke(6), opts), CancelledError);
  const json m = read_manifest(part);
  EXPECT_EQ(m.at("status"), "partial");
  EXPECT_EQ(m.at("resume"), true);
  EXPECT_THROW(generate(load_bundle(part), {}), ValidationError);

  TrainOptions again{part};
  again.resume = true;
  int trained = 0;
  again.callbacks.on_stage = [&](const std::string& stage, int) {
    EXPECT_EQ(stage, "train");
    ++trained;
  };
  train_full(desk().image, desk().mask, smoke(6), again);
  EXPECT_EQ(trained, 2);
  EXPECT_EQ(bundle_content_hash(part), bundle_content_hash(full));

  // A mismatching config refuses to resume.
  EXPECT_THROW(train_full(desk().image, desk().mask, smoke(7), again), ConfigError);
  fs::remove_all(full);
  fs::remove_all(part);
}

TEST(Trainer, ProgressStagesAreReported) {
  std::set<std::string> stages;
  int records = 0;
  TrainOptions opts;
  opts.callbacks.on_progress = [&](const ProgressRecord& r) {
    stages.insert(r.stage);
    ++records;
    EXPECT_TRUE(std::isfinite(r.rec));
  };
  train_full(desk().image, desk().mask, smoke(8), opts);
  EXPECT_EQ(stages, (std::set<std::string>{"naive", "train"}));
  EXPECT_GE(records, 4 * 3);
}

TEST(Trainer, EmptyMaskSkipsNaiveAndFullMaskFails) {
  const ModelBundle b = train_full(desk().image, Mask(48, 64), smoke(), {});
  EXPECT_FALSE(b.naive.has_value());
  EXPECT_EQ(b.split.split_index, 4);
  for (const auto& [n, s] : b.scales) EXPECT_FALSE(s.is_coarse);
  const Image rec = reconstruct(b);
  EXPECT_EQ(rec, desk().image);

  EXPECT_THROW(train_full(desk().image, Mask(48, 64, 1), smoke(), {}), ValidationError);
  EXPECT_THROW(train_full(desk().image, Mask(40, 64), smoke(), {}), ValidationError);
}

TEST(Trainer, AblationsTrainAndAreRecorded) {
  TrainConfig no_bn = smoke();
  no_bn.mask_bn = false;
  const fs::path dir = scratch("ablate");
  train_full(desk().image, desk().mask, no_bn, {dir});
  EXPECT_EQ(read_manifest(dir).at("ablations").at("bn_masking_disabled"), true);
  fs::remove_all(dir);

  TrainConfig fine_only = smoke();
  fine_only.use_coarse_scales = false;
  const ModelBundle b = train_full(desk().image, desk().mask, fine_only, {});
  EXPECT_EQ(b.pyramid.size(), 2u);
  EXPECT_FALSE(b.naive.has_value());
  for (const auto& [n, s] : b.scales) EXPECT_FALSE(s.is_coarse);

  TrainConfig variants = smoke();
  variants.rec_weight_denominator = RecWeightDenominator::ValidSum;
  variants.soft_mask_rule = SoftMaskRule::ZeroInsideMask;
  variants.z_rec_mode = ZRecMode::PerScale;
  const ModelBundle v = train_full(desk().image, desk().mask, variants, {});
  EXPECT_TRUE(v.complete);
}

TEST(Sampler, ComposeNoiseOracle) {
  Rng rng = make_rng(70);
  const Tensor z = normal_tensor({3, 12, 14}, 1.0, rng);
  const Mask m = testing::rect_mask(12, 14, 2, 3, 7, 8);
  Rng a = make_rng(71), b = make_rng(71);
  const Tensor out = compose_noise(z, m, 2, 0.5, a);
  const Tensor fresh = normal_tensor(z.shape(), 0.5, b);
  const Mask region = erode(m, 2, StructuringElement::Square);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 12; ++y)
      for (int x = 0; x < 14; ++x) EXPECT_EQ(out.at(c, y, x), region(y, x) ? fresh.at(c, y, x) : z.at(c, y, x));
  Rng unused = make_rng(72);
  EXPECT_EQ(compose_noise(z, m, 0, 0.0, unused), z);
  EXPECT_THROW(compose_noise(z, Mask(3, 3), 0, 1.0, unused), ValidationError);
}

TEST(Sampler, DiversityModes) {
  EXPECT_EQ(diversity_mode("normal").erosion_radius, 5);
  EXPECT_EQ(diversity_mode("medium").erosion_radius, 2);
  EXPECT_EQ(diversity_mode("high").erosion_radius, 0);
  EXPECT_THROW(diversity_mode("wild"), ValidationError);
}

TEST(Sampler, SnappedBlendMask) {
  const Mask m = testing::rect_mask(30, 30, 10, 10, 6, 6);
  const SoftMask b = snapped_blend_mask(m, 5.0);
  const SoftMask raw = blend_mask(m, 5.0);
  for (int y = 0; y < 30; ++y)
    for (int x = 0; x < 30; ++x) {
      if (m(y, x)) EXPECT_EQ(b(y, x), 1.0);
      else if (raw(y, x) < kBlendSnap) EXPECT_EQ(b(y, x), 0.0);
      else EXPECT_EQ(b(y, x), raw(y, x));
    }
}

TEST(Sampler, SeedsAreReproducibleAndDistinct) {
  const ModelBundle& b = smoke_bundle();
  SampleRequest req;
  req.seed = 11;
  req.count = 3;
  req.mode = diversity_mode("high");
  const SampleResult r1 = generate(b, req), r2 = generate(b, req);
  ASSERT_EQ(r1.images.size(), 3u);
  for (int k = 0; k < 3; ++k) EXPECT_EQ(r1.images[k], r2.images[k]);
  EXPECT_NE(r1.images[0], r1.images[1]);
  // Sample k of a larger batch is the same image.
  req.count = 5;
  EXPECT_EQ(generate(b, req).images[2], r1.images[2]);
  req.seed = 12;
  EXPECT_NE(generate(b, req).images[0], r1.images[0]);
  req.count = 0;
  EXPECT_THROW(generate(b, req), ValidationError);
  req.count = kMaxSampleCount + 1;
  EXPECT_THROW(generate(b, req), ValidationError);
}

TEST(Sampler, OutsideBlendIsInputAndZeroDiversityIsReconstruction) {
  const ModelBundle& b = smoke_bundle();
  SampleRequest req;
  req.seed = 13;
  req.count = 4;
  req.mode = diversity_mode("high");
  const SampleResult r = generate(b, req);
  for (const auto& img : r.images)
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 48; ++y)
        for (int x = 0; x < 64; ++x)
          if (r.blend_weights(y, x) == 0.0) ASSERT_EQ(img.at(c, y, x), b.image.at(c, y, x));
  EXPECT_EQ(r.max_std_outside_blend, 0.0);
  EXPECT_GT(r.mean_std_in_mask, 0.0);

  req.mode.noise_multiplier = 0.0;
  const SampleResult still = generate(b, req);
  const Image rec = reconstruct(b);
  for (const auto& img : still.images) EXPECT_EQ(img, rec);
  EXPECT_NEAR(masked_rmse(rec, b.image, b.mask.inverted()), b.reconstruction_rmse_valid, 1e-12);
}

TEST(Sampler, SaveLoadGivesIdenticalSamples) {
  const ModelBundle& b = smoke_bundle();
  const ModelBundle loaded = load_bundle(shared_dir());
  SampleRequest req;
  req.seed = 21;
  req.count = 2;
  const SampleResult a = generate(b, req), c = generate(loaded, req);
  for (int k = 0; k < 2; ++k) EXPECT_EQ(a.images[k], c.images[k]);
  EXPECT_EQ(reconstruct(loaded), reconstruct(b));
}

TEST(Bundle, TamperingIsDetected) {
  const ModelBundle& b = smoke_bundle();
  const fs::path dir = scratch("tamper");
  save_bundle(b, dir);
  EXPECT_TRUE(is_bundle_dir(dir));
  const std::string hash = bundle_content_hash(dir);
  EXPECT_EQ(read_manifest(dir).at("content_sha256"), hash);
  {
    std::fstream f(dir / "scale_1.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(200);
    f.put('\x7f');
  }
  EXPECT_THROW(load_bundle(dir), IoError);
  fs::remove(dir / "manifest.json");
  EXPECT_FALSE(is_bundle_dir(dir));
  EXPECT_THROW(load_bundle(dir), IoError);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace holefill
