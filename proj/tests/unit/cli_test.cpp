#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>

#include <json.hpp>

#include "holefill/image.hpp"

namespace holefill {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const fs::path kData = HOLEFILL_TEST_DATA;
const std::string kCli = HOLEFILL_CLI;

struct CliRun {
  int code = -1;
  std::string out;
};

CliRun run(const std::string& args) {
  CliRun r;
  FILE* p = ::popen((kCli + " " + args + " 2>/dev/null").c_str(), "r");
  char buf[4096];
  for (std::size_t n; (n = std::fread(buf, 1, sizeof buf, p)) > 0;) r.out.append(buf, n);
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string last_line(const std::string& s) {
  const auto end = s.find_last_not_of('\n');
  const auto start = s.rfind('\n', end);
  return s.substr(start == std::string::npos ? 0 : start + 1, end - (start == std::string::npos ? 0 : start + 1) + 1);
}

TEST(Cli, TrainSampleReconstructReport) {
  const fs::path dir = fs::temp_directory_path() / ("holefill_cli_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  const std::string image = (kData / "desk_48x64.png").string(), mask = (kData / "desk_48x64_mask.png").string();

  const CliRun train = run("train --image " + image + " --mask " + mask + " --out " + (dir / "bundle").string() +
                        " --preset smoke --seed 2 --quiet --json");
  ASSERT_EQ(train.code, 0) << train.out;
  EXPECT_TRUE(fs::exists(dir / "bundle" / "manifest.json"));

  const CliRun sample = run("sample --bundle " + (dir / "bundle").string() + " --out " + (dir / "s").string() +
                         " --count 5 --mode high --seed 4 --json");
  ASSERT_EQ(sample.code, 0);
  const json sj = json::parse(last_line(sample.out));
  ASSERT_EQ(sj.at("samples").size(), 5u);
  for (int k = 0; k < 5; ++k) {
    const fs::path png = dir / "s" / ("sample_" + std::to_string(k) + ".png");
    ASSERT_TRUE(fs::exists(png));
    EXPECT_EQ(load_image(png).width(), 64);
  }
  EXPECT_TRUE(fs::exists(dir / "s" / "std_map.pfm"));
  EXPECT_EQ(load_pfm(dir / "s" / "std_map.pfm").height, 48);

  std::string files;
  for (int k = 0; k < 5; ++k) files += " " + (dir / "s" / ("sample_" + std::to_string(k) + ".png")).string();
  const CliRun report = run("report" + files + " --mask " + mask + " --out " + (dir / "report.json").string() + " --json");
  ASSERT_EQ(report.code, 0);
  const json rj = json::parse(last_line(report.out));
  EXPECT_EQ(rj.at("num_pairs"), 10);
  EXPECT_GT(rj.at("mean_pairwise_pixel_mse_in_mask").get<double>(), 0.0);
  EXPECT_TRUE(fs::exists(dir / "report.json"));

  const CliRun rec = run("reconstruct --bundle " + (dir / "bundle").string() + " --out " + (dir / "rec.png").string() +
                      " --json");
  ASSERT_EQ(rec.code, 0);
  EXPECT_LT(json::parse(last_line(rec.out)).at("rmse_valid").get<double>(), 1.0);

  const CliRun naive = run("naive --image " + image + " --mask " + mask + " --out " + (dir / "naive.png").string() +
                        " --preset smoke --json");
  ASSERT_EQ(naive.code, 0);
  EXPECT_EQ(json::parse(last_line(naive.out)).at("level"), 2);
  fs::remove_all(dir);
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("--help").code, 0);
  EXPECT_EQ(run("train --image /nonexistent.png --mask x --out y").code, 1);
  EXPECT_EQ(run("sample --bundle /tmp --out /tmp/x --count 0").code, 1);
  const std::string image = (kData / "desk_48x64.png").string();
  // Mask of another size: validation error.
  const fs::path small = fs::temp_directory_path() / ("holefill_small_" + std::to_string(::getpid()) + ".png");
  save_mask(small, Mask(10, 10, 1));
  EXPECT_EQ(run("train --image " + image + " --mask " + small.string() + " --out /tmp/unused --preset smoke").code, 1);
  // Not a bundle: I/O error.
  EXPECT_EQ(run("sample --bundle " + kData.string() + " --out /tmp/unused").code, 2);
  fs::remove(small);
}

}  // namespace
}  // namespace holefill
