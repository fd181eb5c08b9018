#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <stop_token>
#include <string>

#include <json.hpp>

#include "holefill/bundle.hpp"
#include "holefill/config.hpp"

namespace holefill {

struct ProgressRecord {
  std::string stage;  // "naive" or "train"
  int scale = 0;
  int iteration = 0;
  double d_loss = 0.0;
  double g_adv = 0.0;
  double rec = 0.0;
  double gp = 0.0;
};

nlohmann::json to_json(const ProgressRecord& r);

struct TrainCallbacks {
  std::function<void(const ProgressRecord&)> on_progress;
  // Fired when the naive completion starts and when each scale starts.
  std::function<void(const std::string& stage, int scale)> on_stage;
  std::function<void(const ModelBundle&, int scale)> on_scale_done;
};

struct TrainOptions {
  std::filesystem::path bundle_dir;  // empty: keep everything in memory
  bool resume = false;               // continue a partial bundle found in bundle_dir
  TrainCallbacks callbacks;
  std::stop_token stop;
};

// Coarsest third of the work is trained with rec_weight, the finest third
// (levels n < ceil((N + 1) / 3)) with rec_weight_late.
bool in_late_third(int n, int coarsest);

// Trains level n with every coarser level of `bundle` already frozen. `reals`
// holds the naive-derived real images of coarse levels. Throws TrainingError
// on a non-finite loss and CancelledError when `stop` is requested.
ScaleModel train_scale(int n, const ModelBundle& bundle, const std::map<int, Image>& reals,
                       const TrainCallbacks& callbacks = {}, std::stop_token stop = {});

// Pyramid, split, naive completion, coarse reals, then levels N..0. With a
// bundle_dir the bundle is saved after every scale (partial, resumable) and
// once more when complete. On failure or cancellation the partial bundle
// stays on disk and the exception propagates.
ModelBundle train_full(const Image& image, const Mask& mask, const TrainConfig& config, const TrainOptions& options = {});

}  // namespace holefill
