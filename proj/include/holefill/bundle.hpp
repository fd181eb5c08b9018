#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "holefill/config.hpp"
#include "holefill/mask_calculus.hpp"
#include "holefill/naive_inpaint.hpp"
#include "holefill/nets.hpp"
#include "holefill/pyramid.hpp"

namespace holefill {

inline constexpr int kBundleFormatVersion = 1;

/// Frozen per-scale state. z_rec is stored already multiplied by its gain.
struct ScaleModel {
  int index = 0;
  int height = 0;
  int width = 0;
  bool is_coarse = false;
  int channels = 0;
  double gain = 1.0;
  bool inherited = false;
  Tensor z_rec;
  Generator generator;
  Discriminator discriminator;
  double final_rec_loss = 0.0;
  double rec_rmse = 0.0;  // reconstruction vs the scale's real image (valid pixels at fine scales)
};

struct ModelBundle {
  TrainConfig config;
  Image image;  // level-0 input
  Mask mask;
  Pyramid pyramid;  // truncated when coarse scales are disabled
  ScaleSplit split;
  std::optional<NaiveResult> naive;
  std::map<int, ScaleModel> scales;  // keyed by level index
  bool complete = false;
  double reconstruction_rmse_valid = 0.0;
  double elapsed_seconds = 0.0;

  int coarsest_index() const { return pyramid.coarsest_index(); }
  const ScaleModel& scale(int n) const;
  bool has_scale(int n) const { return scales.count(n) > 0; }
};

// Levels 0..N with masks, coarse flags and (unless disabled) the split
// applied; shared by training and bundle loading so both agree exactly.
struct PreparedPyramid {
  Pyramid pyramid;
  ScaleSplit split;
};
PreparedPyramid prepare_pyramid(const Image& image, const Mask& mask, const TrainConfig& config);

// Flat named-tensor archive: "HFTA" magic, u32 version, u32 count, then per
// entry u32 name length, name bytes, u32 rank, i32 dims, float64 data (all
// little-endian).
void write_tensor_archive(const std::filesystem::path& path, const std::map<std::string, Tensor>& tensors);
std::map<std::string, Tensor> read_tensor_archive(const std::filesystem::path& path);

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_file(const std::filesystem::path& path);

// Writes every artifact and finally manifest.json (write-then-rename). A
// directory without a manifest is never a bundle.
void save_bundle(const ModelBundle& bundle, const std::filesystem::path& dir);
// Throws IoError for a missing, corrupt or mismatching bundle.
ModelBundle load_bundle(const std::filesystem::path& dir);
nlohmann::json read_manifest(const std::filesystem::path& dir);
bool is_bundle_dir(const std::filesystem::path& dir);

// Hash over the per-file hashes of the input, naive result and all scale
// archives. Wall-clock fields of the manifest are excluded.
std::string bundle_content_hash(const std::filesystem::path& dir);

void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace holefill
