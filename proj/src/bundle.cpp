#include "holefill/bundle.hpp"

#include <openssl/evp.h>

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "holefill/errors.hpp"

namespace holefill {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

namespace {

constexpr char kArchiveMagic[4] = {'H', 'F', 'T', 'A'};
constexpr std::uint32_t kArchiveVersion = 1;
constexpr const char* kManifestName = "manifest.json";
constexpr const char* kInputArchive = "input.bin";
constexpr const char* kNaiveArchive = "naive.bin";
constexpr const char* kNaivePng = "naive.png";

std::string scale_file(int n) { return "scale_" + std::to_string(n) + ".bin"; }

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in, const fs::path& path) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) throw IoError("truncated archive " + path.string());
  return value;
}

fs::path temp_sibling(const fs::path& path) { return path.string() + ".tmp"; }

void commit(const fs::path& tmp, const fs::path& path) {
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

Tensor mask_to_tensor(const Mask& m) { return mask_tensor(m, 1); }

Mask tensor_to_mask(const Tensor& t) {
  if (t.rank() != 3 || t.channels() != 1) throw IoError("stored mask has the wrong shape");
  Mask m(t.height(), t.width());
  for (int y = 0; y < t.height(); ++y)
    for (int x = 0; x < t.width(); ++x) m.set(y, x, t.at(0, y, x) != 0.0);
  return m;
}

const Tensor& need(const std::map<std::string, Tensor>& archive, const std::string& name, const fs::path& path) {
  auto it = archive.find(name);
  if (it == archive.end()) throw IoError("archive " + path.string() + " lacks '" + name + "'");
  return it->second;
}

}  // namespace

const ScaleModel& ModelBundle::scale(int n) const {
  auto it = scales.find(n);
  if (it == scales.end()) throw NotFoundError("bundle has no trained scale " + std::to_string(n));
  return it->second;
}

PreparedPyramid prepare_pyramid(const Image& image, const Mask& mask, const TrainConfig& config) {
  PreparedPyramid out;
  out.pyramid = build_pyramid(image, mask, config.pyramid);
  out.split = compute_scale_split(out.pyramid.levels, config.receptive_field, config.split_threshold);
  if (config.use_coarse_scales) {
    apply_scale_split(out.pyramid, out.split);
    return out;
  }
  if (out.split.split_index == 0) {
    throw ConfigError("coarse scales cannot be disabled: the finest level already has too few valid patches");
  }
  out.pyramid.levels.resize(
      std::min(out.pyramid.levels.size(), static_cast<std::size_t>(out.split.split_index)));
  for (auto& level : out.pyramid.levels) level.is_coarse = false;
  return out;
}

void write_tensor_archive(const fs::path& path, const std::map<std::string, Tensor>& tensors) {
  const fs::path tmp = temp_sibling(path);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(kArchiveMagic, 4);
    put<std::uint32_t>(out, kArchiveVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
      put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
      for (int d : t.shape()) put<std::int32_t>(out, d);
      out.write(reinterpret_cast<const char*>(t.values().data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  commit(tmp, path);
}

std::map<std::string, Tensor> read_tensor_archive(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kArchiveMagic, 4) != 0) throw IoError(path.string() + " is not a tensor archive");
  if (get<std::uint32_t>(in, path) != kArchiveVersion) throw IoError("unsupported archive version in " + path.string());
  const auto count = get<std::uint32_t>(in, path);
  std::map<std::string, Tensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get<std::uint32_t>(in, path);
    if (len > 4096) throw IoError("corrupt entry name in " + path.string());
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw IoError("truncated archive " + path.string());
    const auto rank = get<std::uint32_t>(in, path);
    if (rank > 8) throw IoError("corrupt rank in " + path.string());
    Shape shape;
    std::size_t numel = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      const auto d = get<std::int32_t>(in, path);
      if (d < 0 || d > (1 << 24)) throw IoError("corrupt dimension in " + path.string());
      shape.push_back(d);
      numel *= static_cast<std::size_t>(d);
    }
    std::vector<double> data(numel);
    if (!in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(numel * sizeof(double)))) {
      throw IoError("truncated archive " + path.string());
    }
    out.emplace(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  return out;
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 computation failed");
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return sha256_hex(bytes);
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = temp_sibling(path);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  commit(tmp, path);
}

void save_bundle(const ModelBundle& bundle, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  json files = json::object();
  write_tensor_archive(dir / kInputArchive, {{"image", bundle.image.tensor()}, {"mask", mask_to_tensor(bundle.mask)}});
  files[kInputArchive] = sha256_file(dir / kInputArchive);

  json manifest;
  manifest["format_version"] = kBundleFormatVersion;
  manifest["status"] = bundle.complete ? "complete" : "partial";
  manifest["resume"] = !bundle.complete;
  manifest["config"] = bundle.config;
  manifest["split_index"] = bundle.split.split_index;
  manifest["valid_fraction_per_level"] = bundle.split.valid_fraction_per_level;
  manifest["undersized"] = bundle.pyramid.undersized;
  manifest["ablations"] = {{"bn_masking_disabled", !bundle.config.mask_bn},
                           {"coarse_scales_disabled", !bundle.config.use_coarse_scales},
                           {"rec_weight_denominator", to_string(bundle.config.rec_weight_denominator)},
                           {"soft_mask_rule", to_string(bundle.config.soft_mask_rule)}};
  json levels = json::array();
  for (const auto& level : bundle.pyramid.levels) {
    levels.push_back({{"index", level.index},
                      {"height", level.image.height()},
                      {"width", level.image.width()},
                      {"is_coarse", level.is_coarse},
                      {"masked_pixels", level.mask.count()}});
  }
  manifest["levels"] = levels;

  if (bundle.naive) {
    const auto& nr = *bundle.naive;
    write_tensor_archive(dir / kNaiveArchive, {{"inpainted_full", nr.inpainted_full.tensor()},
                                               {"inpainted_raw", nr.inpainted_raw.tensor()}});
    save_image(dir / kNaivePng, nr.inpainted_full);
    files[kNaiveArchive] = sha256_file(dir / kNaiveArchive);
    manifest["naive"] = {{"level", nr.level_index},
                         {"final_loss", nr.final_loss},
                         {"attempts", nr.attempts},
                         {"archive", kNaiveArchive},
                         {"preview", kNaivePng}};
  }

  json scales = json::array();
  for (auto it = bundle.scales.rbegin(); it != bundle.scales.rend(); ++it) {
    const ScaleModel& s = it->second;
    std::map<std::string, Tensor> tensors;
    for (auto& [k, v] : s.generator.net().state()) tensors["generator." + k] = v;
    for (auto& [k, v] : s.discriminator.net().state()) tensors["discriminator." + k] = v;
    tensors["z_rec"] = s.z_rec;
    const std::string file = scale_file(s.index);
    write_tensor_archive(dir / file, tensors);
    files[file] = sha256_file(dir / file);
    scales.push_back({{"index", s.index},
                      {"height", s.height},
                      {"width", s.width},
                      {"is_coarse", s.is_coarse},
                      {"channels", s.channels},
                      {"gain", s.gain},
                      {"inherited", s.inherited},
                      {"final_rec_loss", s.final_rec_loss},
                      {"rec_rmse", s.rec_rmse},
                      {"archive", file}});
  }
  manifest["scales"] = scales;
  manifest["files"] = files;
  manifest["reconstruction_rmse_valid"] = bundle.reconstruction_rmse_valid;
  manifest["elapsed_seconds"] = bundle.elapsed_seconds;

  std::string combined;
  for (const auto& [name, hash] : files.items()) combined += name + ":" + hash.get<std::string>() + "\n";
  manifest["content_sha256"] =
      sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(combined.data()), combined.size()));

  write_text_atomic(dir / kManifestName, manifest.dump(2) + "\n");
}

json read_manifest(const fs::path& dir) {
  const fs::path path = dir / kManifestName;
  std::ifstream in(path);
  if (!in) throw IoError("no bundle manifest at " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("corrupt manifest " + path.string() + ": " + e.what());
  }
}

bool is_bundle_dir(const fs::path& dir) { return fs::is_regular_file(dir / kManifestName); }

ModelBundle load_bundle(const fs::path& dir) {
  const json manifest = read_manifest(dir);
  try {
    if (manifest.at("format_version").get<int>() != kBundleFormatVersion) {
      throw IoError("unsupported bundle format version in " + dir.string());
    }
    for (const auto& [name, hash] : manifest.at("files").items()) {
      if (sha256_file(dir / name) != hash.get<std::string>()) throw IoError("bundle file " + name + " is corrupt");
    }
    ModelBundle bundle;
    from_json(manifest.at("config"), bundle.config);
    bundle.complete = manifest.at("status").get<std::string>() == "complete";
    bundle.reconstruction_rmse_valid = manifest.value("reconstruction_rmse_valid", 0.0);
    bundle.elapsed_seconds = manifest.value("elapsed_seconds", 0.0);

    const auto input = read_tensor_archive(dir / kInputArchive);
    bundle.image = Image(need(input, "image", dir / kInputArchive));
    bundle.mask = tensor_to_mask(need(input, "mask", dir / kInputArchive));
    auto prepared = prepare_pyramid(bundle.image, bundle.mask, bundle.config);
    bundle.pyramid = std::move(prepared.pyramid);
    bundle.split = std::move(prepared.split);
    if (bundle.split.split_index != manifest.at("split_index").get<int>() ||
        bundle.pyramid.size() != manifest.at("levels").size()) {
      throw IoError("bundle pyramid does not match its manifest");
    }

    if (auto nj = manifest.find("naive"); nj != manifest.end()) {
      const fs::path path = dir / nj->at("archive").get<std::string>();
      const auto archive = read_tensor_archive(path);
      NaiveResult nr;
      nr.inpainted_full = Image(need(archive, "inpainted_full", path));
      nr.inpainted_raw = Image(need(archive, "inpainted_raw", path));
      nr.level_index = nj->at("level").get<int>();
      nr.final_loss = nj->at("final_loss").get<double>();
      nr.attempts = nj->at("attempts").get<int>();
      bundle.naive = std::move(nr);
    }

    for (const auto& sj : manifest.at("scales")) {
      ScaleModel s;
      s.index = sj.at("index").get<int>();
      s.height = sj.at("height").get<int>();
      s.width = sj.at("width").get<int>();
      s.is_coarse = sj.at("is_coarse").get<bool>();
      s.channels = sj.at("channels").get<int>();
      s.gain = sj.at("gain").get<double>();
      s.inherited = sj.at("inherited").get<bool>();
      s.final_rec_loss = sj.at("final_rec_loss").get<double>();
      s.rec_rmse = sj.at("rec_rmse").get<double>();
      const fs::path path = dir / sj.at("archive").get<std::string>();
      const auto archive = read_tensor_archive(path);
      s.generator = Generator(s.channels, bundle.config.num_blocks);
      s.generator.net().load_state(archive, "generator.");
      s.discriminator = Discriminator(s.channels, bundle.config.num_blocks);
      s.discriminator.net().load_state(archive, "discriminator.");
      s.z_rec = need(archive, "z_rec", path);
      if (s.z_rec.shape() != Shape{3, s.height, s.width}) throw IoError("z_rec shape mismatch in " + path.string());
      bundle.scales.emplace(s.index, std::move(s));
    }
    return bundle;
  } catch (const json::exception& e) {
    throw IoError("malformed manifest in " + dir.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw IoError("bundle config is invalid: " + std::string(e.what()));
  }
}

std::string bundle_content_hash(const fs::path& dir) {
  const json manifest = read_manifest(dir);
  std::string combined;
  for (const auto& [name, hash] : manifest.at("files").items()) combined += name + ":" + sha256_file(dir / name) + "\n";
  return sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(combined.data()), combined.size()));
}

}  // namespace holefill
