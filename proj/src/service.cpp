#include "holefill/service.hpp"

#include <httplib.h>

#include <algorithm>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "holefill/errors.hpp"
#include "holefill/image.hpp"
#include "holefill/sampler.hpp"

namespace holefill {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::size_t kProgressKept = 1000;
constexpr const char* kJobFile = "job.json";
constexpr const char* kImageFile = "image.png";
constexpr const char* kMaskFile = "mask.png";

std::string now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%S") << '.' << std::setw(3) << std::setfill('0') << ms << 'Z';
  return out.str();
}

std::string new_job_id() {
  static std::mutex m;
  static std::mt19937_64 gen{std::random_device{}()};
  std::lock_guard lock(m);
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << gen();
  return out.str();
}

bool is_token(const std::string& s, bool allow_dash) {
  if (s.empty() || s.size() > 128) return false;
  return std::all_of(s.begin(), s.end(), [&](char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (allow_dash && c == '-');
  });
}

void write_bytes_atomic(const fs::path& path, std::span<const std::uint8_t> bytes) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + ": " + ec.message());
}

ProgressRecord progress_from_json(const json& j) {
  ProgressRecord r;
  r.stage = j.value("stage", "train");
  r.scale = j.value("scale", 0);
  r.iteration = j.value("iteration", 0);
  r.d_loss = j.value("d_loss", 0.0);
  r.g_adv = j.value("g_adv", 0.0);
  r.rec = j.value("rec", 0.0);
  r.gp = j.value("gp", 0.0);
  return r;
}

}  // namespace

fs::path default_store_root() {
  if (const char* env = std::getenv(kStoreEnvVar); env && *env) return fs::path(env);
  return fs::path("holefill-store");
}

std::string to_string(JobState s) {
  switch (s) {
    case JobState::Queued: return "queued";
    case JobState::Naive: return "naive";
    case JobState::Training: return "training";
    case JobState::Done: return "done";
    case JobState::Failed: return "failed";
    case JobState::Cancelled: return "cancelled";
  }
  return "failed";
}

JobState parse_job_state(const std::string& s) {
  for (JobState st : {JobState::Queued, JobState::Naive, JobState::Training, JobState::Done, JobState::Failed,
                      JobState::Cancelled})
    if (to_string(st) == s) return st;
  throw IoError("unknown job state '" + s + "'");
}

bool is_terminal(JobState s) { return s == JobState::Done || s == JobState::Failed || s == JobState::Cancelled; }

json to_json(const JobInfo& job) {
  json progress = json::array();
  for (const auto& r : job.progress) progress.push_back(to_json(r));
  json j{{"id", job.id},
         {"state", to_string(job.state)},
         {"scale", job.scale},
         {"iteration", job.iteration},
         {"created_at", job.created_at},
         {"updated_at", job.updated_at},
         {"config", job.config},
         {"progress", progress}};
  j["bundle_path"] = job.state == JobState::Done ? json(job.bundle_path.string()) : json(nullptr);
  j["error"] = job.error.empty() ? json(nullptr) : json(job.error);
  return j;
}

struct JobService::Job {
  JobInfo info;
  std::deque<ProgressRecord> progress;
  std::stop_source stop;
  bool running = false;
  std::mutex sample_mutex;
  std::shared_ptr<const ModelBundle> bundle;
};

JobService::JobService(ServiceOptions options) : options_(std::move(options)) {
  if (options_.store_root.empty()) options_.store_root = default_store_root();
  if (options_.workers < 1) throw ConfigError("service needs at least one worker");
  std::error_code ec;
  fs::create_directories(options_.store_root / "jobs", ec);
  if (ec) throw IoError("cannot create job store at " + options_.store_root.string() + ": " + ec.message());
  base_config();  // fail early on a bad defaults file
  reindex();
  for (int w = 0; w < options_.workers; ++w) workers_.emplace_back([this](std::stop_token st) { worker_loop(st); });
}

JobService::~JobService() {
  {
    std::lock_guard lock(mutex_);
    for (auto& w : workers_) w.request_stop();
    for (auto& [id, job] : jobs_)
      if (job->running) job->stop.request_stop();
  }
  changed_.notify_all();
  workers_.clear();
}

TrainConfig JobService::base_config() const {
  TrainConfig c = make_preset(options_.default_preset);
  if (!options_.defaults_file.empty()) {
    std::ifstream in(options_.defaults_file);
    if (!in) throw IoError("cannot read " + options_.defaults_file.string());
    try {
      apply_overrides(c, json::parse(in));
    } catch (const json::exception& e) {
      throw ConfigError("defaults file is not valid JSON: " + std::string(e.what()));
    }
  }
  return c;
}

fs::path JobService::job_dir(const std::string& id) const { return options_.store_root / "jobs" / id; }

std::shared_ptr<JobService::Job> JobService::find(const std::string& id) const {
  auto it = jobs_.find(id);
  if (it == jobs_.end()) throw NotFoundError("no job '" + id + "'");
  return it->second;
}

void JobService::persist(const Job& job) const {
  json j = to_json(job.info);
  j.erase("progress");
  j["bundle_path"] = job.info.bundle_path.string();
  write_text_atomic(job_dir(job.info.id) / kJobFile, j.dump(2) + "\n");
}

void JobService::reindex() {
  std::vector<std::shared_ptr<Job>> pending;
  for (const auto& entry : fs::directory_iterator(options_.store_root / "jobs")) {
    const fs::path file = entry.path() / kJobFile;
    if (!entry.is_directory() || !fs::is_regular_file(file)) continue;
    try {
      std::ifstream in(file);
      const json j = json::parse(in);
      auto job = std::make_shared<Job>();
      job->info.id = j.at("id").get<std::string>();
      job->info.state = parse_job_state(j.at("state").get<std::string>());
      job->info.scale = j.value("scale", -1);
      job->info.iteration = j.value("iteration", -1);
      job->info.created_at = j.value("created_at", "");
      job->info.updated_at = j.value("updated_at", "");
      job->info.config = j.at("config");
      job->info.bundle_path = j.value("bundle_path", "");
      job->info.error = j.value("error", json(nullptr)).is_null() ? "" : j.at("error").get<std::string>();
      std::ifstream log(job_dir(job->info.id) / "bundle" / "progress.jsonl");
      for (std::string line; std::getline(log, line);) {
        if (line.empty()) continue;
        job->progress.push_back(progress_from_json(json::parse(line)));
        if (job->progress.size() > kProgressKept) job->progress.pop_front();
      }
      if (!is_terminal(job->info.state)) {
        job->info.state = JobState::Queued;
        pending.push_back(job);
      }
      jobs_[job->info.id] = job;
    } catch (const std::exception&) {
      // Half-written or foreign directory: not a job.
    }
  }
  std::sort(pending.begin(), pending.end(),
            [](const auto& a, const auto& b) { return a->info.created_at < b->info.created_at; });
  for (const auto& job : pending) queue_.push_back(job->info.id);
}

JobInfo JobService::create_job(std::span<const std::uint8_t> image_png, std::span<const std::uint8_t> mask_png,
                               const json& overrides) {
  const Image image = decode_image(image_png);
  const Mask mask = decode_mask(mask_png);
  check_same_dims(image, mask);
  TrainConfig config = base_config();
  if (!overrides.is_null()) {
    if (!overrides.is_object()) throw ValidationError("config overrides must be a JSON object");
    apply_overrides(config, overrides);
  }
  config.validate();

  auto job = std::make_shared<Job>();
  job->info.id = new_job_id();
  job->info.created_at = job->info.updated_at = now_iso8601();
  job->info.config = config;
  job->info.bundle_path = job_dir(job->info.id) / "bundle";
  {
    std::lock_guard lock(mutex_);
    if (static_cast<int>(queue_.size()) >= options_.max_queue) throw CapacityError("job queue is full");
  }
  const fs::path dir = job_dir(job->info.id);
  std::error_code ec;
  fs::create_directories(dir / "samples", ec);
  if (ec) throw IoError("cannot create job directory: " + ec.message());
  write_bytes_atomic(dir / kImageFile, image_png);
  write_bytes_atomic(dir / kMaskFile, mask_png);
  persist(*job);
  {
    std::lock_guard lock(mutex_);
    jobs_[job->info.id] = job;
    queue_.push_back(job->info.id);
  }
  changed_.notify_all();
  return get_status(job->info.id);
}

JobInfo JobService::get_status(const std::string& id, int tail) const {
  std::lock_guard lock(mutex_);
  const auto job = find(id);
  JobInfo info = job->info;
  const std::size_t k = static_cast<std::size_t>(tail < 0 ? options_.progress_tail : tail);
  const std::size_t start = job->progress.size() > k ? job->progress.size() - k : 0;
  info.progress.assign(job->progress.begin() + static_cast<long>(start), job->progress.end());
  return info;
}

std::vector<JobInfo> JobService::list_jobs() const {
  std::vector<std::string> ids;
  {
    std::lock_guard lock(mutex_);
    for (const auto& [id, job] : jobs_) ids.push_back(id);
  }
  std::vector<JobInfo> out;
  for (const auto& id : ids) out.push_back(get_status(id, 0));
  return out;
}

JobInfo JobService::cancel_job(const std::string& id) {
  {
    std::lock_guard lock(mutex_);
    const auto job = find(id);
    if (is_terminal(job->info.state)) {
      throw ConflictError("job '" + id + "' is already " + to_string(job->info.state));
    }
    queue_.erase(std::remove(queue_.begin(), queue_.end(), id), queue_.end());
    job->stop.request_stop();
    job->info.state = JobState::Cancelled;
    job->info.updated_at = now_iso8601();
    persist(*job);
  }
  changed_.notify_all();
  return get_status(id);
}

void JobService::worker_loop(std::stop_token stop) {
  while (true) {
    std::shared_ptr<Job> job;
    {
      std::unique_lock lock(mutex_);
      changed_.wait(lock, [&] { return stop.stop_requested() || !queue_.empty(); });
      if (stop.stop_requested()) return;
      job = find(queue_.front());
      queue_.pop_front();
      if (job->info.state != JobState::Queued) continue;
      job->running = true;
    }
    run_job(job);
  }
}

void JobService::run_job(const std::shared_ptr<Job>& job) {
  const std::string id = job->info.id;
  const fs::path dir = job_dir(id);
  auto update = [&](auto&& mutate, bool write) {
    {
      std::lock_guard lock(mutex_);
      if (job->info.state == JobState::Cancelled) return;
      mutate(job->info);
      job->info.updated_at = now_iso8601();
      if (write) persist(*job);
    }
    changed_.notify_all();
  };

  TrainOptions options;
  options.bundle_dir = dir / "bundle";
  options.resume = true;
  options.stop = job->stop.get_token();
  options.callbacks.on_stage = [&](const std::string& stage, int scale) {
    update(
        [&](JobInfo& info) {
          info.state = stage == "naive" ? JobState::Naive : JobState::Training;
          info.scale = scale;
          info.iteration = -1;
        },
        true);
  };
  options.callbacks.on_progress = [&](const ProgressRecord& r) {
    {
      std::lock_guard lock(mutex_);
      job->progress.push_back(r);
      if (job->progress.size() > kProgressKept) job->progress.pop_front();
    }
    update([&](JobInfo& info) { info.iteration = r.iteration; }, false);
  };

  try {
    TrainConfig config = make_preset("full");
    from_json(job->info.config, config);
    const Image image = load_image(dir / kImageFile);
    const Mask mask = load_mask(dir / kMaskFile);
    train_full(image, mask, config, options);
    update([&](JobInfo& info) { info.state = JobState::Done; }, true);
  } catch (const CancelledError&) {
    // Either the job was cancelled (state already set) or the service is
    // shutting down, in which case the job stays resumable.
  } catch (const std::exception& e) {
    update(
        [&](JobInfo& info) {
          info.state = JobState::Failed;
          info.error = e.what();
        },
        true);
  }
  {
    std::lock_guard lock(mutex_);
    job->running = false;
  }
  changed_.notify_all();
}

std::shared_ptr<const ModelBundle> JobService::bundle_for(Job& job) {
  if (!job.bundle) job.bundle = std::make_shared<const ModelBundle>(load_bundle(job_dir(job.info.id) / "bundle"));
  return job.bundle;
}

std::vector<std::string> JobService::request_samples(const std::string& id, std::uint64_t seed, const std::string& mode,
                                                     int count) {
  std::shared_ptr<Job> job;
  {
    std::lock_guard lock(mutex_);
    job = find(id);
    if (job->info.state != JobState::Done) {
      throw ConflictError("job '" + id + "' is " + to_string(job->info.state) + ", samples need a finished job");
    }
  }
  if (count < 1 || count > kMaxSampleCount) {
    throw ValidationError("count must lie in [1, " + std::to_string(kMaxSampleCount) + "]");
  }
  diversity_mode(mode);  // rejects unknown names before anything is written

  std::vector<std::string> ids;
  for (int k = 0; k < count; ++k) {
    ids.push_back(id + "-" + mode + "-s" + std::to_string(seed) + "-c" + std::to_string(count) + "-" + std::to_string(k));
  }
  const fs::path samples = job_dir(id) / "samples";
  std::lock_guard sample_lock(job->sample_mutex);
  const bool all_present =
      std::all_of(ids.begin(), ids.end(), [&](const std::string& s) { return fs::exists(samples / (s + ".png")); });
  if (all_present) return ids;

  const auto bundle = bundle_for(*job);
  SampleRequest request;
  request.seed = seed;
  request.count = count;
  request.mode = diversity_mode(mode, bundle->config.receptive_field);
  const SampleResult result = generate(*bundle, request);
  fs::create_directories(samples);
  for (int k = 0; k < count; ++k) {
    write_bytes_atomic(samples / (ids[static_cast<std::size_t>(k)] + ".png"),
                       encode_png(result.images[static_cast<std::size_t>(k)]));
  }
  save_pfm(samples / (id + "-" + mode + "-s" + std::to_string(seed) + "-c" + std::to_string(count) + "-std.pfm"),
           result.std_map);
  return ids;
}

fs::path JobService::sample_path(const std::string& sample_id) const {
  if (!is_token(sample_id, true)) throw NotFoundError("no sample '" + sample_id + "'");
  const std::string id = sample_id.substr(0, sample_id.find('-'));
  {
    std::lock_guard lock(mutex_);
    find(id);
  }
  const fs::path path = job_dir(id) / "samples" / (sample_id + ".png");
  if (!fs::is_regular_file(path)) throw NotFoundError("no sample '" + sample_id + "'");
  return path;
}

fs::path JobService::naive_path(const std::string& id) const {
  {
    std::lock_guard lock(mutex_);
    find(id);
  }
  const fs::path path = job_dir(id) / "bundle" / "naive.png";
  if (!fs::is_regular_file(path)) throw NotFoundError("job '" + id + "' has no naive completion (yet)");
  return path;
}

fs::path JobService::reconstruction_path(const std::string& id) {
  std::shared_ptr<Job> job;
  {
    std::lock_guard lock(mutex_);
    job = find(id);
    if (job->info.state != JobState::Done) {
      throw ConflictError("job '" + id + "' is " + to_string(job->info.state) + ", reconstruction needs a finished job");
    }
  }
  const fs::path path = job_dir(id) / "reconstruction.png";
  std::lock_guard sample_lock(job->sample_mutex);
  if (!fs::is_regular_file(path)) write_bytes_atomic(path, encode_png(reconstruct(*bundle_for(*job))));
  return path;
}

JobInfo JobService::wait_for(const std::string& id, std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mutex_);
  const auto job = find(id);
  changed_.wait_for(lock, timeout, [&] { return is_terminal(job->info.state) && !job->running; });
  lock.unlock();
  return get_status(id);
}

// HTTP front end.

namespace {

std::span<const std::uint8_t> as_bytes(const std::string& s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_file(httplib::Response& res, const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  res.status = 200;
  res.set_content(std::move(bytes), "image/png");
}

template <typename F>
httplib::Server::Handler guarded(F&& f) {
  return [f = std::forward<F>(f)](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const NotFoundError& e) {
      send_json(res, 404, {{"error", e.what()}});
    } catch (const ConflictError& e) {
      send_json(res, 409, {{"error", e.what()}});
    } catch (const ValidationError& e) {
      send_json(res, 400, {{"error", e.what()}});
    } catch (const ConfigError& e) {
      send_json(res, 400, {{"error", e.what()}});
    } catch (const DecodeError& e) {
      send_json(res, 400, {{"error", e.what()}});
    } catch (const json::exception& e) {
      send_json(res, 400, {{"error", std::string("bad JSON: ") + e.what()}});
    } catch (const CapacityError& e) {
      send_json(res, 503, {{"error", e.what()}});
    } catch (const std::exception& e) {
      send_json(res, 500, {{"error", e.what()}});
    }
  };
}

}  // namespace

HttpServer::HttpServer(JobService& service) : service_(service), server_(std::make_unique<httplib::Server>()) {
  auto& s = *server_;
  s.Post("/api/jobs", guarded([this](const httplib::Request& req, httplib::Response& res) {
           if (!req.has_file("image") || !req.has_file("mask")) {
             throw ValidationError("multipart fields 'image' and 'mask' are required");
           }
           json overrides = nullptr;
           if (req.has_file("config")) {
             const std::string text = req.get_file_value("config").content;
             if (!text.empty()) overrides = json::parse(text);
           }
           const JobInfo job = service_.create_job(as_bytes(req.get_file_value("image").content),
                                                   as_bytes(req.get_file_value("mask").content), overrides);
           send_json(res, 201, to_json(job));
         }));
  s.Get("/api/jobs", guarded([this](const httplib::Request&, httplib::Response& res) {
          json jobs = json::array();
          for (const auto& job : service_.list_jobs()) jobs.push_back(to_json(job));
          send_json(res, 200, {{"jobs", jobs}});
        }));
  s.Get(R"(/api/jobs/([0-9a-z]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
          int tail = -1;
          if (req.has_param("tail")) tail = std::max(0, std::stoi(req.get_param_value("tail")));
          send_json(res, 200, to_json(service_.get_status(req.matches[1], tail)));
        }));
  s.Post(R"(/api/jobs/([0-9a-z]+)/cancel)", guarded([this](const httplib::Request& req, httplib::Response& res) {
           send_json(res, 200, to_json(service_.cancel_job(req.matches[1])));
         }));
  s.Post(R"(/api/jobs/([0-9a-z]+)/samples)", guarded([this](const httplib::Request& req, httplib::Response& res) {
           const json body = req.body.empty() ? json::object() : json::parse(req.body);
           const auto seed = body.value("seed", std::uint64_t{0});
           const auto mode = body.value("mode", std::string("normal"));
           const int count = body.value("count", 1);
           const auto ids = service_.request_samples(req.matches[1], seed, mode, count);
           json urls = json::array();
           for (const auto& sid : ids) urls.push_back("/api/samples/" + sid);
           send_json(res, 200, {{"sample_ids", ids}, {"urls", urls}});
         }));
  s.Get(R"(/api/samples/([0-9a-z\-]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
          send_file(res, service_.sample_path(req.matches[1]));
        }));
  s.Get(R"(/api/jobs/([0-9a-z]+)/naive)", guarded([this](const httplib::Request& req, httplib::Response& res) {
          send_file(res, service_.naive_path(req.matches[1]));
        }));
  s.Get(R"(/api/jobs/([0-9a-z]+)/reconstruction)",
        guarded([this](const httplib::Request& req, httplib::Response& res) {
          send_file(res, service_.reconstruction_path(req.matches[1]));
        }));
}

HttpServer::~HttpServer() { stop(); }

bool HttpServer::listen(const std::string& host, int port) { return server_->listen(host, port); }

int HttpServer::bind_to_any_port(const std::string& host) { return server_->bind_to_any_port(host); }

bool HttpServer::listen_after_bind() { return server_->listen_after_bind(); }

void HttpServer::stop() {
  if (server_) server_->stop();
}

void HttpServer::wait_until_ready() const { server_->wait_until_ready(); }

}  // namespace holefill
