#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stop_token>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "holefill/bundle.hpp"
#include "holefill/config.hpp"
#include "holefill/trainer.hpp"

namespace httplib {
class Server;
}

namespace holefill {

inline constexpr const char* kStoreEnvVar = "HOLEFILL_STORE";

// $HOLEFILL_STORE, or ./holefill-store.
std::filesystem::path default_store_root();

enum class JobState { Queued, Naive, Training, Done, Failed, Cancelled };

std::string to_string(JobState s);
JobState parse_job_state(const std::string& s);
bool is_terminal(JobState s);

struct ServiceOptions {
  std::filesystem::path store_root;
  int workers = 1;
  int max_queue = 16;
  int progress_tail = 20;  // records returned by get_status by default
  std::string default_preset = "full";
  // Config file with schedule defaults, applied on top of the preset.
  std::filesystem::path defaults_file;
};

struct JobInfo {
  std::string id;
  JobState state = JobState::Queued;
  int scale = -1;
  int iteration = -1;
  std::string created_at;
  std::string updated_at;
  nlohmann::json config;
  std::filesystem::path bundle_path;
  std::string error;
  std::vector<ProgressRecord> progress;  // newest last
};

nlohmann::json to_json(const JobInfo& job);

/// Job store plus a training queue. Jobs live in <root>/jobs/<id>/ with the
/// uploaded inputs, job.json (written atomically), bundle/ and samples/.
class JobService {
 public:
  explicit JobService(ServiceOptions options);
  ~JobService();
  JobService(const JobService&) = delete;
  JobService& operator=(const JobService&) = delete;

  JobInfo create_job(std::span<const std::uint8_t> image_png, std::span<const std::uint8_t> mask_png,
                     const nlohmann::json& overrides = nullptr);
  JobInfo get_status(const std::string& id, int tail = -1) const;
  std::vector<JobInfo> list_jobs() const;
  JobInfo cancel_job(const std::string& id);

  // Sample ids are "<job>-<mode>-s<seed>-c<count>-<k>"; repeating a request
  // returns the same ids and leaves the stored PNGs untouched.
  std::vector<std::string> request_samples(const std::string& id, std::uint64_t seed, const std::string& mode, int count);
  std::filesystem::path sample_path(const std::string& sample_id) const;
  std::filesystem::path naive_path(const std::string& id) const;
  std::filesystem::path reconstruction_path(const std::string& id);

  // Blocks until the job reaches a terminal state or the timeout passes.
  JobInfo wait_for(const std::string& id, std::chrono::milliseconds timeout) const;

  const ServiceOptions& options() const { return options_; }

 private:
  struct Job;

  std::filesystem::path job_dir(const std::string& id) const;
  std::shared_ptr<Job> find(const std::string& id) const;
  void persist(const Job& job) const;
  void reindex();
  void worker_loop(std::stop_token stop);
  void run_job(const std::shared_ptr<Job>& job);
  std::shared_ptr<const ModelBundle> bundle_for(Job& job);
  TrainConfig base_config() const;

  ServiceOptions options_;
  mutable std::mutex mutex_;
  mutable std::condition_variable changed_;
  std::map<std::string, std::shared_ptr<Job>> jobs_;
  std::deque<std::string> queue_;
  std::vector<std::jthread> workers_;
};

/// HTTP front end: POST /api/jobs, GET /api/jobs/{id},
/// POST /api/jobs/{id}/cancel, POST /api/jobs/{id}/samples,
/// GET /api/samples/{sid}, GET /api/jobs/{id}/naive,
/// GET /api/jobs/{id}/reconstruction. JSON bodies; errors are
/// {"error": message} with 400/404/409/503/500.
class HttpServer {
 public:
  explicit HttpServer(JobService& service);
  ~HttpServer();
  bool listen(const std::string& host, int port);
  int bind_to_any_port(const std::string& host);
  bool listen_after_bind();
  void stop();
  void wait_until_ready() const;

 private:
  JobService& service_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace holefill
