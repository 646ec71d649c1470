#pragma once

#include "vstpr/config.hpp"
#include "vstpr/io.hpp"
#include "vstpr/workflows.hpp"

#include <chrono>
#include <condition_variable>
#include <functional>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace httplib {
class Server;
}

namespace vstpr {

struct HistoryEntry {
  std::uint64_t version = 0;
  Vec3 currents = Vec3::Zero();
  double omega_L = 0; // rad/s
  double field = 0;   // G
  std::string status;
  std::string source; // "currents" | "pulse" | "null"
  double timestamp = 0; // s since the service started
};

// Immutable view handed to readers.
struct SessionSnapshot {
  std::uint64_t version = 0;     // last accepted mutation
  std::uint64_t completed = 0;   // version the frames/analysis belong to
  bool pending = false;
  ExperimentConfig config;
  std::shared_ptr<const FrameSet> frames;
  std::optional<StripeFitResult> analysis;
  std::optional<CalibrationResult> calibration;
  std::vector<HistoryEntry> history;
  std::string null_state; // "", "running", "done", "failed"
  std::optional<NullResult> null_result;
  std::string last_error;
};

struct ServiceOptions {
  // above this atom count mutations return 202 and complete in the background
  std::size_t sync_atom_limit = 100000;
  bool calibrate = true;
};

class Service {
public:
  explicit Service(ExperimentConfig cfg, ServiceOptions opt = {},
                   std::optional<CalibrationResult> cal = std::nullopt);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  void install(httplib::Server& server);
  std::shared_ptr<const SessionSnapshot> snapshot() const;

  // Applies `edit` to the latest accepted configuration and validates it; returns
  // the assigned version. Waits for the recompute unless the run is asynchronous.
  std::uint64_t submit(const std::function<void(ExperimentConfig&)>& edit, const std::string& source,
                       bool* async = nullptr);
  std::uint64_t start_null(bool* async = nullptr);
  void wait_idle();

private:
  struct Job {
    std::uint64_t version = 0;
    ExperimentConfig config;
    std::string source;
    bool null_run = false;
  };

  void worker();
  void run_job(const Job& job);
  void publish(const std::function<void(SessionSnapshot&)>& edit);
  double now() const;

  ServiceOptions opt_;
  mutable std::mutex snap_mu_;
  std::shared_ptr<const SessionSnapshot> snap_;

  std::mutex job_mu_; // serializes mutations
  std::condition_variable job_cv_, done_cv_;
  std::optional<Job> queued_;
  bool busy_ = false;
  bool stop_ = false;
  std::uint64_t next_version_ = 0;
  std::uint64_t finished_version_ = 0;

  std::unique_ptr<Simulator> sim_;
  std::optional<CalibrationResult> cal_;
  std::chrono::steady_clock::time_point t0_;
  std::thread thread_;
};

// Request body helpers; throw InvalidConfig naming the bad field.
Vec3 parse_currents_body(const std::string& body);
PulseConfig apply_pulse_body(const PulseConfig& base, const std::string& body);

Json state_json(const SessionSnapshot& s);
Json history_json(const SessionSnapshot& s);
Json null_json(const NullResult& r);

} // namespace vstpr
