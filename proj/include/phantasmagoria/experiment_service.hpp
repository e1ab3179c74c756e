#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "phantasmagoria/psychophysics.hpp"

namespace phantasmagoria {

/// A stimulus the service can present, with its PNG on disk.
struct ServedStimulus {
  ExperimentCandidate candidate;
  std::filesystem::path file;
};

/// Read an exported candidate directory (manifest.json). Stimulus ids are
/// "<method>/<candidate id>"; the native side follows the manifest's sign.
std::vector<ServedStimulus> load_candidate_dir(const std::filesystem::path& dir);

struct ExperimentServiceConfig {
  std::vector<ServedStimulus> stimuli;
  std::filesystem::path event_log;   // replayed on start, then appended to
  std::filesystem::path static_dir;  // optional client bundle served at "/"
  std::string admin_token;           // required by the results endpoint; empty disables it
  std::uint64_t seed = 1;            // base seed for session randomization
};

/// Observer-facing and admin endpoints under /api/v1:
///   POST /sessions                        {"observer_id"?, "seed"?} -> session_id, trial_count
///   GET  /sessions/{sid}                  progress and next_unanswered
///   GET  /sessions/{sid}/trials/{i}       trial metadata and stimulus URL
///   GET  /sessions/{sid}/trials/{i}/stimulus.png
///   POST /sessions/{sid}/trials/{i}/response  {"choice", "response_ms"?}
///   GET  /admin/results                   header X-Admin-Token
/// Responses are appended to the event log before they are acknowledged.
class ExperimentService {
 public:
  explicit ExperimentService(ExperimentServiceConfig config);
  ~ExperimentService();
  ExperimentService(const ExperimentService&) = delete;
  ExperimentService& operator=(const ExperimentService&) = delete;

  /// Bind; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Serve until stop(). Requires bind().
  void run();
  void stop();

  // Direct access, used by the HTTP handlers and by tests.
  struct Reply {
    int status = 200;
    nlohmann::json body;
  };
  Reply create_session(const nlohmann::json& request);
  Reply session_status(const std::string& session_id) const;
  Reply trial(const std::string& session_id, std::size_t index) const;
  Reply respond(const std::string& session_id, std::size_t index, const nlohmann::json& request);
  Reply results(const std::string& token) const;
  /// PNG bytes as presented (mirrored when the trial is flipped); empty when unknown.
  std::vector<std::uint8_t> stimulus_png(const std::string& session_id, std::size_t index) const;

  std::size_t session_count() const;
  std::vector<Session> sessions() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace phantasmagoria
