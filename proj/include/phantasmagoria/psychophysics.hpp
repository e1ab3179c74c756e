#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace phantasmagoria {

enum class Side { left, right };
enum class Choice { unanswered, left, right, center };

std::string_view to_string(Side s);
std::string_view to_string(Choice c);
Side parse_side(std::string_view s);
/// Accepts left, right or center; anything else throws std::invalid_argument.
Choice parse_choice(std::string_view s);

/// One stimulus offered to the experiment.
struct ExperimentCandidate {
  std::string stimulus_id;
  std::string method_tag;  // solver that produced it
  Side native_side = Side::right;  // side expected lighter in the stored, unflipped image
};

struct TrialRecord {
  std::string stimulus_id;
  std::string method_tag;
  Side expected_side = Side::right;
  bool flipped = false;  // presented mirrored
  Choice choice = Choice::unanswered;
  std::int64_t response_ms = -1;
  std::int64_t timestamp_ms = -1;
};

struct Session {
  std::string session_id;
  std::string observer_id;
  std::uint64_t seed = 0;
  std::vector<TrialRecord> trials;

  std::optional<std::size_t> next_unanswered() const;
  bool complete() const { return !next_unanswered().has_value(); }
};

class DuplicateResponse : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shuffled trial order; expected sides are an exact half/half split
/// (odd counts differ by one) assigned at random, and a trial is presented
/// mirrored whenever its expected side differs from the candidate's native side.
Session build_session(const std::vector<ExperimentCandidate>& candidates, std::uint64_t seed,
                      std::string session_id = {}, std::string observer_id = {});

/// Store a first response. Throws std::out_of_range for an unknown trial,
/// std::invalid_argument for Choice::unanswered and DuplicateResponse when
/// the trial already holds a choice.
void record_response(Session& session, std::size_t trial_index, Choice choice, std::int64_t response_ms = -1,
                     std::int64_t timestamp_ms = -1);

struct Proportions {
  int n = 0;
  int opposite = 0;
  int none = 0;
  int correct = 0;
  double p_opposite() const { return n ? static_cast<double>(opposite) / n : 0.0; }
  double p_none() const { return n ? static_cast<double>(none) / n : 0.0; }
  double p_correct() const { return n ? static_cast<double>(correct) / n : 0.0; }
};

/// Group "all" plus one group per method tag.
struct SummaryTable {
  std::map<std::string, Proportions> groups;
};

/// Throws std::invalid_argument when any trial is unanswered.
SummaryTable summarize(const std::vector<Session>& sessions);

/// Inverse standard-normal CDF.
double inverse_normal_cdf(double p);
double normal_cdf(double z);

struct ThurstoneResult {
  double proportion = 0.0;  // after boundary correction
  double z = 0.0;
  double p_low = 0.0;  // Wilson 95% interval on the raw proportion
  double p_high = 0.0;
  double ci_low = 0.0;  // the same interval through the inverse CDF
  double ci_high = 0.0;
  int n = 0;
};

/// z = inverse CDF of the proportion of trials where the illusion was seen.
/// Proportions of 0 or 1 are moved to 1/(2N) or 1 - 1/(2N); with n == 0 they throw.
ThurstoneResult thurstone_case_v(double proportion, int n = 0);

nlohmann::json to_json(const SummaryTable& table);
/// Summary plus Thurstone values per group.
nlohmann::json analysis_report(const SummaryTable& table);

nlohmann::json to_json(const Session& s);
Session session_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Append-only event log

/// Line-delimited events: {"type":"session",...} and {"type":"response",...}.
/// Safe to share between threads.
class EventLog {
 public:
  explicit EventLog(std::string path);
  /// Appends one line and flushes it before returning.
  void append(const nlohmann::json& event);
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ofstream out_;
  std::mutex mutex_;
};

nlohmann::json session_event(const Session& s);
nlohmann::json response_event(const std::string& session_id, std::size_t trial_index, const TrialRecord& trial);

/// Rebuild every session by replaying a log file.
std::vector<Session> replay_event_log(const std::string& path);

}  // namespace phantasmagoria
