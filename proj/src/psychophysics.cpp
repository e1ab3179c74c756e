#include "phantasmagoria/psychophysics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>

namespace phantasmagoria {

using nlohmann::json;

std::string_view to_string(Side s) { return s == Side::left ? "left" : "right"; }

std::string_view to_string(Choice c) {
  switch (c) {
    case Choice::left: return "left";
    case Choice::right: return "right";
    case Choice::center: return "center";
    case Choice::unanswered: break;
  }
  return "unanswered";
}

Side parse_side(std::string_view s) {
  if (s == "left") return Side::left;
  if (s == "right") return Side::right;
  throw std::invalid_argument("unknown side '" + std::string(s) + "'");
}

Choice parse_choice(std::string_view s) {
  if (s == "left") return Choice::left;
  if (s == "right") return Choice::right;
  if (s == "center") return Choice::center;
  throw std::invalid_argument("choice must be left, right or center, got '" + std::string(s) + "'");
}

namespace {

Choice choice_from_json(const json& j) {
  const std::string s = j.get<std::string>();
  return s == "unanswered" ? Choice::unanswered : parse_choice(s);
}

std::string default_session_id(std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x5e55'10a1'd000'0001ULL);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(rng()));
  return buf;
}

}  // namespace

std::optional<std::size_t> Session::next_unanswered() const {
  for (std::size_t i = 0; i < trials.size(); ++i)
    if (trials[i].choice == Choice::unanswered) return i;
  return std::nullopt;
}

Session build_session(const std::vector<ExperimentCandidate>& candidates, std::uint64_t seed,
                      std::string session_id, std::string observer_id) {
  if (candidates.empty()) throw std::invalid_argument("build_session: no candidates");
  std::set<std::string> ids;
  for (const auto& c : candidates)
    if (!ids.insert(c.stimulus_id).second)
      throw std::invalid_argument("build_session: duplicate stimulus '" + c.stimulus_id + "'");

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  const std::size_t n = candidates.size();
  std::vector<Side> sides(n, Side::left);
  std::fill(sides.begin(), sides.begin() + static_cast<std::ptrdiff_t>(n / 2), Side::right);
  if (n % 2 == 1 && std::bernoulli_distribution(0.5)(rng)) sides[n / 2] = Side::right;
  std::shuffle(sides.begin(), sides.end(), rng);

  Session s;
  s.session_id = session_id.empty() ? default_session_id(seed) : std::move(session_id);
  s.observer_id = std::move(observer_id);
  s.seed = seed;
  s.trials.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = candidates[order[i]];
    TrialRecord t;
    t.stimulus_id = c.stimulus_id;
    t.method_tag = c.method_tag;
    t.expected_side = sides[i];
    t.flipped = sides[i] != c.native_side;
    s.trials.push_back(std::move(t));
  }
  return s;
}

void record_response(Session& session, std::size_t trial_index, Choice choice, std::int64_t response_ms,
                     std::int64_t timestamp_ms) {
  if (trial_index >= session.trials.size())
    throw std::out_of_range("trial " + std::to_string(trial_index) + " does not exist");
  if (choice == Choice::unanswered) throw std::invalid_argument("choice must be left, right or center");
  auto& t = session.trials[trial_index];
  if (t.choice != Choice::unanswered)
    throw DuplicateResponse("trial " + std::to_string(trial_index) + " already answered");
  t.choice = choice;
  t.response_ms = response_ms;
  t.timestamp_ms = timestamp_ms;
}

SummaryTable summarize(const std::vector<Session>& sessions) {
  SummaryTable table;
  auto& all = table.groups["all"];
  for (const auto& s : sessions) {
    for (std::size_t i = 0; i < s.trials.size(); ++i) {
      const auto& t = s.trials[i];
      if (t.choice == Choice::unanswered)
        throw std::invalid_argument("session " + s.session_id + " has unanswered trial " + std::to_string(i));
      auto& g = table.groups[t.method_tag];
      for (Proportions* p : {&all, &g}) {
        ++p->n;
        if (t.choice == Choice::center)
          ++p->none;
        else if ((t.choice == Choice::left) == (t.expected_side == Side::left))
          ++p->correct;
        else
          ++p->opposite;
      }
    }
  }
  return table;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double inverse_normal_cdf(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("inverse_normal_cdf: p must lie in (0, 1)");
  // Acklam's rational approximation, then Newton steps on erfc.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double lo = 0.02425;
  double x;
  if (p < lo) {
    const double q = std::sqrt(-2 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else if (p > 1 - lo) {
    const double q = std::sqrt(-2 * std::log(1 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  }
  for (int it = 0; it < 3; ++it) {
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2 * M_PI);
    if (pdf <= 0) break;
    x -= (normal_cdf(x) - p) / pdf;
  }
  return x;
}

ThurstoneResult thurstone_case_v(double proportion, int n) {
  if (!(proportion >= 0.0 && proportion <= 1.0)) throw std::domain_error("proportion must lie in [0, 1]");
  if (n < 0) throw std::invalid_argument("trial count must be non-negative");
  ThurstoneResult r;
  r.n = n;
  double p = proportion;
  if (p == 0.0 || p == 1.0) {
    if (n == 0) throw std::domain_error("proportion of 0 or 1 needs a trial count for the boundary correction");
    p = p == 0.0 ? 1.0 / (2.0 * n) : 1.0 - 1.0 / (2.0 * n);
  }
  r.proportion = p;
  r.z = inverse_normal_cdf(p);
  if (n > 0) {
    constexpr double z95 = 1.959963984540054;
    const double k = z95 * z95 / n;
    const double centre = (proportion + k / 2) / (1 + k);
    const double half = z95 * std::sqrt(proportion * (1 - proportion) / n + k / (4.0 * n)) / (1 + k);
    const double clamp_lo = 1.0 / (2.0 * n), clamp_hi = 1.0 - 1.0 / (2.0 * n);
    r.p_low = std::clamp(centre - half, clamp_lo, clamp_hi);
    r.p_high = std::clamp(centre + half, clamp_lo, clamp_hi);
    r.ci_low = inverse_normal_cdf(r.p_low);
    r.ci_high = inverse_normal_cdf(r.p_high);
  } else {
    r.p_low = r.p_high = p;
    r.ci_low = r.ci_high = r.z;
  }
  return r;
}

json to_json(const SummaryTable& table) {
  json j = json::object();
  for (const auto& [name, p] : table.groups)
    j[name] = {{"n", p.n},
               {"opposite", p.p_opposite()},
               {"none", p.p_none()},
               {"correct", p.p_correct()},
               {"counts", {{"opposite", p.opposite}, {"none", p.none}, {"correct", p.correct}}}};
  return j;
}

json analysis_report(const SummaryTable& table) {
  json groups = to_json(table);
  for (const auto& [name, p] : table.groups) {
    if (p.n == 0) continue;
    const auto t = thurstone_case_v(p.p_correct(), p.n);
    groups[name]["thurstone"] = {{"proportion_seen", t.proportion}, {"z", t.z},
                                 {"ci95_proportion", {t.p_low, t.p_high}}, {"ci95_z", {t.ci_low, t.ci_high}}};
  }
  return {{"format", "phantasmagoria-analysis-v1"}, {"groups", groups}};
}

json to_json(const Session& s) {
  json trials = json::array();
  for (const auto& t : s.trials)
    trials.push_back({{"stimulus_id", t.stimulus_id},
                      {"method_tag", t.method_tag},
                      {"expected_side", to_string(t.expected_side)},
                      {"flipped", t.flipped},
                      {"choice", to_string(t.choice)},
                      {"response_ms", t.response_ms},
                      {"timestamp_ms", t.timestamp_ms}});
  return {{"session_id", s.session_id}, {"observer_id", s.observer_id}, {"seed", s.seed}, {"trials", trials}};
}

Session session_from_json(const json& j) {
  Session s;
  s.session_id = j.at("session_id").get<std::string>();
  s.observer_id = j.value("observer_id", std::string{});
  s.seed = j.value("seed", std::uint64_t{0});
  for (const auto& t : j.at("trials")) {
    TrialRecord r;
    r.stimulus_id = t.at("stimulus_id").get<std::string>();
    r.method_tag = t.at("method_tag").get<std::string>();
    r.expected_side = parse_side(t.at("expected_side").get<std::string>());
    r.flipped = t.value("flipped", false);
    r.choice = t.contains("choice") ? choice_from_json(t.at("choice")) : Choice::unanswered;
    r.response_ms = t.value("response_ms", std::int64_t{-1});
    r.timestamp_ms = t.value("timestamp_ms", std::int64_t{-1});
    s.trials.push_back(std::move(r));
  }
  return s;
}

EventLog::EventLog(std::string path) : path_(std::move(path)), out_(path_, std::ios::app) {
  if (!out_) throw std::runtime_error("cannot open event log " + path_);
}

void EventLog::append(const json& event) {
  std::lock_guard lock(mutex_);
  out_ << event.dump() << '\n';
  out_.flush();
  if (!out_) throw std::runtime_error("write to event log " + path_ + " failed");
}

json session_event(const Session& s) {
  Session blank = s;
  for (auto& t : blank.trials) {
    t.choice = Choice::unanswered;
    t.response_ms = t.timestamp_ms = -1;
  }
  return {{"type", "session"}, {"session", to_json(blank)}};
}

json response_event(const std::string& session_id, std::size_t trial_index, const TrialRecord& trial) {
  return {{"type", "response"},   {"session_id", session_id},        {"trial", trial_index},
          {"choice", to_string(trial.choice)}, {"response_ms", trial.response_ms}, {"timestamp_ms", trial.timestamp_ms}};
}

std::vector<Session> replay_event_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open event log " + path);
  std::vector<Session> sessions;
  std::map<std::string, std::size_t> index;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json e;
    try {
      e = json::parse(line);
    } catch (const json::parse_error&) {
      // A torn final line from an interrupted write is skipped.
      if (in.peek() == std::char_traits<char>::eof()) break;
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": malformed event");
    }
    const std::string type = e.at("type").get<std::string>();
    if (type == "session") {
      Session s = session_from_json(e.at("session"));
      if (index.count(s.session_id)) throw std::runtime_error("session " + s.session_id + " logged twice");
      index[s.session_id] = sessions.size();
      sessions.push_back(std::move(s));
    } else if (type == "response") {
      const auto it = index.find(e.at("session_id").get<std::string>());
      if (it == index.end()) throw std::runtime_error(path + ":" + std::to_string(line_no) + ": unknown session");
      record_response(sessions[it->second], e.at("trial").get<std::size_t>(),
                      parse_choice(e.at("choice").get<std::string>()), e.value("response_ms", std::int64_t{-1}),
                      e.value("timestamp_ms", std::int64_t{-1}));
    } else {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": unknown event type '" + type + "'");
    }
  }
  return sessions;
}

}  // namespace phantasmagoria
