#include "phantasmagoria/experiment_service.hpp"

#include <atomic>
#include <chrono>
#include <map>
#include <mutex>
#include <shared_mutex>

#include <httplib.h>

#include "phantasmagoria/png_io.hpp"

namespace phantasmagoria {

using nlohmann::json;

std::vector<ServedStimulus> load_candidate_dir(const std::filesystem::path& dir) {
  const auto bytes = read_file_bytes(dir / "manifest.json");
  const json m = json::parse(bytes.begin(), bytes.end());
  if (m.value("format", std::string{}) != "phantasmagoria-candidates-v1")
    throw std::invalid_argument(dir.string() + ": not a candidate export");
  const std::string method = m.at("method").get<std::string>();
  std::vector<ServedStimulus> out;
  for (const auto& c : m.at("candidates")) {
    ServedStimulus s;
    s.candidate.stimulus_id = method + "/" + c.at("id").get<std::string>();
    s.candidate.method_tag = method;
    const std::string sign = c.value("sign", m.value("sign", std::string{"right_minus_left"}));
    s.candidate.native_side = sign == "left_minus_right" ? Side::left : Side::right;
    s.file = dir / c.at("file").get<std::string>();
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

json error_body(const std::string& message) { return {{"error", message}}; }

}  // namespace

struct ExperimentService::Impl {
  struct Entry {
    std::mutex write;                     // serializes responses to one session
    std::shared_ptr<const Session> snap;  // accessed with atomic_load / atomic_store
    std::shared_ptr<const Session> load() const { return std::atomic_load(&snap); }
  };

  ExperimentServiceConfig config;
  std::vector<ExperimentCandidate> candidates;
  std::map<std::string, std::filesystem::path> files;
  std::unique_ptr<EventLog> log;
  mutable std::shared_mutex sessions_mutex;
  std::map<std::string, std::shared_ptr<Entry>> sessions;
  std::vector<std::string> creation_order;
  std::mutex create_mutex;
  std::uint64_t created = 0;
  httplib::Server server;
  bool bound = false;

  std::shared_ptr<Entry> find(const std::string& id) const {
    std::shared_lock lock(sessions_mutex);
    const auto it = sessions.find(id);
    return it == sessions.end() ? nullptr : it->second;
  }

  void add(Session s) {
    auto e = std::make_shared<Entry>();
    const std::string id = s.session_id;
    std::atomic_store(&e->snap, std::shared_ptr<const Session>(std::make_shared<Session>(std::move(s))));
    std::unique_lock lock(sessions_mutex);
    sessions[id] = e;
    creation_order.push_back(id);
  }
};

ExperimentService::ExperimentService(ExperimentServiceConfig config) : impl_(std::make_unique<Impl>()) {
  auto& m = *impl_;
  m.config = std::move(config);
  if (m.config.stimuli.empty()) throw std::invalid_argument("experiment service: no stimuli");
  for (const auto& s : m.config.stimuli) {
    if (!m.files.emplace(s.candidate.stimulus_id, s.file).second)
      throw std::invalid_argument("duplicate stimulus id " + s.candidate.stimulus_id);
    m.candidates.push_back(s.candidate);
  }
  if (m.config.event_log.empty()) throw std::invalid_argument("experiment service: event log path required");
  if (std::filesystem::exists(m.config.event_log))
    for (auto& s : replay_event_log(m.config.event_log.string())) m.add(std::move(s));
  m.created = m.creation_order.size();
  m.log = std::make_unique<EventLog>(m.config.event_log.string());
}

ExperimentService::~ExperimentService() { stop(); }

ExperimentService::Reply ExperimentService::create_session(const json& request_in) {
  auto& m = *impl_;
  const json request = request_in.is_null() ? json::object() : request_in;
  if (!request.is_object()) return {400, error_body("request must be a JSON object")};
  std::lock_guard lock(m.create_mutex);
  const std::uint64_t seed =
      request.contains("seed") ? request.at("seed").get<std::uint64_t>() : m.config.seed * 1000003ULL + m.created;
  Session s = build_session(m.candidates, seed, {}, request.value("observer_id", std::string{}));
  while (m.find(s.session_id)) s.session_id += "x";
  const json event = session_event(s);
  m.log->append(event);
  ++m.created;
  const std::string id = s.session_id;
  const std::size_t n = s.trials.size();
  m.add(std::move(s));
  return {201, {{"session_id", id}, {"trial_count", n}}};
}

ExperimentService::Reply ExperimentService::session_status(const std::string& session_id) const {
  const auto e = impl_->find(session_id);
  if (!e) return {404, error_body("unknown session")};
  const auto s = e->load();
  std::size_t answered = 0;
  for (const auto& t : s->trials) answered += t.choice != Choice::unanswered;
  json body = {{"session_id", s->session_id},
               {"trial_count", s->trials.size()},
               {"answered", answered},
               {"complete", answered == s->trials.size()}};
  const auto next = s->next_unanswered();
  body["next_unanswered"] = next ? json(*next) : json(nullptr);
  return {200, body};
}

ExperimentService::Reply ExperimentService::trial(const std::string& session_id, std::size_t index) const {
  const auto e = impl_->find(session_id);
  if (!e) return {404, error_body("unknown session")};
  const auto s = e->load();
  if (index >= s->trials.size()) return {404, error_body("unknown trial")};
  const auto& t = s->trials[index];
  const std::string base = "/api/v1/sessions/" + session_id + "/trials/" + std::to_string(index);
  json body = {{"session_id", session_id},
               {"index", index},
               {"trial_count", s->trials.size()},
               {"stimulus_url", base + "/stimulus.png"},
               {"response_url", base + "/response"},
               {"answered", t.choice != Choice::unanswered}};
  if (t.choice != Choice::unanswered) body["choice"] = to_string(t.choice);
  return {200, body};
}

ExperimentService::Reply ExperimentService::respond(const std::string& session_id, std::size_t index,
                                                    const json& request) {
  const auto e = impl_->find(session_id);
  if (!e) return {404, error_body("unknown session")};
  Choice choice;
  try {
    choice = parse_choice(request.at("choice").get<std::string>());
  } catch (const std::exception&) {
    return {400, error_body("choice must be one of left, right, center")};
  }
  const std::int64_t rt = request.contains("response_ms") && request["response_ms"].is_number_integer()
                              ? request["response_ms"].get<std::int64_t>()
                              : -1;

  std::lock_guard lock(e->write);
  const auto current = e->load();
  if (index >= current->trials.size()) return {404, error_body("unknown trial")};
  const auto& existing = current->trials[index];
  if (existing.choice != Choice::unanswered) {
    // A resubmission of the stored answer is acknowledged again.
    if (existing.choice == choice) return {200, {{"index", index}, {"choice", to_string(choice)}, {"duplicate", true}}};
    return {409, error_body("trial already answered")};
  }
  auto next = std::make_shared<Session>(*current);
  record_response(*next, index, choice, rt, now_ms());
  impl_->log->append(response_event(session_id, index, next->trials[index]));
  std::atomic_store(&e->snap, std::shared_ptr<const Session>(next));
  const auto nu = next->next_unanswered();
  return {200,
          {{"index", index},
           {"choice", to_string(choice)},
           {"duplicate", false},
           {"next_unanswered", nu ? json(*nu) : json(nullptr)}}};
}

ExperimentService::Reply ExperimentService::results(const std::string& token) const {
  if (impl_->config.admin_token.empty()) return {403, error_body("results endpoint disabled")};
  if (token != impl_->config.admin_token) return {401, error_body("admin token required")};
  std::vector<Session> done;
  std::size_t incomplete = 0;
  for (const auto& s : sessions()) {
    if (s.complete())
      done.push_back(s);
    else
      ++incomplete;
  }
  json body = analysis_report(summarize(done));
  body["complete_sessions"] = done.size();
  body["incomplete_sessions"] = incomplete;
  return {200, body};
}

std::vector<std::uint8_t> ExperimentService::stimulus_png(const std::string& session_id, std::size_t index) const {
  const auto e = impl_->find(session_id);
  if (!e) return {};
  const auto s = e->load();
  if (index >= s->trials.size()) return {};
  const auto& t = s->trials[index];
  const auto it = impl_->files.find(t.stimulus_id);
  if (it == impl_->files.end()) return {};
  if (!t.flipped) return read_file_bytes(it->second);
  return encode_png(mirror_horizontal(read_image(it->second)));
}

std::size_t ExperimentService::session_count() const {
  std::shared_lock lock(impl_->sessions_mutex);
  return impl_->sessions.size();
}

std::vector<Session> ExperimentService::sessions() const {
  std::vector<std::shared_ptr<Impl::Entry>> entries;
  {
    std::shared_lock lock(impl_->sessions_mutex);
    for (const auto& id : impl_->creation_order) entries.push_back(impl_->sessions.at(id));
  }
  std::vector<Session> out;
  for (const auto& e : entries) out.push_back(*e->load());
  return out;
}

int ExperimentService::bind(const std::string& host, int port) {
  auto& m = *impl_;
  auto& srv = m.server;
  auto send = [](httplib::Response& res, const Reply& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  auto parse_body = [](const httplib::Request& req, json& out) {
    if (req.body.empty()) {
      out = json::object();
      return true;
    }
    out = json::parse(req.body, nullptr, false);
    return !out.is_discarded() && out.is_object();
  };
  auto index_of = [](const std::string& s, std::size_t& out) {
    try {
      out = std::stoul(s);
      return true;
    } catch (const std::exception&) {
      return false;
    }
  };

  srv.Post("/api/v1/sessions", [=, this](const httplib::Request& req, httplib::Response& res) {
    json body;
    if (!parse_body(req, body)) return send(res, {400, error_body("malformed JSON")});
    try {
      send(res, create_session(body));
    } catch (const std::exception& ex) {
      send(res, {400, error_body(ex.what())});
    }
  });
  srv.Get(R"(/api/v1/sessions/([A-Za-z0-9_-]+))", [=, this](const httplib::Request& req, httplib::Response& res) {
    send(res, session_status(req.matches[1]));
  });
  srv.Get(R"(/api/v1/sessions/([A-Za-z0-9_-]+)/trials/(\d+))",
          [=, this](const httplib::Request& req, httplib::Response& res) {
            std::size_t i;
            if (!index_of(req.matches[2], i)) return send(res, {404, error_body("unknown trial")});
            send(res, trial(req.matches[1], i));
          });
  srv.Get(R"(/api/v1/sessions/([A-Za-z0-9_-]+)/trials/(\d+)/stimulus\.png)",
          [=, this](const httplib::Request& req, httplib::Response& res) {
            std::size_t i;
            if (!index_of(req.matches[2], i)) return send(res, {404, error_body("unknown trial")});
            const auto png = stimulus_png(req.matches[1], i);
            if (png.empty()) return send(res, {404, error_body("unknown trial")});
            res.set_header("Cache-Control", "no-store");
            res.set_content(std::string(png.begin(), png.end()), "image/png");
          });
  srv.Post(R"(/api/v1/sessions/([A-Za-z0-9_-]+)/trials/(\d+)/response)",
           [=, this](const httplib::Request& req, httplib::Response& res) {
             std::size_t i;
             if (!index_of(req.matches[2], i)) return send(res, {404, error_body("unknown trial")});
             json body;
             if (!parse_body(req, body)) return send(res, {400, error_body("malformed JSON")});
             try {
               send(res, respond(req.matches[1], i, body));
             } catch (const std::exception& ex) {
               send(res, {500, error_body(ex.what())});
             }
           });
  srv.Get("/api/v1/admin/results", [=, this](const httplib::Request& req, httplib::Response& res) {
    send(res, results(req.get_header_value("X-Admin-Token")));
  });
  if (!m.config.static_dir.empty()) {
    if (!srv.set_mount_point("/", m.config.static_dir.string()))
      throw std::invalid_argument("static directory " + m.config.static_dir.string() + " not found");
  }

  int bound_port = port;
  if (port == 0) {
    bound_port = srv.bind_to_any_port(host);
  } else if (!srv.bind_to_port(host, port)) {
    bound_port = -1;
  }
  if (bound_port < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  m.bound = true;
  return bound_port;
}

void ExperimentService::run() {
  if (!impl_->bound) throw std::logic_error("ExperimentService::run before bind");
  impl_->server.listen_after_bind();
}

void ExperimentService::stop() {
  if (impl_ && impl_->bound) impl_->server.stop();
}

}  // namespace phantasmagoria
