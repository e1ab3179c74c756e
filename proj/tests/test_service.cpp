#include <doctest.h>

#include <filesystem>
#include <functional>
#include <random>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "phantasmagoria/experiment_service.hpp"
#include "phantasmagoria/png_io.hpp"

using namespace phantasmagoria;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Fixture {
  fs::path root;
  std::vector<ServedStimulus> stimuli;

  explicit Fixture(const std::string& name, int per_method = 50) : root(fs::temp_directory_path() / name) {
    fs::remove_all(root);
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (const char* method : {"odog", "restorenet"}) {
      const fs::path dir = root / method;
      fs::create_directories(dir);
      json m = {{"format", "phantasmagoria-candidates-v1"}, {"method", method}, {"sign", "right_minus_left"}};
      for (int i = 0; i < per_method; ++i) {
        Image img(8, 8, 1);
        for (double& v : img.data()) v = u(rng);
        char id[32];
        std::snprintf(id, sizeof id, "candidate_%03d", i);
        write_png(dir / (std::string(id) + ".png"), img);
        m["candidates"].push_back({{"id", id}, {"file", std::string(id) + ".png"}});
      }
      std::ofstream(dir / "manifest.json") << m.dump();
      for (auto& s : load_candidate_dir(dir)) stimuli.push_back(std::move(s));
    }
  }
  ~Fixture() { fs::remove_all(root); }

  ExperimentServiceConfig config(const std::string& token = "secret") const {
    return {stimuli, root / "events.jsonl", {}, token, 3};
  }
};

struct Running {
  ExperimentService service;
  int port;
  std::thread thread;
  explicit Running(ExperimentServiceConfig c) : service(std::move(c)), port(service.bind("127.0.0.1", 0)) {
    thread = std::thread([this] { service.run(); });
  }
  ~Running() {
    service.stop();
    thread.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_connection_timeout(5);
    return c;
  }
};

// No observer-facing payload may carry the expected side, whatever it is called.
bool leaks_ground_truth(const json& j) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items())
      if (k == "expected_side" || k == "flipped" || k == "native_side" || k == "method" || k == "method_tag" ||
          k == "stimulus_id" || leaks_ground_truth(v))
        return true;
  } else if (j.is_array()) {
    for (const auto& v : j)
      if (leaks_ground_truth(v)) return true;
  }
  return false;
}

json body_of(const httplib::Result& r) {
  REQUIRE(r);
  return json::parse(r->body);
}

}  // namespace

TEST_SUITE("service") {
  TEST_CASE("candidate directory manifest") {
    Fixture f("phantasmagoria_svc_manifest", 3);
    REQUIRE(f.stimuli.size() == 6u);
    CHECK(f.stimuli[0].candidate.stimulus_id == "odog/candidate_000");
    CHECK(f.stimuli[4].candidate.method_tag == "restorenet");
    CHECK(f.stimuli[0].candidate.native_side == Side::right);
    CHECK(fs::exists(f.stimuli[5].file));
  }

  TEST_CASE("scripted 100-trial session over HTTP") {
    Fixture f("phantasmagoria_svc_scripted");
    Running srv(f.config());
    auto cli = srv.client();

    const auto created = cli.Post("/api/v1/sessions", R"({"observer_id":"o1"})", "application/json");
    REQUIRE(created);
    CHECK(created->status == 201);
    const json c = json::parse(created->body);
    CHECK_FALSE(leaks_ground_truth(c));
    const std::string sid = c.at("session_id");
    REQUIRE(c.at("trial_count") == 100);

    int posted = 0;
    std::mt19937_64 rng(1);
    const char* choices[] = {"left", "right", "center"};
    std::size_t i = 0;
    while (true) {
      const json st = body_of(cli.Get("/api/v1/sessions/" + sid));
      CHECK_FALSE(leaks_ground_truth(st));
      if (st.at("next_unanswered").is_null()) break;
      i = st.at("next_unanswered");
      const json t = body_of(cli.Get("/api/v1/sessions/" + sid + "/trials/" + std::to_string(i)));
      CHECK_FALSE(leaks_ground_truth(t));
      const auto png = cli.Get(t.at("stimulus_url").get<std::string>());
      REQUIRE(png);
      CHECK(png->status == 200);
      CHECK(png->get_header_value("Content-Type") == "image/png");
      const json body = {{"choice", choices[rng() % 3]}, {"response_ms", 700}};
      const auto r = cli.Post(t.at("response_url").get<std::string>(), body.dump(), "application/json");
      REQUIRE(r);
      CHECK(r->status == 200);
      CHECK_FALSE(leaks_ground_truth(json::parse(r->body)));
      ++posted;
      REQUIRE(posted <= 100);
    }
    CHECK(posted == 100);
    CHECK(srv.service.sessions().at(0).complete());
  }

  TEST_CASE("resume after a reload starts at the first unanswered trial") {
    Fixture f("phantasmagoria_svc_resume", 5);
    std::string sid;
    {
      Running srv(f.config());
      auto cli = srv.client();
      sid = body_of(cli.Post("/api/v1/sessions", "{}", "application/json")).at("session_id");
      for (int i = 0; i < 4; ++i)
        cli.Post("/api/v1/sessions/" + sid + "/trials/" + std::to_string(i) + "/response", R"({"choice":"left"})",
                 "application/json");
      CHECK(body_of(cli.Get("/api/v1/sessions/" + sid)).at("next_unanswered") == 4);
    }
    // service restart: state comes back from the event log
    Running again(f.config());
    auto cli = again.client();
    const json st = body_of(cli.Get("/api/v1/sessions/" + sid));
    CHECK(st.at("answered") == 4);
    CHECK(st.at("next_unanswered") == 4);
    const json t3 = body_of(cli.Get("/api/v1/sessions/" + sid + "/trials/3"));
    CHECK(t3.at("answered") == true);
    CHECK(t3.at("choice") == "left");
  }

  TEST_CASE("response validation and idempotent resubmission") {
    Fixture f("phantasmagoria_svc_validate", 2);
    ExperimentService svc(f.config());
    const std::string sid = svc.create_session({}).body.at("session_id");
    CHECK(svc.respond(sid, 0, {{"choice", "up"}}).status == 400);
    CHECK(svc.respond(sid, 0, json::object()).status == 400);
    CHECK(svc.respond("nope", 0, {{"choice", "left"}}).status == 404);
    CHECK(svc.respond(sid, 99, {{"choice", "left"}}).status == 404);
    const auto first = svc.respond(sid, 0, {{"choice", "center"}});
    CHECK(first.status == 200);
    CHECK(first.body.at("duplicate") == false);
    const auto again = svc.respond(sid, 0, {{"choice", "center"}});
    CHECK(again.status == 200);
    CHECK(again.body.at("duplicate") == true);
    CHECK(svc.respond(sid, 0, {{"choice", "left"}}).status == 409);
    CHECK(svc.sessions()[0].trials[0].choice == Choice::center);
    CHECK(svc.trial(sid, 4).status == 404);
    CHECK(svc.session_status("nope").status == 404);

    // one logged response despite the resubmission
    int responses = 0;
    std::ifstream in(f.root / "events.jsonl");
    for (std::string line; std::getline(in, line);) responses += json::parse(line).at("type") == "response";
    CHECK(responses == 1);
  }

  TEST_CASE("malformed requests over HTTP") {
    Fixture f("phantasmagoria_svc_malformed", 2);
    Running srv(f.config());
    auto cli = srv.client();
    const std::string sid = body_of(cli.Post("/api/v1/sessions", "", "application/json")).at("session_id");
    const auto bad = cli.Post("/api/v1/sessions/" + sid + "/trials/0/response", "{not json", "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 400);
    const auto missing = cli.Get("/api/v1/sessions/" + sid + "/trials/17/stimulus.png");
    REQUIRE(missing);
    CHECK(missing->status == 404);
    const auto huge = cli.Get("/api/v1/sessions/" + sid + "/trials/99999999999999999999999");
    REQUIRE(huge);
    CHECK(huge->status == 404);
  }

  TEST_CASE("flipped trials are served mirrored") {
    Fixture f("phantasmagoria_svc_mirror", 4);
    ExperimentService svc(f.config());
    const std::string sid = svc.create_session({{"seed", 5}}).body.at("session_id");
    const Session s = svc.sessions()[0];
    int flipped = 0, plain = 0;
    for (std::size_t i = 0; i < s.trials.size(); ++i) {
      const auto& t = s.trials[i];
      const auto it = std::find_if(f.stimuli.begin(), f.stimuli.end(),
                                   [&](const ServedStimulus& x) { return x.candidate.stimulus_id == t.stimulus_id; });
      REQUIRE(it != f.stimuli.end());
      const Image original = read_image(it->file);
      const Image served = decode_image(svc.stimulus_png(sid, i));
      const Image expect = t.flipped ? mirror_horizontal(original) : original;
      CHECK(std::equal(served.data().begin(), served.data().end(), expect.data().begin()));
      (t.flipped ? flipped : plain)++;
    }
    CHECK(flipped == 4);
    CHECK(plain == 4);
  }

  TEST_CASE("admin results are token scoped and skip incomplete sessions") {
    Fixture f("phantasmagoria_svc_admin", 2);
    Running srv(f.config("tok"));
    auto cli = srv.client();
    const auto no = cli.Get("/api/v1/admin/results");
    REQUIRE(no);
    CHECK(no->status == 401);
    const auto wrong = cli.Get("/api/v1/admin/results", {{"X-Admin-Token", "nope"}});
    REQUIRE(wrong);
    CHECK(wrong->status == 401);

    const std::string done = body_of(cli.Post("/api/v1/sessions", "{}", "application/json")).at("session_id");
    body_of(cli.Post("/api/v1/sessions", "{}", "application/json"));
    for (int i = 0; i < 4; ++i)
      cli.Post("/api/v1/sessions/" + done + "/trials/" + std::to_string(i) + "/response", R"({"choice":"center"})",
               "application/json");
    const auto ok = cli.Get("/api/v1/admin/results", {{"X-Admin-Token", "tok"}});
    REQUIRE(ok);
    CHECK(ok->status == 200);
    const json r = json::parse(ok->body);
    CHECK(r.at("complete_sessions") == 1);
    CHECK(r.at("incomplete_sessions") == 1);
    CHECK(r.at("groups").at("all").at("n") == 4);
    CHECK(r.at("groups").at("all").contains("thurstone"));

    ExperimentService disabled(f.config(""));
    CHECK(disabled.results("").status == 403);
  }

  TEST_CASE("concurrent observers stay isolated") {
    Fixture f("phantasmagoria_svc_concurrent", 10);
    Running srv(f.config());
    const int observers = 4;
    std::vector<std::string> ids(observers);
    std::vector<std::thread> workers;
    for (int o = 0; o < observers; ++o)
      workers.emplace_back([&, o] {
        auto cli = srv.client();
        const auto r = cli.Post("/api/v1/sessions", json{{"observer_id", "o" + std::to_string(o)}}.dump(),
                                "application/json");
        if (!r) return;
        ids[o] = json::parse(r->body).at("session_id");
        for (int i = 0; i < 20; ++i)
          cli.Post("/api/v1/sessions/" + ids[o] + "/trials/" + std::to_string(i) + "/response",
                   json{{"choice", o % 2 ? "left" : "right"}}.dump(), "application/json");
      });
    for (auto& w : workers) w.join();
    const auto sessions = srv.service.sessions();
    REQUIRE(sessions.size() == static_cast<std::size_t>(observers));
    for (const auto& s : sessions) {
      CHECK(s.complete());
      const Choice want = s.observer_id == "o1" || s.observer_id == "o3" ? Choice::left : Choice::right;
      for (const auto& t : s.trials) CHECK(t.choice == want);
    }
    CHECK(replay_event_log((f.root / "events.jsonl").string()).size() == static_cast<std::size_t>(observers));
  }

  TEST_CASE("construction errors") {
    Fixture f("phantasmagoria_svc_errors", 1);
    ExperimentServiceConfig c = f.config();
    c.stimuli.push_back(c.stimuli[0]);
    CHECK_THROWS_AS(ExperimentService{c}, std::invalid_argument);
    c = f.config();
    c.stimuli.clear();
    CHECK_THROWS_AS(ExperimentService{c}, std::invalid_argument);
    c = f.config();
    c.event_log.clear();
    CHECK_THROWS_AS(ExperimentService{c}, std::invalid_argument);
  }
}
