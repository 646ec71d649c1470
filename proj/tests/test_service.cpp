#include "vstpr/errors.hpp"
#include "vstpr/service.hpp"

#include <doctest.h>
#include <httplib.h>

#include <thread>

using namespace vstpr;
using doctest::Approx;

namespace {

ExperimentConfig small_config(std::size_t atoms = 20000) {
  ExperimentConfig c;
  c.ensemble.atom_count = atoms;
  return c;
}

ServiceOptions no_calibration() {
  ServiceOptions o;
  o.calibrate = false;
  return o;
}

// Service behind a real HTTP server on an ephemeral port.
struct Harness {
  Service svc;
  httplib::Server server;
  std::thread thread;
  int port = 0;

  explicit Harness(ExperimentConfig cfg, ServiceOptions opt = no_calibration()) : svc(cfg, opt) {
    svc.install(server);
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~Harness() {
    server.stop();
    thread.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(600, 0);
    return c;
  }
};

Json body(const httplib::Result& r) { return Json::parse(r->body); }

std::string currents(double x, double y, double z) {
  return Json{{"ix", x}, {"iy", y}, {"iz", z}}.dump();
}

} // namespace

TEST_SUITE("service") {

TEST_CASE("currents body validation") {
  CHECK(parse_currents_body(R"({"ix": 0.1, "iy": 0.2, "iz": 0.3})") == Vec3(0.1, 0.2, 0.3));
  auto fields = [](const std::string& b) {
    try {
      parse_currents_body(b);
    } catch (const InvalidConfig& e) {
      return e.fields();
    }
    return std::vector<std::string>{};
  };
  CHECK(fields(R"({"ix": 0.1, "iy": 0.2})") == std::vector<std::string>{"iz"});
  CHECK(fields(R"({"ix": 0.1, "iy": 0.2, "iz": 0.3, "iw": 1})") == std::vector<std::string>{"iw"});
  CHECK(fields(R"({"ix": "a", "iy": 0.2, "iz": 0.3})") == std::vector<std::string>{"ix"});
  CHECK(fields("{not json") == std::vector<std::string>{"body"});
  CHECK(fields("[1, 2, 3]") == std::vector<std::string>{"body"});
}

TEST_CASE("pulse body applies a subset") {
  PulseConfig base;
  auto p = apply_pulse_body(base, R"({"rabi_freq_hz": 20000, "mode": "rabi_cycling"})");
  CHECK(p.rabi_freq == Approx(phys::two_pi * 20000));
  CHECK(p.mode == PulseMode::rabi_cycling);
  CHECK(p.duration == base.duration);
  auto q = apply_pulse_body(base, R"({"sidebands": [{"order": -1, "amplitude": 0.5}, {"order": 1}]})");
  REQUIRE(q.sidebands.size() == 2);
  CHECK(q.sidebands[0].amplitude == 0.5);
  CHECK(q.sidebands[1].amplitude == 1.0);
  CHECK(apply_pulse_body(base, R"({"sidebands": "-2:1,2:1"})").sidebands.size() == 2);
  CHECK_THROWS_AS(apply_pulse_body(base, R"({"rabi": 1})"), InvalidConfig);
  CHECK_THROWS_AS(apply_pulse_body(base, R"({"mode": "slow"})"), InvalidConfig);
  CHECK_THROWS_AS(apply_pulse_body(base, R"({"sidebands": 3})"), InvalidConfig);
}

TEST_CASE("synchronous submit publishes frames and analysis") {
  Service svc(small_config(), no_calibration());
  auto s0 = svc.snapshot();
  CHECK(s0->version == 0);
  CHECK_FALSE(s0->frames);
  bool async = true;
  auto v = svc.submit([](ExperimentConfig& c) { c.coils.current.z() += 0.1; }, "currents", &async);
  CHECK_FALSE(async);
  CHECK(v == 1);
  auto s = svc.snapshot();
  CHECK(s->completed == 1);
  CHECK_FALSE(s->pending);
  REQUIRE(s->frames);
  REQUIRE(s->analysis);
  CHECK(s->analysis->status == FitStatus::resolved);
  CHECK(s->analysis->field == Approx(0.1524).epsilon(0.02));
  REQUIRE(s->history.size() == 1);
  CHECK(s->history[0].source == "currents");
  // earlier snapshots are untouched
  CHECK_FALSE(s0->frames);
}

TEST_CASE("invalid mutations are rejected without a version") {
  Service svc(small_config(), no_calibration());
  CHECK_THROWS_AS(svc.submit([](ExperimentConfig& c) { c.pulse.start_time = 1.0; }, "pulse"), InvalidConfig);
  CHECK(svc.snapshot()->version == 0);
  CHECK(svc.submit([](ExperimentConfig&) {}, "pulse") == 1);
}

TEST_CASE("concurrent submits get distinct increasing versions, last writer wins") {
  Service svc(small_config(), no_calibration());
  std::uint64_t va = 0, vb = 0;
  std::thread a([&] { va = svc.submit([](ExperimentConfig& c) { c.coils.current.x() = 0.30; }, "currents"); });
  std::thread b([&] { vb = svc.submit([](ExperimentConfig& c) { c.coils.current.x() = 0.35; }, "currents"); });
  a.join();
  b.join();
  svc.wait_idle();
  CHECK(va != vb);
  auto s = svc.snapshot();
  CHECK(s->version == std::max(va, vb));
  CHECK(s->completed == s->version);
  double last = va > vb ? 0.30 : 0.35;
  CHECK(s->config.coils.current.x() == last);
  CHECK(s->frames->on.meta.currents.x() == last);
  for (std::size_t i = 1; i < s->history.size(); ++i) CHECK(s->history[i].version > s->history[i - 1].version);
}

TEST_CASE("large runs complete in the background") {
  ServiceOptions o = no_calibration();
  o.sync_atom_limit = 1000;
  Service svc(small_config(), o);
  bool async = false;
  auto v = svc.submit([](ExperimentConfig&) {}, "currents", &async);
  CHECK(async);
  svc.wait_idle();
  auto s = svc.snapshot();
  CHECK(s->completed == v);
  CHECK_FALSE(s->pending);
}

TEST_CASE("HTTP endpoints") {
  Harness h(small_config());
  auto cli = h.client();
  const double I0 = 0.2431;

  auto r = cli.Get("/api/frame?kind=diff");
  REQUIRE(r);
  CHECK(r->status == 404);
  CHECK(cli.Get("/api/analysis")->status == 404);
  CHECK(cli.Get("/api/profile")->status == 404);
  auto st = body(cli.Get("/api/state"));
  CHECK(st["version"] == 0);
  CHECK(st["analysis"].is_null());

  r = cli.Put("/api/currents", "{bad", "application/json");
  CHECK(r->status == 400);
  CHECK(body(r)["fields"][0] == "body");
  r = cli.Put("/api/currents", R"({"ix": 0.1})", "application/json");
  CHECK(r->status == 400);
  r = cli.Put("/api/currents", currents(0.5, I0, I0), "application/json");
  CHECK(r->status == 200);
  CHECK(body(r)["version"] == 1);

  // at I0 the stripes merge
  r = cli.Put("/api/currents", currents(I0, I0, I0), "application/json");
  REQUIRE(r->status == 200);
  auto j = body(r);
  CHECK(j["version"] == 2);
  CHECK(j["pending"] == false);
  CHECK(j["status"] == "unresolved");
  auto a = body(cli.Get("/api/analysis"));
  CHECK(a["version"] == 2);
  CHECK(a["result"]["status"] == "unresolved");
  CHECK(a["result"]["field_upper_bound_g"].get<double>() < 0.05);

  r = cli.Get("/api/frame?kind=diff&format=png");
  REQUIRE(r->status == 200);
  CHECK(r->get_header_value("Content-Type") == "image/png");
  CHECK(r->get_header_value("X-State-Version") == "2");
  CHECK(r->body.substr(1, 3) == "PNG");
  r = cli.Get("/api/frame?kind=raw&format=pgm");
  REQUIRE(r->status == 200);
  CHECK(r->body.rfind("P5\n1024 1024\n65535\n", 0) == 0);
  CHECK(r->has_header("X-Count-Scale"));
  CHECK(cli.Get("/api/frame?kind=bogus")->status == 400);
  CHECK(cli.Get("/api/frame?format=gif")->status == 400);

  auto p = body(cli.Get("/api/profile"));
  CHECK(p["x_m"].size() == 1024);
  CHECK(p["counts"].size() == 1024);
  CHECK(p["model"].size() == 1024);
  r = cli.Get("/api/profile?format=csv");
  CHECK(r->body.rfind("x_m,counts\n", 0) == 0);
  CHECK(cli.Get("/api/profile?format=xml")->status == 400);

  r = cli.Put("/api/pulse", R"({"rabi_freq_hz": 15000})", "application/json");
  CHECK(r->status == 200);
  CHECK(body(r)["version"] == 3);
  CHECK(cli.Put("/api/pulse", R"({"start_time_s": 0.039})", "application/json")->status == 400);
  CHECK(body(cli.Get("/api/state"))["pulse"]["rabi_freq_hz"].get<double>() == Approx(15000));

  auto hist = body(cli.Get("/api/history"));
  REQUIRE(hist["entries"].size() == 3);
  CHECK(hist["entries"][2]["source"] == "pulse");
  CHECK(hist["entries"][1]["status"] == "unresolved");
}

TEST_CASE("null run over HTTP") {
  Harness h(small_config());
  auto cli = h.client();
  auto r = cli.Post("/api/null", "", "application/json");
  REQUIRE(r->status == 202);
  auto v = body(r)["version"].get<int>();
  CHECK(body(cli.Post("/api/null", "", "application/json"))["fields"][0] == "null");
  h.svc.wait_idle();
  auto s = body(cli.Get("/api/state"));
  CHECK(s["null_state"] == "done");
  CHECK(s["completed_version"] == v);
  auto n = s["null_result"];
  REQUIRE(n.is_object());
  for (int i = 0; i < 3; ++i) CHECK(std::abs(n["currents_a"][i].get<double>() - 0.2431) < 0.005);
  auto hist = body(cli.Get("/api/history"))["entries"];
  CHECK(hist.size() > 3);
  CHECK(hist[0]["source"] == "null");
}

}
