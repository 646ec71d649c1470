#include "vstpr/service.hpp"
#include "vstpr/errors.hpp"

#include <httplib.h>

#include <cmath>
#include <set>

namespace vstpr {

namespace {

constexpr double kTwoPi = phys::two_pi;

void send_json(httplib::Response& res, int status, const Json& j) {
  res.status = status;
  res.set_content(dump(j), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& msg,
                const std::vector<std::string>& fields = {}) {
  send_json(res, status, {{"error", msg}, {"fields", fields}});
}

Json parse_object(const std::string& body) {
  Json j;
  try {
    j = Json::parse(body);
  } catch (const Json::parse_error& e) {
    throw InvalidConfig(std::string("malformed JSON body: ") + e.what(), {"body"});
  }
  if (!j.is_object()) throw InvalidConfig("request body must be a JSON object", {"body"});
  return j;
}

double number_field(const Json& j, const std::string& key) {
  const auto& v = j.at(key);
  if (!v.is_number()) throw InvalidConfig(key + " must be a number", {key});
  double d = v.get<double>();
  if (!std::isfinite(d)) throw InvalidConfig(key + " must be finite", {key});
  return d;
}

Json frame_summary(const SessionSnapshot& s) {
  if (!s.frames) return nullptr;
  const auto& d = s.frames->diff;
  return {{"width", d.width},
          {"height", d.height},
          {"pixel_size_m", d.meta.pixel_size},
          {"atoms_outside", s.frames->on.meta.atoms_outside},
          {"cloud_outside", s.frames->on.meta.cloud_outside}};
}

} // namespace

Vec3 parse_currents_body(const std::string& body) {
  Json j = parse_object(body);
  for (auto it = j.begin(); it != j.end(); ++it)
    if (it.key() != "ix" && it.key() != "iy" && it.key() != "iz")
      throw InvalidConfig("unknown field '" + it.key() + "'", {it.key()});
  std::vector<std::string> missing;
  for (auto k : {"ix", "iy", "iz"})
    if (!j.contains(k)) missing.push_back(k);
  if (!missing.empty()) throw InvalidConfig("ix, iy and iz are required (amps)", missing);
  return Vec3(number_field(j, "ix"), number_field(j, "iy"), number_field(j, "iz"));
}

PulseConfig apply_pulse_body(const PulseConfig& base, const std::string& body) {
  Json j = parse_object(body);
  PulseConfig p = base;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    if (k == "rabi_freq_hz") p.rabi_freq = number_field(j, k) * kTwoPi;
    else if (k == "duration_s") p.duration = number_field(j, k);
    else if (k == "start_time_s") p.start_time = number_field(j, k);
    else if (k == "delta12_hz") p.delta12 = number_field(j, k) * kTwoPi;
    else if (k == "modulation_freq_hz") p.modulation_freq = number_field(j, k) * kTwoPi;
    else if (k == "light_shift_hz") p.light_shift = number_field(j, k) * kTwoPi;
    else if (k == "dm2_weight_scale") p.dm2_weight_scale = number_field(j, k);
    else if (k == "mode") {
      if (!it->is_string()) throw InvalidConfig("mode must be a string", {k});
      auto m = it->get<std::string>();
      if (m == "instantaneous_pi") p.mode = PulseMode::instantaneous_pi;
      else if (m == "rabi_cycling") p.mode = PulseMode::rabi_cycling;
      else throw InvalidConfig("mode must be instantaneous_pi or rabi_cycling", {k});
    } else if (k == "sidebands") {
      if (it->is_string()) {
        p.sidebands = parse_sidebands(it->get<std::string>());
      } else if (it->is_array()) {
        p.sidebands.clear();
        for (const auto& s : *it) {
          if (!s.is_object() || !s.contains("order") || !s.at("order").is_number_integer())
            throw InvalidConfig("sidebands entries need an integer order", {k});
          double a = s.contains("amplitude") ? number_field(s, "amplitude") : 1.0;
          p.sidebands.push_back({s.at("order").get<int>(), a});
        }
      } else {
        throw InvalidConfig("sidebands must be an array or 'n:amp,...' string", {k});
      }
    } else {
      throw InvalidConfig("unknown pulse field '" + k + "'", {k});
    }
  }
  return p;
}

Json state_json(const SessionSnapshot& s) {
  const auto& c = s.config;
  Json j;
  j["version"] = s.version;
  j["completed_version"] = s.completed;
  j["pending"] = s.pending;
  j["currents_a"] = {c.coils.current.x(), c.coils.current.y(), c.coils.current.z()};
  j["i0_a"] = {c.coils.I0.x(), c.coils.I0.y(), c.coils.I0.z()};
  j["alpha_g_per_a"] = {c.coils.alpha.x(), c.coils.alpha.y(), c.coils.alpha.z()};
  j["pulse"] = to_json(c.pulse);
  j["atom_count"] = c.ensemble.atom_count;
  j["seed"] = c.seed;
  j["frames"] = frame_summary(s);
  if (s.analysis) {
    const auto& a = *s.analysis;
    j["analysis"] = {{"status", to_string(a.status)},
                     {"field_g", a.field},
                     {"field_err_g", a.field_err},
                     {"field_upper_bound_g", a.field_upper_bound},
                     {"larmor_hz", a.omega_L / kTwoPi},
                     {"separation_m", a.separation}};
  } else {
    j["analysis"] = nullptr;
  }
  j["calibrated"] = s.calibration.has_value();
  j["history_length"] = s.history.size();
  j["null_state"] = s.null_state;
  j["null_result"] = s.null_result ? null_json(*s.null_result) : Json(nullptr);
  j["last_error"] = s.last_error;
  return j;
}

Json history_json(const SessionSnapshot& s) {
  Json e = Json::array();
  for (const auto& h : s.history)
    e.push_back({{"version", h.version},
                 {"currents_a", {h.currents.x(), h.currents.y(), h.currents.z()}},
                 {"larmor_hz", h.omega_L / kTwoPi},
                 {"field_g", h.field},
                 {"status", h.status},
                 {"source", h.source},
                 {"timestamp_s", h.timestamp}});
  return {{"version", s.version}, {"entries", e}};
}

Json null_json(const NullResult& r) {
  Json steps = Json::array();
  for (const auto& h : r.history)
    steps.push_back({{"sweep", h.sweep},
                     {"axis", axis_name(h.axis)},
                     {"stage", h.stage},
                     {"currents_a", {h.currents.x(), h.currents.y(), h.currents.z()}},
                     {"metric_g", std::isfinite(h.metric) ? Json(h.metric) : Json(nullptr)},
                     {"status", h.status}});
  return {{"start_a", {r.start.x(), r.start.y(), r.start.z()}},
          {"currents_a", {r.currents.x(), r.currents.y(), r.currents.z()}},
          {"sweeps", r.sweeps},
          {"converged", r.converged},
          {"field_upper_bound_g", r.field_upper_bound},
          {"final", to_json(r.final_fit)},
          {"steps", steps}};
}

Service::Service(ExperimentConfig cfg, ServiceOptions opt, std::optional<CalibrationResult> cal)
    : opt_(opt), cal_(std::move(cal)), t0_(std::chrono::steady_clock::now()) {
  cfg.validate();
  auto s = std::make_shared<SessionSnapshot>();
  s->config = cfg;
  s->calibration = cal_;
  snap_ = s;
  thread_ = std::thread([this] { worker(); });
}

Service::~Service() {
  {
    std::lock_guard lk(job_mu_);
    stop_ = true;
  }
  job_cv_.notify_all();
  thread_.join();
}

double Service::now() const {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
}

std::shared_ptr<const SessionSnapshot> Service::snapshot() const {
  std::lock_guard lk(snap_mu_);
  return snap_;
}

void Service::publish(const std::function<void(SessionSnapshot&)>& edit) {
  std::lock_guard lk(snap_mu_);
  auto s = std::make_shared<SessionSnapshot>(*snap_);
  edit(*s);
  snap_ = s;
}

std::uint64_t Service::submit(const std::function<void(ExperimentConfig&)>& edit, const std::string& source,
                              bool* async) {
  std::unique_lock lk(job_mu_);
  ExperimentConfig cfg = snapshot()->config;
  edit(cfg);
  cfg.validate();
  const std::uint64_t v = ++next_version_;
  const bool background = cfg.ensemble.atom_count > opt_.sync_atom_limit;
  queued_ = Job{v, cfg, source, false};
  publish([&](SessionSnapshot& s) {
    s.version = v;
    s.pending = true;
    s.config = cfg;
  });
  job_cv_.notify_all();
  if (async) *async = background;
  if (!background) done_cv_.wait(lk, [&] { return finished_version_ >= v || stop_; });
  return v;
}

std::uint64_t Service::start_null(bool* async) {
  std::unique_lock lk(job_mu_);
  if (snapshot()->null_state == "running" || (queued_ && queued_->null_run))
    throw InvalidConfig("a null run is already in progress", {"null"});
  ExperimentConfig cfg = snapshot()->config;
  const std::uint64_t v = ++next_version_;
  queued_ = Job{v, cfg, "null", true};
  publish([&](SessionSnapshot& s) {
    s.version = v;
    s.pending = true;
    s.null_state = "running";
    s.null_result.reset();
  });
  job_cv_.notify_all();
  if (async) *async = true;
  return v;
}

void Service::wait_idle() {
  std::unique_lock lk(job_mu_);
  done_cv_.wait(lk, [&] { return (!queued_ && !busy_) || stop_; });
}

void Service::worker() {
  for (;;) {
    Job job;
    {
      std::unique_lock lk(job_mu_);
      job_cv_.wait(lk, [&] { return stop_ || queued_.has_value(); });
      if (stop_) return;
      job = std::move(*queued_);
      queued_.reset();
      busy_ = true;
    }
    run_job(job);
    {
      std::lock_guard lk(job_mu_);
      busy_ = false;
      finished_version_ = std::max(finished_version_, job.version);
    }
    done_cv_.notify_all();
  }
}

void Service::run_job(const Job& job) {
  try {
    const ExperimentConfig& cfg = job.config;
    if (!sim_ || sim_->config().seed != cfg.seed || sim_->config().ensemble.atom_count != cfg.ensemble.atom_count)
      sim_ = std::make_unique<Simulator>(cfg);
    if (opt_.calibrate && !cal_) {
      cal_ = calibrate(*sim_);
      auto c = cal_;
      publish([&](SessionSnapshot& s) { s.calibration = c; });
    }

    ExperimentConfig final_cfg = cfg;
    std::optional<NullResult> nr;
    if (job.null_run) {
      Simulator sim(cfg);
      auto observer = [&](const NullStep& st) {
        if (st.stage == "set") return;
        HistoryEntry h{job.version, st.currents, std::isfinite(st.metric) ? st.metric * cfg.species.gyromag : 0.0,
                       std::isfinite(st.metric) ? st.metric : 0.0, st.status, "null", now()};
        publish([&](SessionSnapshot& s) { s.history.push_back(h); });
      };
      nr = null_field(sim, cal_, observer);
      final_cfg.coils.current = nr->currents;
    }

    auto fs = std::make_shared<const FrameSet>(sim_->run(final_cfg));
    StripeFitResult fit = analyze(*fs, final_cfg, cal_);
    HistoryEntry h{job.version, final_cfg.coils.current, fit.omega_L, fit.field, to_string(fit.status), job.source, now()};
    publish([&](SessionSnapshot& s) {
      if (job.version < s.completed) return;
      s.completed = job.version;
      s.frames = fs;
      s.analysis = fit;
      s.history.push_back(h);
      s.pending = s.version != job.version;
      s.last_error.clear();
      if (job.null_run) {
        s.null_state = "done";
        s.null_result = nr;
        if (s.version == job.version) s.config.coils.current = final_cfg.coils.current;
      }
    });
  } catch (const std::exception& e) {
    std::string msg = e.what();
    publish([&](SessionSnapshot& s) {
      s.last_error = msg;
      s.pending = s.version != job.version && s.pending;
      if (job.null_run) s.null_state = "failed";
    });
  }
}

void Service::install(httplib::Server& server) {
  server.Get("/api/state", [this](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, state_json(*snapshot()));
  });

  auto mutation_reply = [this](httplib::Response& res, std::uint64_t v, bool async) {
    auto s = snapshot();
    Json j = {{"version", v}, {"pending", async}};
    if (!async && s->analysis && s->completed >= v) {
      j["status"] = to_string(s->analysis->status);
      j["analysis"] = to_json(*s->analysis);
    }
    send_json(res, async ? 202 : 200, j);
  };

  server.Put("/api/currents", [this, mutation_reply](const httplib::Request& req, httplib::Response& res) {
    try {
      Vec3 I = parse_currents_body(req.body);
      bool async = false;
      auto v = submit([&](ExperimentConfig& c) { c.coils.current = I; }, "currents", &async);
      mutation_reply(res, v, async);
    } catch (const InvalidConfig& e) {
      send_error(res, 400, e.what(), e.fields());
    }
  });

  server.Put("/api/pulse", [this, mutation_reply](const httplib::Request& req, httplib::Response& res) {
    try {
      bool async = false;
      auto v = submit([&](ExperimentConfig& c) { c.pulse = apply_pulse_body(c.pulse, req.body); }, "pulse", &async);
      mutation_reply(res, v, async);
    } catch (const InvalidConfig& e) {
      send_error(res, 400, e.what(), e.fields());
    }
  });

  server.Post("/api/null", [this](const httplib::Request&, httplib::Response& res) {
    try {
      auto v = start_null();
      send_json(res, 202, {{"version", v}, {"pending", true}});
    } catch (const InvalidConfig& e) {
      send_error(res, 409, e.what(), e.fields());
    }
  });

  server.Get("/api/frame", [this](const httplib::Request& req, httplib::Response& res) {
    std::string kind = req.has_param("kind") ? req.get_param_value("kind") : "diff";
    std::string format = req.has_param("format") ? req.get_param_value("format") : "png";
    if (kind != "raw" && kind != "diff" && kind != "off") return send_error(res, 400, "kind must be raw, diff or off", {"kind"});
    if (format != "png" && format != "pgm") return send_error(res, 400, "format must be png or pgm", {"format"});
    auto s = snapshot();
    if (!s->frames) return send_error(res, 404, "no frame simulated yet");
    const Frame& f = kind == "raw" ? s->frames->on : kind == "off" ? s->frames->off : s->frames->diff;
    res.set_header("X-State-Version", std::to_string(s->completed));
    if (format == "png") {
      auto bytes = encode_png(f);
      res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
    } else {
      PgmScale sc;
      std::string data = encode_pgm(f, &sc);
      res.set_header("X-Count-Scale", std::to_string(sc.scale));
      res.set_header("X-Count-Offset", std::to_string(sc.offset));
      res.set_content(data, "image/x-portable-graymap");
    }
  });

  server.Get("/api/profile", [this](const httplib::Request& req, httplib::Response& res) {
    std::string format = req.has_param("format") ? req.get_param_value("format") : "json";
    if (format != "json" && format != "csv") return send_error(res, 400, "format must be json or csv", {"format"});
    auto s = snapshot();
    if (!s->frames) return send_error(res, 404, "no frame simulated yet");
    const Profile& p = s->frames->diff_profile;
    res.set_header("X-State-Version", std::to_string(s->completed));
    if (format == "csv") return res.set_content(profile_csv(p), "text/csv");
    Json j = to_json(p);
    std::vector<double> model(p.size(), 0.0);
    if (s->analysis)
      for (const auto& st : s->analysis->stripes)
        for (std::size_t i = 0; i < p.size(); ++i) model[i] += st(p.x[i]);
    j["model"] = model;
    j["version"] = s->completed;
    send_json(res, 200, j);
  });

  server.Get("/api/analysis", [this](const httplib::Request&, httplib::Response& res) {
    auto s = snapshot();
    if (!s->analysis) return send_error(res, 404, "no analysis available yet");
    send_json(res, 200, {{"version", s->completed}, {"result", to_json(*s->analysis)}});
  });

  server.Get("/api/history", [this](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, history_json(*snapshot()));
  });
}

} // namespace vstpr
