// vstpr command line: simulation, analysis and the nulling service.

#include "vstpr/config.hpp"
#include "vstpr/errors.hpp"
#include "vstpr/io.hpp"
#include "vstpr/service.hpp"
#include "vstpr/workflows.hpp"

#include <CLI11.hpp>
#include <httplib.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace vstpr;

namespace {

constexpr int kExitFitFailed = 2;
constexpr int kExitConfig = 3;

struct Common {
  std::string config;
  std::string out = "run";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> atoms;
  std::string currents;
  std::vector<std::string> set;
  std::string calibration;
  bool no_calibrate = false;
};

struct RunDir {
  fs::path root;
  std::string command;
  std::vector<std::string> files;
  Json extra = Json::object();

  std::string path(const std::string& rel) {
    fs::path p = root / rel;
    fs::create_directories(p.parent_path());
    files.push_back(rel);
    return p.string();
  }
  void json(const std::string& rel, const Json& j) { write_text(path(rel), dump(j)); }
  void finish(const ExperimentConfig& cfg, const std::string& status) {
    write_text(path("config.txt"), to_text(cfg));
    std::sort(files.begin(), files.end());
    files.erase(std::unique(files.begin(), files.end()), files.end());
    Json m;
    m["command"] = command;
    m["seed"] = cfg.seed;
    m["status"] = status;
    m["files"] = files;
    m["summary"] = extra;
    write_text((root / "manifest.json").string(), dump(m));
  }
};

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_config(c.config);
  for (const auto& kv : c.set) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw InvalidConfig("--set expects key=value", {kv});
    apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed) cfg.seed = *c.seed;
  if (c.atoms) cfg.ensemble.atom_count = *c.atoms;
  if (!c.currents.empty()) {
    auto v = parse_list(c.currents);
    if (v.size() != 3) throw InvalidConfig("--currents expects ix,iy,iz in amps", {"currents"});
    cfg.coils.current = Vec3(v[0], v[1], v[2]);
  }
  cfg.validate();
  return cfg;
}

std::optional<CalibrationResult> calibration_for(const Common& c, const Simulator* sim, RunDir& rd) {
  if (!c.calibration.empty()) return calibration_from_json(Json::parse(read_text(c.calibration)));
  if (c.no_calibrate || !sim) return std::nullopt;
  CalibrationResult cal = calibrate(*sim);
  rd.json("calibration.json", to_json(cal));
  return cal;
}

void write_frames(RunDir& rd, const FrameSet& fs, const std::string& prefix, bool all) {
  if (all) {
    write_pgm(fs.on, rd.path(prefix + "on.pgm"));
    rd.files.push_back(prefix + "on.json");
    write_pgm(fs.off, rd.path(prefix + "off.pgm"));
    rd.files.push_back(prefix + "off.json");
  }
  write_pgm(fs.diff, rd.path(prefix + "diff.pgm"));
  rd.files.push_back(prefix + "diff.json");
  write_profile_csv(fs.diff_profile, rd.path(prefix + "profile_diff.csv"));
  write_profile_csv(fs.off_profile, rd.path(prefix + "profile_off.csv"));
}

Json currents_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

bool has_pair(const fs::path& d) { return fs::exists(d / "on.pgm") && fs::exists(d / "off.pgm"); }

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Velocity-selective Raman stripe simulator and field analysis"};
  app.require_subcommand(1);
  Common c;
  auto add_common = [&](CLI::App* s) {
    s->add_option("--config", c.config, "key = value configuration file");
    s->add_option("--seed", c.seed, "random seed");
    s->add_option("--out", c.out, "run directory");
    s->add_option("--atoms", c.atoms, "atom count");
    s->add_option("--currents", c.currents, "coil currents ix,iy,iz in amps");
    s->add_option("--set", c.set, "override a configuration key (key=value)");
  };
  auto add_cal = [&](CLI::App* s) {
    s->add_option("--calibration", c.calibration, "calibration JSON from `calibrate`");
    s->add_flag("--no-calibrate", c.no_calibrate, "use the nominal mapping instead of a sideband run");
  };

  auto* sim_cmd = app.add_subcommand("simulate", "simulate pulse-on/off frames and cross-sections");
  add_common(sim_cmd);

  std::string frames_dir;
  auto* fit_cmd = app.add_subcommand("fit", "fit stripes and estimate |B|");
  add_common(fit_cmd);
  add_cal(fit_cmd);
  fit_cmd->add_option("--frames", frames_dir, "run directory (or directory of run directories) with on/off PGM frames");

  std::string axis = "z";
  std::optional<double> from, to;
  int steps = 10;
  bool no_frames = false;
  auto* scan_cmd = app.add_subcommand("scan", "stripe scan of one coil current and hyperbola fit");
  add_common(scan_cmd);
  add_cal(scan_cmd);
  scan_cmd->add_option("--axis", axis, "x, y or z")->check(CLI::IsMember({"x", "y", "z"}));
  scan_cmd->add_option("--scan-from", from, "first current, A (default I0 - 0.15)");
  scan_cmd->add_option("--scan-to", to, "last current, A (default I0 + 0.15)");
  scan_cmd->add_option("--scan-steps", steps, "number of currents");
  scan_cmd->add_flag("--no-frames", no_frames, "skip per-point frame files");

  std::string tr_list;
  auto* timing_cmd = app.add_subcommand("timing-sweep", "contrast versus pulse start time at zero field");
  add_common(timing_cmd);
  timing_cmd->add_option("--tr-list", tr_list, "pulse start times in s (default 0.2..0.7 of the image time)");

  auto* cal_cmd = app.add_subcommand("calibrate", "sideband calibration of the position-to-detuning map");
  add_common(cal_cmd);
  cal_cmd->add_option("--frames", frames_dir, "existing sideband run directory instead of a simulated one");

  std::string trace_file;
  auto* far_cmd = app.add_subcommand("faraday", "synthesize a Faraday trace and extract the precession frequency");
  add_common(far_cmd);
  far_cmd->add_option("--trace", trace_file, "two-column CSV trace to analyze instead");
  far_cmd->add_option("--axis", axis, "scan axis")->check(CLI::IsMember({"x", "y", "z"}));
  far_cmd->add_option("--scan-from", from, "first current, A");
  far_cmd->add_option("--scan-to", to, "last current, A");
  far_cmd->add_option("--scan-steps", steps, "number of currents");

  auto* null_cmd = app.add_subcommand("null", "automated field nulling by coordinate descent");
  add_common(null_cmd);
  add_cal(null_cmd);

  std::string host = "127.0.0.1";
  int port = 8080;
  auto* serve_cmd = app.add_subcommand("serve", "HTTP service for the nulling UI");
  add_common(serve_cmd);
  add_cal(serve_cmd);
  serve_cmd->add_option("--host", host);
  serve_cmd->add_option("--port", port);

  CLI11_PARSE(app, argc, argv);

  try {
    ExperimentConfig cfg = resolve(c);
    RunDir rd{c.out, app.get_subcommands().front()->get_name()};
    fs::create_directories(rd.root);

    if (*sim_cmd) {
      Simulator sim(cfg);
      FrameSet fs = sim.run();
      write_frames(rd, fs, "", true);
      rd.extra = {{"difference_total", fs.diff.total()}, {"atoms_outside", fs.on.meta.atoms_outside}};
      rd.finish(cfg, "ok");
      return 0;
    }

    if (*fit_cmd) {
      std::vector<std::pair<std::string, FrameSet>> inputs;
      std::optional<CalibrationResult> cal;
      if (!frames_dir.empty()) {
        fs::path d(frames_dir);
        std::vector<fs::path> dirs;
        if (has_pair(d)) dirs.push_back(d);
        else if (fs::is_directory(d))
          for (const auto& e : fs::directory_iterator(d))
            if (e.is_directory() && has_pair(e.path())) dirs.push_back(e.path());
        std::sort(dirs.begin(), dirs.end());
        if (dirs.empty()) throw InvalidConfig("no on.pgm/off.pgm pairs under '" + frames_dir + "'", {"frames"});
        for (const auto& dir : dirs)
          inputs.emplace_back(dir.filename().string(),
                              make_profiles(read_pgm((dir / "on.pgm").string()), read_pgm((dir / "off.pgm").string()),
                                            cfg.analysis));
        cal = calibration_for(c, nullptr, rd);
      } else {
        Simulator sim(cfg);
        inputs.emplace_back("", sim.run());
        cal = calibration_for(c, &sim, rd);
      }
      bool failed = false;
      Json all = Json::array();
      for (const auto& [name, fs] : inputs) {
        StripeFitResult r = analyze(fs, cfg, cal);
        failed |= r.status == FitStatus::failed;
        Json j = to_json(r);
        if (!name.empty()) j["source"] = name;
        all.push_back(j);
      }
      if (inputs.size() == 1) rd.json("fit.json", all[0]);
      else rd.json("fits.json", all);
      rd.extra = {{"fits", inputs.size()}, {"failed", failed}};
      rd.finish(cfg, failed ? "fit-failed" : "ok");
      if (inputs.size() == 1)
        std::printf("%s |B| = %.6f G +- %.6f\n", all[0]["status"].get<std::string>().c_str(),
                    all[0]["field_g"].get<double>(), all[0]["field_err_g"].get<double>());
      return failed ? kExitFitFailed : 0;
    }

    if (*scan_cmd) {
      int ax = axis_index(axis);
      Simulator sim(cfg);
      auto cal = calibration_for(c, &sim, rd);
      double I0 = cfg.coils.I0[ax];
      auto grid = linspace(from.value_or(I0 - 0.15), to.value_or(I0 + 0.15), steps);
      ScanResult sr = current_scan(sim, ax, grid, cal);
      Json pts = Json::array();
      bool failed = !sr.fit.has_value();
      for (std::size_t i = 0; i < sr.samples.size(); ++i) {
        const auto& s = sr.samples[i];
        failed |= s.fit.status == FitStatus::failed;
        pts.push_back({{"currents_a", currents_json(s.currents)}, {"fit", to_json(s.fit)}});
        if (!no_frames) {
          ExperimentConfig pc = cfg;
          pc.coils.current = s.currents;
          char dir[32];
          std::snprintf(dir, sizeof dir, "point_%02zu/", i);
          write_frames(rd, sim.run(pc), dir, false);
        }
      }
      Json j = {{"axis", axis}, {"points", pts}, {"message", sr.message}};
      j["fit"] = sr.fit ? to_json(*sr.fit) : Json(nullptr);
      rd.json("scan.json", j);
      rd.extra = {{"points", sr.samples.size()}, {"resolved", sr.points.size()}};
      rd.finish(cfg, failed ? "fit-failed" : "ok");
      if (sr.fit)
        std::printf("alpha = %.5f G/A  I0 = %.5f A  B_perp = %.5f G\n", sr.fit->alpha, sr.fit->I0, sr.fit->B_perp);
      return failed ? kExitFitFailed : 0;
    }

    if (*timing_cmd) {
      std::vector<double> trs;
      if (tr_list.empty())
        for (double f : {0.2, 0.3, 0.4, 0.5, 0.6, 0.7}) trs.push_back(f * cfg.imaging.image_time);
      else
        trs = parse_list(tr_list);
      Simulator sim(cfg);
      auto pts = timing_sweep(sim, trs);
      Json arr = Json::array();
      std::string csv = "start_time_s,ratio,contrast,splitting_m,expected_splitting_m\n";
      bool failed = false;
      for (const auto& p : pts) {
        failed |= p.status != "ok";
        arr.push_back({{"start_time_s", p.start_time},
                       {"ratio", p.ratio},
                       {"contrast", p.contrast},
                       {"splitting_m", p.splitting},
                       {"expected_splitting_m", p.expected_splitting},
                       {"status", p.status}});
        char line[160];
        std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%.17g,%.17g\n", p.start_time, p.ratio, p.contrast,
                      p.splitting, p.expected_splitting);
        csv += line;
      }
      rd.json("timing.json", {{"points", arr}});
      write_text(rd.path("timing.csv"), csv);
      rd.finish(cfg, failed ? "fit-failed" : "ok");
      return failed ? kExitFitFailed : 0;
    }

    if (*cal_cmd) {
      CalibrationResult cal;
      if (!frames_dir.empty()) {
        fs::path d(frames_dir);
        auto fs = make_profiles(read_pgm((d / "on.pgm").string()), read_pgm((d / "off.pgm").string()), cfg.analysis);
        cal = calibrate_with_sidebands(fs.diff_profile, fs.off_profile, fs.diff.meta, cfg.analysis.t_map);
      } else {
        Simulator sim(cfg);
        ExperimentConfig cc = calibration_config(cfg);
        FrameSet fs = sim.run(cc);
        write_frames(rd, fs, "sideband_", false);
        cal = calibrate_with_sidebands(fs.diff_profile, fs.off_profile, fs.diff.meta, cc.analysis.t_map);
      }
      rd.json("calibration.json", to_json(cal));
      rd.finish(cfg, "ok");
      std::printf("kappa = %.6e m/(rad/s)  effective mapping time = %.6f s\n", cal.kappa, cal.t_map_effective);
      return 0;
    }

    if (*far_cmd) {
      if (from || to) {
        int ax = axis_index(axis);
        double I0 = cfg.coils.I0[ax];
        auto grid = linspace(from.value_or(I0 - 0.15), to.value_or(I0 + 0.15), steps);
        FaradayScanResult fr = faraday_scan(cfg, ax, grid);
        Json pts = Json::array();
        for (const auto& s : fr.samples)
          pts.push_back({{"currents_a", currents_json(s.currents)}, {"true_field_g", s.true_field}, {"estimate", to_json(s.estimate)}});
        Json j = {{"axis", axis}, {"points", pts}, {"message", fr.message}};
        j["fit"] = fr.fit ? to_json(*fr.fit) : Json(nullptr);
        rd.json("faraday_scan.json", j);
        rd.finish(cfg, fr.fit ? "ok" : "fit-failed");
        return fr.fit ? 0 : kExitFitFailed;
      }
      FaradayTrace tr = trace_file.empty() ? synthesize_trace(field_at(cfg.coils), cfg.species, cfg.faraday, cfg.seed)
                                           : read_trace_csv(trace_file);
      if (trace_file.empty()) write_trace_csv(tr, rd.path("trace.csv"));
      FrequencyEstimate e = extract_frequency(tr);
      Json j = to_json(e);
      j["field_g"] = e.omega_L / cfg.species.gyromag;
      rd.json("faraday.json", j);
      rd.finish(cfg, e.status);
      std::printf("%s  f_L = %.3f Hz  |B| = %.6f G\n", e.status.c_str(), e.omega_L / phys::two_pi,
                  e.omega_L / cfg.species.gyromag);
      return 0;
    }

    if (*null_cmd) {
      Simulator sim(cfg);
      auto cal = calibration_for(c, &sim, rd);
      NullResult r = null_field(sim, cal, [](const NullStep& st) {
        if (st.stage == "set")
          std::printf("sweep %d: I%s -> %.5f A\n", st.sweep, axis_name(st.axis).c_str(), st.currents[st.axis]);
      });
      rd.json("null.json", null_json(r));
      rd.extra = {{"converged", r.converged}, {"sweeps", r.sweeps}};
      bool failed = r.final_fit.status == FitStatus::failed;
      rd.finish(cfg, failed ? "fit-failed" : "ok");
      std::printf("currents = %.5f, %.5f, %.5f A  |B| <= %.5f G\n", r.currents.x(), r.currents.y(), r.currents.z(),
                  r.field_upper_bound);
      return failed ? kExitFitFailed : 0;
    }

    if (*serve_cmd) {
      std::optional<CalibrationResult> cal;
      if (!c.calibration.empty()) cal = calibration_from_json(Json::parse(read_text(c.calibration)));
      ServiceOptions so;
      so.calibrate = !c.no_calibrate;
      Service svc(cfg, so, cal);
      httplib::Server server;
      svc.install(server);
      std::printf("listening on http://%s:%d\n", host.c_str(), port);
      std::fflush(stdout);
      if (!server.listen(host, port)) throw InvalidConfig("cannot listen on " + host + ":" + std::to_string(port), {"port"});
      return 0;
    }
  } catch (const InvalidConfig& e) {
    std::fprintf(stderr, "invalid configuration: %s\n", e.what());
    for (const auto& f : e.fields()) std::fprintf(stderr, "  field: %s\n", f.c_str());
    return kExitConfig;
  } catch (const GeometryMismatch& e) {
    std::fprintf(stderr, "geometry mismatch: %s\n", e.what());
    return kExitConfig;
  } catch (const FitFailed& e) {
    std::fprintf(stderr, "fit failed: %s\n", e.what());
    return kExitFitFailed;
  } catch (const Json::exception& e) {
    std::fprintf(stderr, "bad JSON input: %s\n", e.what());
    return kExitConfig;
  }
  return 0;
}
