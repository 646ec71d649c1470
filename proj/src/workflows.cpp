#include "vstpr/workflows.hpp"
#include "vstpr/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace vstpr {

namespace {

EnsembleConfig ensemble_of(const ExperimentConfig& cfg) {
  EnsembleConfig e = cfg.ensemble;
  e.rng_seed = cfg.seed;
  return e;
}

bool same_cloud(const ExperimentConfig& a, const ExperimentConfig& b) {
  return a.seed == b.seed && a.ensemble.atom_count == b.ensemble.atom_count &&
         a.ensemble.position_sigma == b.ensemble.position_sigma &&
         a.ensemble.temperature == b.ensemble.temperature && a.ensemble.sampling == b.ensemble.sampling &&
         a.species.mass == b.species.mass && a.species.wavelength == b.species.wavelength;
}

double metric_of(const StripeFitResult& r) {
  switch (r.status) {
  case FitStatus::resolved: return r.field;
  case FitStatus::unresolved: return r.field_upper_bound;
  default: return std::numeric_limits<double>::infinity();
  }
}

} // namespace

Simulator::Simulator(const ExperimentConfig& cfg)
    : cfg_(cfg),
      atoms_(std::make_shared<const std::vector<AtomState>>(sample_ensemble(ensemble_of(cfg), cfg.species))) {}

FrameSet Simulator::run(const ExperimentConfig& cfg) const {
  cfg.validate();
  std::shared_ptr<const std::vector<AtomState>> atoms = atoms_;
  if (!same_cloud(cfg, cfg_))
    atoms = std::make_shared<const std::vector<AtomState>>(sample_ensemble(ensemble_of(cfg), cfg.species));
  SequenceInputs in = cfg.sequence();
  Frame on = run_sequence(*atoms, in, true);
  Frame off = run_sequence(*atoms, in, false);
  return make_profiles(std::move(on), std::move(off), cfg.analysis);
}

FrameSet make_profiles(Frame on, Frame off, const AnalysisConfig& a) {
  FrameSet fs;
  fs.diff = difference_frame(on, off);
  int r0 = a.band_end < 0 ? 0 : a.band_begin;
  int r1 = a.band_end < 0 ? fs.diff.height : a.band_end;
  fs.diff_profile = cross_section(fs.diff, r0, r1);
  fs.off_profile = cross_section(off, r0, r1);
  fs.on = std::move(on);
  fs.off = std::move(off);
  return fs;
}

StripeFitResult analyze(const FrameSet& fs, const ExperimentConfig& cfg, const std::optional<CalibrationResult>& cal) {
  return measure_field(fs.diff_profile, fs.off_profile, fs.diff.meta, cfg.analysis, cal);
}

ExperimentConfig calibration_config(const ExperimentConfig& cfg) {
  ExperimentConfig c = cfg;
  c.coils.current = c.coils.I0;
  if (c.pulse.sidebands.empty()) c.pulse.sidebands = c.calibration_sidebands;
  return c;
}

CalibrationResult calibrate(const Simulator& sim) {
  ExperimentConfig c = calibration_config(sim.config());
  FrameSet fs = sim.run(c);
  return calibrate_with_sidebands(fs.diff_profile, fs.off_profile, fs.diff.meta, c.analysis.t_map);
}

std::vector<double> linspace(double from, double to, int steps) {
  if (steps < 1) throw InvalidConfig("scan steps must be >= 1", {"scan-steps"});
  std::vector<double> out;
  for (int i = 0; i < steps; ++i) out.push_back(steps == 1 ? from : from + (to - from) * i / (steps - 1));
  return out;
}

ScanResult current_scan(const Simulator& sim, int axis, const std::vector<double>& currents,
                        const std::optional<CalibrationResult>& cal) {
  ScanResult out;
  out.axis = axis;
  ExperimentConfig cfg = sim.config();
  for (double I : currents) {
    cfg.coils.current[axis] = I;
    ScanSample s;
    s.currents = cfg.coils.current;
    s.fit = analyze(sim.run(cfg), cfg, cal);
    if (s.fit.status == FitStatus::resolved) out.points.push_back({I, s.fit.omega_L, 0.0});
    out.samples.push_back(std::move(s));
  }
  if (out.points.size() >= 4) {
    try {
      out.fit = fit_hyperbola(out.points, cfg.species);
    } catch (const FitFailed& e) {
      out.message = std::string("hyperbola fit failed: ") + e.what();
    }
  } else {
    out.message = "fewer than 4 resolved points";
  }
  return out;
}

double doublet_offset(double kick_time, double image_time) { return std::abs(0.5 * image_time - kick_time); }

std::vector<TimingPoint> timing_sweep(const Simulator& sim, const std::vector<double>& start_times) {
  std::vector<TimingPoint> out;
  ExperimentConfig cfg = sim.config();
  cfg.coils.current = cfg.coils.I0;
  cfg.coils.background = Vec3::Zero();
  const double T_i = cfg.imaging.image_time;
  const double v_r = cfg.species.recoil_velocity();
  for (double tr : start_times) {
    cfg.pulse.start_time = tr;
    TimingPoint pt;
    pt.start_time = tr;
    pt.ratio = tr / T_i;
    double dT = doublet_offset(tr + 0.5 * cfg.pulse.duration, T_i);
    pt.expected_splitting = 4.0 * v_r * dT;
    FrameSet fs = sim.run(cfg);
    pt.contrast = contrast(fs.diff_profile, fs.off_profile, T_i, dT, cfg.species);
    try {
      DoubletOptions o;
      o.free_splitting = true;
      pt.splitting = fit_doublet(fs.diff_profile, T_i, dT, cfg.species, o).splitting();
      pt.status = "ok";
    } catch (const FitFailed& e) {
      pt.status = "failed";
    }
    out.push_back(pt);
  }
  return out;
}

FaradayScanResult faraday_scan(const ExperimentConfig& cfg0, int axis, const std::vector<double>& currents) {
  FaradayScanResult out;
  out.axis = axis;
  ExperimentConfig cfg = cfg0;
  std::vector<ScanPoint> pts;
  for (std::size_t i = 0; i < currents.size(); ++i) {
    cfg.coils.current[axis] = currents[i];
    FaradaySample s;
    s.currents = cfg.coils.current;
    FieldVector B = field_at(cfg.coils);
    s.true_field = B.magnitude();
    FaradayTrace tr = synthesize_trace(B, cfg.species, cfg.faraday, hash_combine(cfg.seed, i));
    s.estimate = extract_frequency(tr);
    if (s.estimate.precession) pts.push_back({currents[i], s.estimate.omega_L, 0.0});
    out.samples.push_back(s);
  }
  if (pts.size() >= 4) {
    try {
      out.fit = fit_hyperbola(pts, cfg.species);
    } catch (const FitFailed& e) {
      out.message = std::string("hyperbola fit failed: ") + e.what();
    }
  } else {
    out.message = "fewer than 4 traces with precession";
  }
  return out;
}

NullResult null_field(const Simulator& sim, const std::optional<CalibrationResult>& cal, const NullObserver& observer) {
  ExperimentConfig cfg = sim.config();
  const NullOptions& opt = cfg.null;
  NullResult out;
  out.start = cfg.coils.current;
  int sweep = 0;

  auto evaluate = [&](int axis, const std::string& stage, Vec3 currents) {
    cfg.coils.current = currents;
    StripeFitResult r = analyze(sim.run(cfg), cfg, cal);
    NullStep st{sweep, axis, stage, currents, metric_of(r), to_string(r.status)};
    out.history.push_back(st);
    if (observer) observer(st);
    return r;
  };

  Vec3 cur = cfg.coils.current;
  for (sweep = 1; sweep <= opt.sweeps; ++sweep) {
    Vec3 before = cur;
    // transverse coils first; the beam axis last, with a transverse probe field
    for (int axis : {2, 1, 0}) {
      double best = cur[axis];
      // a field along the beam drives only dm = 0, whose stripe does not move with |B|
      Vec3 probe = Vec3::Zero();
      if (axis == 0) probe.z() = opt.probe_bias / cfg.coils.alpha.z();
      if (sweep == 1) {
        // golden-section search for a coarse minimum
        const double g = (std::sqrt(5.0) - 1.0) / 2.0;
        double a = cur[axis] - opt.bracket, b = cur[axis] + opt.bracket;
        auto f = [&](double I) {
          Vec3 c = cur + probe;
          c[axis] = I;
          return evaluate(axis, "search", c).status == FitStatus::failed ? std::numeric_limits<double>::infinity()
                                                                          : out.history.back().metric;
        };
        double x1 = b - g * (b - a), x2 = a + g * (b - a);
        double f1 = f(x1), f2 = f(x2);
        while (b - a > opt.tolerance) {
          if (f1 <= f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
          } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
          }
        }
        best = f1 <= f2 ? x1 : x2;
      }

      // hyperbola through points either side of the coarse minimum
      std::vector<ScanPoint> pts;
      for (double off : opt.refine_offsets) {
        for (double s : {-1.0, 1.0}) {
          Vec3 c = cur + probe;
          c[axis] = best + s * off;
          StripeFitResult r = evaluate(axis, "refine", c);
          if (r.status == FitStatus::resolved) pts.push_back({c[axis], r.omega_L, 0.0});
        }
      }
      double span = opt.refine_offsets.empty() ? 0.0 : *std::max_element(opt.refine_offsets.begin(), opt.refine_offsets.end());
      if (pts.size() >= 4) {
        try {
          ScanFitResult h = fit_hyperbola(pts, cfg.species);
          if (std::abs(h.I0 - best) <= span) best = h.I0;
        } catch (const FitFailed&) {
        }
      }
      cur[axis] = best;
      cfg.coils.current = cur;
      NullStep st{sweep, axis, "set", cur, 0.0, ""};
      out.history.push_back(st);
      if (observer) observer(st);
    }
    out.sweeps = sweep;
    if ((cur - before).cwiseAbs().maxCoeff() < opt.converged_step) {
      out.converged = true;
      break;
    }
  }
  if (out.sweeps > opt.sweeps) out.sweeps = opt.sweeps;

  cfg.coils.current = cur;
  out.currents = cur;
  out.final_fit = analyze(sim.run(cfg), cfg, cal);
  out.field_upper_bound = out.final_fit.status == FitStatus::unresolved ? out.final_fit.field_upper_bound
                                                                         : out.final_fit.field + out.final_fit.field_err;
  return out;
}

int axis_index(const std::string& name) {
  if (name == "x") return 0;
  if (name == "y") return 1;
  if (name == "z") return 2;
  throw InvalidConfig("axis must be x, y or z", {"axis"});
}

std::string axis_name(int axis) { return std::string(1, "xyz"[axis]); }

} // namespace vstpr
