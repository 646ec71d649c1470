#include "vstpr/resonance.hpp"
#include "vstpr/errors.hpp"

#include <algorithm>
#include <cmath>

namespace vstpr {

namespace {

const double kInvSqrt2Pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);

struct Box {
  double lo, hi, dlo, dhi, center, dcenter, h;
  int process;
};

} // namespace

ResonanceContext make_resonance_context(const FrameMeta& meta, double t_map, double cloud_sigma,
                                        std::optional<double> kappa) {
  ResonanceContext ctx;
  ctx.species = meta.species;
  ctx.pulse = meta.pulse;
  ctx.image_time = meta.image_time;
  if (!(t_map > 0)) t_map = meta.image_time;
  ctx.kappa = kappa ? *kappa : t_map / (2.0 * meta.species.k());
  ctx.cloud_sigma = cloud_sigma;
  ctx.channels = {-1, 0, 1};
  if (meta.pulse.dm2_weight_scale > 0) ctx.channels = {-2, -1, 0, 1, 2};
  return ctx;
}

std::vector<Window> resonance_windows(int m, double omega, const ResonanceContext& ctx) {
  const auto& pc = ctx.pulse;
  const double base = 4.0 * ctx.species.recoil_freq() + pc.light_shift;
  std::vector<Box> boxes;
  for (const auto& ln : pc.lines()) {
    double h = std::abs(ln.amplitude) * pc.rabi_freq;
    if (!(h > 0)) continue;
    for (int p : {+1, -1}) {
      // delta_eff = p (D - delta12 - n w_m) + base - m w_L = 0
      double Dc = pc.delta12 + ln.order * pc.modulation_freq + p * (m * omega - base);
      double dD = p * m;
      boxes.push_back({Dc - h, Dc + h, dD, dD, Dc, dD, h, p});
    }
  }
  std::sort(boxes.begin(), boxes.end(), [](const Box& a, const Box& b) {
    return a.center < b.center || (a.center == b.center && a.process > b.process);
  });
  // overlapping neighbours split where their Rabi envelopes are equal
  for (std::size_t j = 0; j + 1 < boxes.size(); ++j) {
    auto& a = boxes[j];
    auto& b = boxes[j + 1];
    if (a.center + a.h <= b.center - b.h) continue;
    double w = a.h + b.h;
    double bd = (b.h * a.center + a.h * b.center) / w;
    double dbd = (b.h * a.dcenter + a.h * b.dcenter) / w;
    if (bd < a.hi) {
      a.hi = bd;
      a.dhi = dbd;
    }
    if (bd > b.lo) {
      b.lo = bd;
      b.dlo = dbd;
    }
  }
  std::vector<Window> out;
  for (const auto& b : boxes)
    if (b.hi > b.lo) out.push_back({b.lo, b.hi, b.dlo, b.dhi, b.process, m});
  return out;
}

void resonance_model(const std::vector<double>& x, const VectorXd& p, const ResonanceContext& ctx,
                     VectorXd& y, MatrixXd* J, bool central_only) {
  const int n = static_cast<int>(x.size());
  y.setZero(n);
  if (J) J->setZero(n, rp_count);
  const double c = p[rp_center], om = p[rp_omega], s = std::abs(p[rp_sigma]);
  const double h1 = p[rp_h1], h0 = p[rp_h0], kap = p[rp_kappa];
  const double S2 = ctx.cloud_sigma * ctx.cloud_sigma;
  const double t_kick = ctx.pulse.start_time + 0.5 * ctx.pulse.duration;
  const double K8 = 8.0 * ctx.species.recoil_freq() * (1.0 - t_kick / ctx.image_time);
  const double Delta = kap * K8;
  const double inv_rt2s = 1.0 / (std::numbers::sqrt2 * s);
  const double nn = kInvSqrt2Pi / s;

  for (int m : ctx.channels) {
    if (central_only && m != 0) continue;
    double hm, dh1 = 0, dh0 = 0;
    if (m == 0) {
      hm = h0;
      dh0 = 1;
    } else if (std::abs(m) == 1) {
      hm = h1;
      dh1 = 1;
    } else {
      dh1 = ctx.pulse.dm2_weight_scale;
      hm = dh1 * h1;
    }
    for (const auto& w : resonance_windows(m, om, ctx)) {
      const double Dmid = 0.5 * (w.lo + w.hi), dDmid = 0.5 * (w.dlo + w.dhi);
      const double rho = S2 > 0 ? std::exp(-0.5 * kap * kap * Dmid * Dmid / S2) : 1.0;
      const double rho_om = S2 > 0 ? -rho * kap * kap * Dmid * dDmid / S2 : 0.0;
      const double rho_k = S2 > 0 ? -rho * kap * Dmid * Dmid / S2 : 0.0;
      const double L = c + kap * w.lo, H = c + kap * w.hi, sh = w.process * Delta;
      for (int i = 0; i < n; ++i) {
        const double u0 = x[i] - L, v0 = x[i] - H, u1 = u0 - sh, v1 = v0 - sh;
        const double F = 0.5 * (std::erf(u1 * inv_rt2s) - std::erf(v1 * inv_rt2s)) -
                         0.5 * (std::erf(u0 * inv_rt2s) - std::erf(v0 * inv_rt2s));
        y[i] += hm * rho * F;
        if (!J) continue;
        const double a1 = nn * std::exp(-0.5 * u1 * u1 / (s * s));
        const double b1 = nn * std::exp(-0.5 * v1 * v1 / (s * s));
        const double a0 = nn * std::exp(-0.5 * u0 * u0 / (s * s));
        const double b0 = nn * std::exp(-0.5 * v0 * v0 / (s * s));
        const double FL = a0 - a1, FH = b1 - b0, Fs = b1 - a1;
        const double Fsig = (-(u1 * a1 - v1 * b1) + (u0 * a0 - v0 * b0)) / s;
        const double Fom = FL * kap * w.dlo + FH * kap * w.dhi;
        const double Fk = FL * w.lo + FH * w.hi + Fs * w.process * K8;
        auto& Jr = *J;
        Jr(i, rp_center) += hm * rho * (FL + FH);
        Jr(i, rp_omega) += hm * (rho_om * F + rho * Fom);
        Jr(i, rp_sigma) += hm * rho * Fsig * (p[rp_sigma] < 0 ? -1.0 : 1.0);
        Jr(i, rp_h1) += dh1 * rho * F;
        Jr(i, rp_h0) += dh0 * rho * F;
        Jr(i, rp_kappa) += hm * (rho_k * F + rho * Fk);
      }
    }
  }
}

namespace {

// Best (h1, h0) by linear least squares for fixed nonlinear parameters; returns the cost.
double linear_heights(const Profile& d, VectorXd& p, const ResonanceContext& ctx, bool use_h1, bool use_h0) {
  VectorXd ya, yb;
  VectorXd q = p;
  q[rp_h1] = 1;
  q[rp_h0] = 0;
  resonance_model(d.x, q, ctx, ya, nullptr);
  q[rp_h1] = 0;
  q[rp_h0] = 1;
  resonance_model(d.x, q, ctx, yb, nullptr);
  Eigen::Map<const VectorXd> Y(d.y.data(), d.y.size());
  MatrixXd A(d.size(), 2);
  A.col(0) = use_h1 ? ya : VectorXd::Zero(d.size());
  A.col(1) = use_h0 ? yb : VectorXd::Zero(d.size());
  Eigen::Vector2d h = A.completeOrthogonalDecomposition().solve(Y);
  p[rp_h1] = h[0];
  p[rp_h0] = h[1];
  return (A * h - Y).squaredNorm();
}

} // namespace

ResonanceFit fit_resonance(const Profile& diff, double cloud_center, const ResonanceContext& ctx,
                           const ResonanceFitOptions& opt) {
  const int m = static_cast<int>(diff.size());
  if (m < 8) throw InvalidConfig("fit_resonance: profile too short");
  const double px = std::abs(diff.x[1] - diff.x[0]);
  const double s0 = std::max(2.0 * px, 0.5 * ctx.species.recoil_velocity() * ctx.image_time);
  const bool has_h1 = std::any_of(ctx.channels.begin(), ctx.channels.end(), [](int c) { return c != 0; });
  const bool has_h0 = std::find(ctx.channels.begin(), ctx.channels.end(), 0) != ctx.channels.end();
  const bool use_h1 = has_h1 && opt.free_h1, use_h0 = has_h0 && opt.free_h0;

  VectorXd p(rp_count);
  p << cloud_center, opt.omega_guess.value_or(0.0), s0, 0.0, 0.0, ctx.kappa;

  double Om = ctx.pulse.rabi_freq;
  for (const auto& ln : ctx.pulse.lines())
    if (ln.amplitude != 0) Om = std::min(Om, std::abs(ln.amplitude) * ctx.pulse.rabi_freq);
  if (!(Om > 0)) throw FitFailed("fit_resonance: pulse has no Rabi frequency", 0.0);

  if (opt.free_omega && !opt.omega_guess) {
    double xe = std::max(std::abs(diff.x.front() - cloud_center), std::abs(diff.x.back() - cloud_center));
    double wmax = xe / ctx.kappa;
    double step = Om / 3.0;
    double best = 1e300, best_w = step;
    for (double w = step / 2; w <= wmax; w += step) {
      VectorXd q = p;
      q[rp_omega] = w;
      double cst = linear_heights(diff, q, ctx, use_h1, use_h0);
      if (cst < best) {
        best = cst;
        best_w = w;
      }
    }
    p[rp_omega] = best_w;
  }
  linear_heights(diff, p, ctx, use_h1, use_h0);

  ParamMask mask;
  mask.full = p;
  mask.free = {rp_center};
  if (opt.free_omega) mask.free.push_back(rp_omega);
  mask.free.push_back(rp_sigma);
  if (use_h1) mask.free.push_back(rp_h1);
  if (use_h0) mask.free.push_back(rp_h0);
  if (opt.free_kappa) mask.free.push_back(rp_kappa);

  VectorXd full_scale(rp_count);
  full_scale << s0, Om, s0, std::abs(p[rp_h1]) + 1.0, std::abs(p[rp_h0]) + 1.0, ctx.kappa;
  ParamMask sm{full_scale, mask.free};

  VectorXd yv;
  MatrixXd Jf;
  ResidualFn f = [&](const VectorXd& q, VectorXd& r, MatrixXd* J) {
    VectorXd full = mask.expand(q);
    resonance_model(diff.x, full, ctx, yv, J ? &Jf : nullptr);
    for (int i = 0; i < m; ++i) r[i] = yv[i] - diff.y[i];
    if (J) *J = mask.columns(Jf);
  };
  LmOptions lo;
  lo.scale = sm.pack();
  auto res = levenberg_marquardt(f, mask.pack(), m, lo);

  ResonanceFit out;
  out.params = mask.expand(res.params);
  out.params[rp_sigma] = std::abs(out.params[rp_sigma]);
  out.params[rp_omega] = std::abs(out.params[rp_omega]);
  out.covariance = mask.expand_cov(res.covariance);
  out.residual_norm = res.residual_norm;
  out.initial_residual_norm = res.initial_residual_norm;
  if (has_h0) {
    VectorXd yc;
    resonance_model(diff.x, out.params, ctx, yc, nullptr, true);
    out.central_amplitude = yc.size() ? yc.cwiseAbs().maxCoeff() : 0.0;
  }
  return out;
}

CalibrationResult calibrate_with_sidebands(const Profile& diff, double omega_m, double t_map,
                                           const AtomSpecies& sp) {
  if (!(omega_m > 0)) throw InvalidConfig("modulation frequency must be positive", {"pulse.modulation_freq_hz"});
  if (!(t_map > 0)) throw InvalidConfig("mapping time must be positive", {"analysis.t_map_s"});
  const double dx0 = omega_m * t_map / (2.0 * sp.k());
  ZeroAreaOptions zo;
  zo.min_separation = 0.4 * dx0;
  auto za = fit_stripes_zero_area(diff, zo);
  if (za.status == FitStatus::failed) throw FitFailed("comb fit failed: " + za.message, za.residual_norm);
  const int n = static_cast<int>(za.stripes.size());
  if (n < 3) throw FitFailed("comb fit needs at least 3 resolved stripes", za.residual_norm);

  std::size_t ref = 0;
  for (int k = 1; k < n; ++k)
    if (std::abs(za.stripes[k].amplitude) > std::abs(za.stripes[ref].amplitude)) ref = k;
  MatrixXd A(n, 2);
  VectorXd b(n);
  for (int k = 0; k < n; ++k) {
    A(k, 0) = 1.0;
    A(k, 1) = std::round((za.stripes[k].center - za.stripes[ref].center) / dx0);
    b[k] = za.stripes[k].center;
  }
  Eigen::Vector2d sol = (A.transpose() * A).ldlt().solve(A.transpose() * b);
  double rss = (A * sol - b).squaredNorm();
  Eigen::Matrix2d cov = (A.transpose() * A).inverse() * (n > 2 ? rss / (n - 2) : 0.0);

  CalibrationResult c;
  c.comb_spacing = std::abs(sol[1]);
  c.comb_spacing_err = std::sqrt(std::max(0.0, cov(1, 1)));
  c.omega_m = omega_m;
  c.kappa = c.comb_spacing / omega_m;
  c.kappa_err = c.comb_spacing_err / omega_m;
  c.t_map_effective = 2.0 * sp.k() * c.kappa;
  c.stripes = n;
  c.method = "zero_area_comb";
  return c;
}

CalibrationResult calibrate_with_sidebands(const Profile& diff, const Profile& off, const FrameMeta& meta,
                                           double t_map) {
  if (!(t_map > 0)) t_map = meta.image_time;
  auto comb = calibrate_with_sidebands(diff, meta.pulse.modulation_freq, t_map, meta.species);
  auto cloud = fit_gaussian(off);
  auto ctx = make_resonance_context(meta, t_map, cloud.sigma, comb.kappa);
  ctx.channels = {0}; // null field: every channel sits on the same lines
  ResonanceFitOptions o;
  o.free_kappa = true;
  o.free_omega = false;
  o.free_h1 = false;
  o.omega_guess = 0.0;
  auto fit = fit_resonance(diff, cloud.center, ctx, o);
  CalibrationResult c = comb;
  c.kappa = fit.params[rp_kappa];
  c.kappa_err = std::sqrt(std::max(0.0, fit.covariance(rp_kappa, rp_kappa)));
  c.t_map_effective = 2.0 * meta.species.k() * c.kappa;
  c.method = "resonance_comb";
  return c;
}

StripeFitResult measure_field(const Profile& diff, const Profile& off, const FrameMeta& meta,
                              const AnalysisConfig& cfg, const std::optional<CalibrationResult>& cal) {
  const auto& sp = meta.species;
  const double t_map = cfg.t_map > 0 ? cfg.t_map : meta.image_time;
  StripeFitResult out = fit_stripes_zero_area(diff);
  double peak = 0;
  for (double v : diff.y) peak = std::max(peak, std::abs(v));
  if (peak == 0) {
    out.status = FitStatus::unresolved;
    out.method = "none";
    out.message = "difference profile is empty";
    return out;
  }
  GaussianFit cloud;
  try {
    cloud = fit_gaussian(off);
  } catch (const FitFailed& e) {
    out.status = FitStatus::failed;
    out.message = std::string("reference profile: ") + e.what();
    return out;
  }
  auto ctx = make_resonance_context(meta, t_map, cloud.sigma,
                                    cal ? std::optional<double>(cal->kappa) : std::nullopt);
  if (out.status == FitStatus::resolved) out.omega_from_separation = out.separation / (2.0 * ctx.kappa);
  if (out.status == FitStatus::unresolved && out.feature_width > 0)
    out.field_upper_bound = out.feature_width / (2.0 * ctx.kappa * sp.gyromag);
  try {
    // the longitudinal (dm = 0) component only enters when it lowers the residual
    // significantly; at small fields it is otherwise degenerate with omega_L
    auto side = ctx;
    side.channels.erase(std::remove(side.channels.begin(), side.channels.end(), 0), side.channels.end());
    auto fit = fit_resonance(diff, cloud.center, side);
    std::optional<ResonanceFit> full;
    try {
      full = fit_resonance(diff, cloud.center, ctx);
    } catch (const FitFailed&) {
    }
    if (full) {
      double dof = std::max(1.0, double(diff.size()) - 5.0);
      double var = full->residual_norm * full->residual_norm / dof;
      double gain = fit.residual_norm * fit.residual_norm - full->residual_norm * full->residual_norm;
      out.central_significance = var > 0 ? gain / var : 0.0;
      if (out.central_significance > cfg.central_threshold) fit = *full;
    }
    out.omega_L = fit.omega_L();
    out.omega_L_err = fit.omega_err();
    out.central_amplitude = fit.central_amplitude;
    out.method = cal ? "resonance_window_calibrated" : "resonance_window";
  } catch (const FitFailed& e) {
    if (out.status != FitStatus::resolved) {
      out.status = FitStatus::failed;
      out.message = e.what();
      return out;
    }
    out.omega_L = out.omega_from_separation;
    out.omega_L_err = out.separation_err / (2.0 * ctx.kappa);
    out.method = "zero_area_separation";
  }
  if (cal && cal->kappa > 0) {
    // calibration uncertainty enters through omega = x / (2 kappa)
    double rel = cal->kappa_err / cal->kappa;
    out.omega_L_err = std::hypot(out.omega_L_err, out.omega_L * rel);
  }
  out.field = out.omega_L / sp.gyromag;
  out.field_err = out.omega_L_err / sp.gyromag;
  return out;
}

} // namespace vstpr
